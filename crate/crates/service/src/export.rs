//! Spreadsheet view of one session: checklist on the left, itemized note on
//! the right, one shared row index.

use cceval_core::{Checklist, EvaluationSession, ItemizedNote};

pub const EXPORT_HEADER: [&str; 7] = [
    "A: checklist item",
    "B: importance",
    "C: present/absent",
    "D: correct/incorrect (after audio)",
    "E: note item",
    "F: correct/incorrect",
    "G: importance",
];

/// Renders the session as CSV. Checklist items are listed in tree order,
/// each top-level item followed by its sub-items. Section names get their own row in column A;
/// sub-items are prefixed with `- `. Column D holds the post-audio correctness
/// of the note item on the same row.
pub fn export_session_csv(
    session: &EvaluationSession,
    checklist: &Checklist,
    note: &ItemizedNote,
) -> Result<Vec<u8>, csv::Error> {
    let mut left: Vec<[String; 3]> = Vec::new();
    let mut section: Option<&str> = None;
    let ordered = checklist.items().iter().filter(|i| i.is_top_level()).flat_map(|top| {
        std::iter::once(top).chain(
            checklist
                .items()
                .iter()
                .filter(move |i| i.parent_id() == Some(top.id())),
        )
    });
    for item in ordered {
        if item.is_top_level() && item.section().is_some() && item.section() != section {
            section = item.section();
            left.push([section.unwrap_or_default().to_string(), String::new(), String::new()]);
        }
        left.push([
            indent(item.is_top_level(), item.text()),
            item.importance().as_str().to_string(),
            session
                .presence(item.id())
                .map(|p| p.as_str().to_string())
                .unwrap_or_default(),
        ]);
    }

    let right: Vec<[String; 4]> = note
        .items()
        .iter()
        .map(|item| {
            let j = session.note_judgement(item.id());
            [
                j.and_then(|j| j.correctness_post_audio)
                    .map(|c| c.as_str().to_string())
                    .unwrap_or_default(),
                indent(item.is_top_level(), item.text()),
                j.and_then(|j| j.correctness)
                    .map(|c| c.as_str().to_string())
                    .unwrap_or_default(),
                j.and_then(|j| j.importance)
                    .map(|i| i.as_str().to_string())
                    .unwrap_or_default(),
            ]
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EXPORT_HEADER)?;
    for i in 0..left.len().max(right.len()) {
        let l = left.get(i).cloned().unwrap_or_default();
        let r = right.get(i).cloned().unwrap_or_default();
        w.write_record(l.iter().chain(r.iter()))?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

fn indent(top_level: bool, text: &str) -> String {
    if top_level {
        text.to_string()
    } else {
        format!("- {text}")
    }
}
