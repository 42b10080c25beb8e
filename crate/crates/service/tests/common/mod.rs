#![allow(dead_code)]

use cceval_core::model::{ChecklistDoc, ChecklistItemDoc, NoteDoc};
use cceval_core::Importance;
use chrono::{DateTime, TimeZone, Utc};

pub fn at(minute: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 10, minute, 0).unwrap()
}

pub fn item(text: &str, importance: Importance, section: Option<&str>) -> ChecklistItemDoc {
    ChecklistItemDoc {
        id: None,
        text: text.into(),
        importance,
        parent_id: None,
        section: section.map(String::from),
    }
}

pub fn checklist_doc(id: &str, items: Vec<ChecklistItemDoc>) -> ChecklistDoc {
    ChecklistDoc {
        checklist_id: id.into(),
        consultation_id: "c1".into(),
        audio_ref: None,
        items,
    }
}

/// A checklist with `n` items spread over three sections.
pub fn big_checklist(id: &str, n: usize, tag: u64) -> ChecklistDoc {
    let items = (0..n)
        .map(|k| {
            item(
                &format!("Fact number {k} recorded during revision {tag} with some padding text"),
                Importance::ALL[k % 3],
                Some(["History", "Examination", "Plan"][k * 3 / n]),
            )
        })
        .collect();
    checklist_doc(id, items)
}

pub fn note_doc(id: &str, text: &str) -> NoteDoc {
    NoteDoc {
        note_id: id.into(),
        consultation_id: "c1".into(),
        kind: Default::default(),
        text: text.into(),
        items: None,
    }
}
