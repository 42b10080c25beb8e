use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{bertscore, levenshtein, rouge_l, rouge_n, tokenize, BertScoreError, EmbeddingMatrix, SourceKind};
use crate::model::{Checklist, ItemizedNote};

/// Concatenates checklist item texts in authored order, separated by `". "`.
/// An item that already ends with a period is followed by a single space, so
/// periods are never doubled. Section headers are not included.
pub fn flatten_checklist(checklist: &Checklist) -> String {
    let texts: Vec<&str> = checklist.items().iter().map(|i| i.text().trim()).collect();
    let mut out = String::new();
    for (i, text) in texts.iter().enumerate() {
        out.push_str(text);
        if i + 1 < texts.len() {
            out.push_str(if text.ends_with('.') { " " } else { ". " });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Human,
    Checklist,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Human => "human",
            ReferenceKind::Checklist => "checklist",
        }
    }

    pub fn parse(s: &str) -> Option<ReferenceKind> {
        match s {
            "human" => Some(ReferenceKind::Human),
            "checklist" => Some(ReferenceKind::Checklist),
            _ => None,
        }
    }

    fn source_kind(self) -> SourceKind {
        match self {
            ReferenceKind::Human => SourceKind::HumanNote,
            ReferenceKind::Checklist => SourceKind::ChecklistFlattened,
        }
    }
}

/// A reference text and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub id: String,
    pub text: String,
}

impl Reference {
    pub fn checklist(checklist: &Checklist) -> Reference {
        Reference {
            kind: ReferenceKind::Checklist,
            id: checklist.checklist_id().to_string(),
            text: flatten_checklist(checklist),
        }
    }

    pub fn human_note(note: &ItemizedNote) -> Reference {
        Reference {
            kind: ReferenceKind::Human,
            id: note.note_id().to_string(),
            text: note.source_text().to_string(),
        }
    }
}

/// Reference material indexed by consultation id.
#[derive(Debug, Clone, Default)]
pub struct ReferenceIndex<'a> {
    checklists: BTreeMap<&'a str, &'a Checklist>,
    human_notes: BTreeMap<&'a str, &'a ItemizedNote>,
}

impl<'a> ReferenceIndex<'a> {
    /// At most one checklist and one human note per consultation.
    pub fn new(
        checklists: impl IntoIterator<Item = &'a Checklist>,
        human_notes: impl IntoIterator<Item = &'a ItemizedNote>,
    ) -> Result<ReferenceIndex<'a>, ScoreError> {
        let mut index = ReferenceIndex::default();
        for c in checklists {
            if index.checklists.insert(c.consultation_id(), c).is_some() {
                return Err(ScoreError::DuplicateReference {
                    consultation: c.consultation_id().to_string(),
                    kind: ReferenceKind::Checklist,
                });
            }
        }
        for n in human_notes {
            if index.human_notes.insert(n.consultation_id(), n).is_some() {
                return Err(ScoreError::DuplicateReference {
                    consultation: n.consultation_id().to_string(),
                    kind: ReferenceKind::Human,
                });
            }
        }
        Ok(index)
    }

    pub fn reference(&self, note: &ItemizedNote, kind: ReferenceKind) -> Result<Reference, ScoreError> {
        let missing = || ScoreError::MissingReference {
            note: note.note_id().to_string(),
            kind,
        };
        match kind {
            ReferenceKind::Checklist => self
                .checklists
                .get(note.consultation_id())
                .map(|c| Reference::checklist(c))
                .ok_or_else(missing),
            ReferenceKind::Human => self
                .human_notes
                .get(note.consultation_id())
                .map(|n| Reference::human_note(n))
                .ok_or_else(missing),
        }
    }
}

/// One job per (generated note, reference kind), in note order then kind order.
pub fn scoring_jobs<'a>(
    notes: &[&'a ItemizedNote],
    index: &ReferenceIndex<'_>,
    kinds: &[ReferenceKind],
) -> Result<Vec<(&'a ItemizedNote, Reference)>, ScoreError> {
    let mut jobs = Vec::new();
    for note in notes {
        for &kind in kinds {
            jobs.push((*note, index.reference(note, kind)?));
        }
    }
    Ok(jobs)
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no {kind:?} reference for note `{note}`")]
    MissingReference { note: String, kind: ReferenceKind },
    #[error("more than one {kind:?} reference for consultation `{consultation}`")]
    DuplicateReference { consultation: String, kind: ReferenceKind },
    #[error("BERTScore requested for note `{0}` but embeddings are missing")]
    MissingEmbeddings(String),
    #[error("BERTScore for note `{note}`: {source}")]
    BertScore {
        note: String,
        #[source]
        source: BertScoreError,
    },
    #[error("metric report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metric report row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// All metric values for one (note, reference) pair. ROUGE and BERTScore
/// columns hold F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub note_id: String,
    pub reference_kind: ReferenceKind,
    pub reference_id: String,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    pub rouge3_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub bertscore_f: Option<f64>,
    pub levenshtein: usize,
    pub levenshtein_norm: f64,
}

pub fn score_note(
    note_id: &str,
    note_text: &str,
    reference: &Reference,
    embeddings: Option<(&EmbeddingMatrix, &EmbeddingMatrix)>,
    with_bertscore: bool,
) -> Result<MetricRow, ScoreError> {
    let cand = tokenize(note_text, SourceKind::GeneratedNote);
    let refs = tokenize(&reference.text, reference.kind.source_kind());
    let bertscore_f = if with_bertscore {
        let (c, r) = embeddings.ok_or_else(|| ScoreError::MissingEmbeddings(note_id.to_string()))?;
        let prf = bertscore(c, r, None).map_err(|source| ScoreError::BertScore {
            note: note_id.to_string(),
            source,
        })?;
        Some(prf.f1)
    } else {
        None
    };
    let edit = levenshtein(note_text, &reference.text);
    Ok(MetricRow {
        note_id: note_id.to_string(),
        reference_kind: reference.kind,
        reference_id: reference.id.clone(),
        rouge1_f: rouge_n(&cand, &refs, 1).f1,
        rouge2_f: rouge_n(&cand, &refs, 2).f1,
        rouge3_f: rouge_n(&cand, &refs, 3).f1,
        rouge_l_f: rouge_l(&cand, &refs).f1,
        bertscore_f,
        levenshtein: edit.distance,
        levenshtein_norm: edit.normalized,
    })
}

/// Metric rows for a corpus, kept sorted by (note id, reference kind).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

const HEADER: [&str; 10] = [
    "note_id",
    "reference_kind",
    "reference_id",
    "rouge1_f",
    "rouge2_f",
    "rouge3_f",
    "rougeL_f",
    "bertscore_f",
    "levenshtein",
    "levenshtein_norm",
];

impl MetricReport {
    pub fn new(mut rows: Vec<MetricRow>) -> MetricReport {
        rows.sort_by(|a, b| {
            (a.note_id.as_str(), a.reference_kind).cmp(&(b.note_id.as_str(), b.reference_kind))
        });
        MetricReport { rows }
    }

    /// Writes the report as CSV. `comment`, when given, becomes a leading `# ` line.
    pub fn write_csv<W: Write>(&self, mut writer: W, comment: Option<&str>) -> Result<(), ScoreError> {
        if let Some(c) = comment {
            writeln!(writer, "# {c}").map_err(csv::Error::from)?;
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.note_id.clone(),
                r.reference_kind.as_str().to_string(),
                r.reference_id.clone(),
                r.rouge1_f.to_string(),
                r.rouge2_f.to_string(),
                r.rouge3_f.to_string(),
                r.rouge_l_f.to_string(),
                r.bertscore_f.map(|v| v.to_string()).unwrap_or_default(),
                r.levenshtein.to_string(),
                r.levenshtein_norm.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<MetricReport, ScoreError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(HEADER) {
            return Err(ScoreError::Row {
                row: 0,
                reason: format!("expected header {}", HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let bad = |reason: String| ScoreError::Row { row, reason };
            let float = |idx: usize| -> Result<f64, ScoreError> {
                record[idx]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("{}: {e}", HEADER[idx])))
            };
            rows.push(MetricRow {
                note_id: record[0].to_string(),
                reference_kind: ReferenceKind::parse(&record[1])
                    .ok_or_else(|| bad(format!("unknown reference kind `{}`", &record[1])))?,
                reference_id: record[2].to_string(),
                rouge1_f: float(3)?,
                rouge2_f: float(4)?,
                rouge3_f: float(5)?,
                rouge_l_f: float(6)?,
                bertscore_f: if record[7].is_empty() { None } else { Some(float(7)?) },
                levenshtein: record[8]
                    .parse()
                    .map_err(|e| bad(format!("levenshtein: {e}")))?,
                levenshtein_norm: float(9)?,
            });
        }
        Ok(MetricReport::new(rows))
    }
}
