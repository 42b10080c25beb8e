//! Domain types for checklists, itemized notes and evaluation sessions.
//!
//! Raw JSON documents (`*Doc` types) are deserialized first and then turned into
//! validated values through `validate_*`. Validated values have private fields
//! and serialize back into the same document shape, so
//! `serialize -> parse -> validate` round-trips.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::itemizer::{self, ItemizeError, SplitConfig};

/// Clinical importance of a fact or note statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    Irrelevant,
    NonCritical,
    Critical,
}

impl Importance {
    pub const ALL: [Importance; 3] = [
        Importance::Irrelevant,
        Importance::NonCritical,
        Importance::Critical,
    ];

    /// Ordinal rank used for ordinal agreement: irrelevant 0, non-critical 1, critical 2.
    pub fn rank(self) -> u8 {
        match self {
            Importance::Irrelevant => 0,
            Importance::NonCritical => 1,
            Importance::Critical => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Importance::Irrelevant => "irrelevant",
            Importance::NonCritical => "non_critical",
            Importance::Critical => "critical",
        }
    }

    pub fn parse(s: &str) -> Option<Importance> {
        Importance::ALL.into_iter().find(|i| i.as_str() == s)
    }
}

impl fmt::Display for Importance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
}

impl Correctness {
    pub fn as_str(self) -> &'static str {
        match self {
            Correctness::Correct => "correct",
            Correctness::Incorrect => "incorrect",
        }
    }
}

/// Whether a checklist fact is fully reported in the generated note.
/// Partial reporting counts as `Absent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Present,
    Absent,
}

impl Presence {
    pub fn as_str(self) -> &'static str {
        match self {
            Presence::Present => "present",
            Presence::Absent => "absent",
        }
    }
}

/// Evaluation phase. Transitions only move forward, one step at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreAudio,
    PostAudio,
    Submitted,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::PreAudio => Some(Phase::PostAudio),
            Phase::PostAudio => Some(Phase::Submitted),
            Phase::Submitted => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreAudio => "pre_audio",
            Phase::PostAudio => "post_audio",
            Phase::Submitted => "submitted",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("invalid id `{0}`: ids must be non-empty and use only [A-Za-z0-9._-]")]
    InvalidId(String),
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("item `{item}` references missing parent `{parent}`")]
    DanglingParent { item: String, parent: String },
    #[error("item `{item}` is nested under `{parent}`, which is itself a sub-item")]
    NestingTooDeep { item: String, parent: String },
    #[error("item at position {position} has empty text")]
    EmptyText { position: usize },
    #[error("checklist has no items")]
    EmptyChecklist,
    #[error("note has no items")]
    EmptyNote,
    #[error("item `{item}` breaks sentence ordering (indices must start at 0 and never decrease or skip)")]
    SentenceOrder { item: String },
    #[error("sentence {sentence_index} must start with exactly one top-level item")]
    SentenceGroup { sentence_index: usize },
    #[error("item `{item}` must have the first item of its sentence as parent, found `{parent}`")]
    ParentOutsideSentence { item: String, parent: String },
    #[error("item texts are not drawn from the note source text (first mismatch in `{item}`)")]
    SourceMismatch { item: String },
    #[error("itemization failed: {0}")]
    Itemize(#[from] ItemizeError),
    #[error("checklist consultation `{checklist}` does not match note consultation `{note}`")]
    ConsultationMismatch { checklist: String, note: String },
    #[error("session refers to {kind} `{expected}` but `{found}` was supplied")]
    ReferenceMismatch {
        kind: &'static str,
        expected: String,
        found: String,
    },
    #[error("judgement keyed `{key}` carries id `{id}`")]
    KeyMismatch { key: String, id: String },
    #[error("judgement for unknown note item `{0}`")]
    UnknownNoteItem(String),
    #[error("judgement for unknown checklist item `{0}`")]
    UnknownChecklistItem(String),
    #[error("phase {phase} requires marks for: {}", missing.join(", "))]
    IncompleteForPhase { phase: Phase, missing: Vec<String> },
    #[error("post-audio correctness set on note item `{0}` before the post-audio phase")]
    PrematurePostAudio(String),
    #[error("pre-audio mark on `{0}` cannot change after the pre-audio phase")]
    PreAudioMarkLocked(String),
    #[error("session is submitted and can no longer change")]
    SessionClosed,
    #[error("cannot move from {from} to {to}")]
    PhaseTransition { from: Phase, to: Phase },
    #[error("session timestamps are inconsistent with phase {0}")]
    Timestamps(Phase),
}

pub(crate) fn check_id(id: &str) -> Result<(), ValidationError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(ValidationError::InvalidId(id.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Checklists
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistItemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub importance: Importance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistDoc {
    pub checklist_id: String,
    pub consultation_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
    pub items: Vec<ChecklistItemDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChecklistItem {
    id: String,
    text: String,
    importance: Importance,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    section: Option<String>,
}

impl ChecklistItem {
    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn text(&self) -> &str {
        &self.text
    }
    pub fn importance(&self) -> Importance {
        self.importance
    }
    pub fn parent_id(&self) -> Option<&str> {
        self.parent_id.as_deref()
    }
    pub fn section(&self) -> Option<&str> {
        self.section.as_deref()
    }
    pub fn is_top_level(&self) -> bool {
        self.parent_id.is_none()
    }
}

/// A validated consultation checklist. Items keep their authored order;
/// section headers live on the items and are never counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Checklist {
    checklist_id: String,
    consultation_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_ref: Option<String>,
    items: Vec<ChecklistItem>,
}

impl Checklist {
    pub fn checklist_id(&self) -> &str {
        &self.checklist_id
    }
    pub fn consultation_id(&self) -> &str {
        &self.consultation_id
    }
    pub fn audio_ref(&self) -> Option<&str> {
        self.audio_ref.as_deref()
    }
    pub fn items(&self) -> &[ChecklistItem] {
        &self.items
    }
    /// Number of checklist items, sub-items included.
    pub fn len(&self) -> usize {
        self.items.len()
    }
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
    pub fn item(&self, id: &str) -> Option<&ChecklistItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn to_doc(&self) -> ChecklistDoc {
        ChecklistDoc {
            checklist_id: self.checklist_id.clone(),
            consultation_id: self.consultation_id.clone(),
            audio_ref: self.audio_ref.clone(),
            items: self
                .items
                .iter()
                .map(|i| ChecklistItemDoc {
                    id: Some(i.id.clone()),
                    text: i.text.clone(),
                    importance: i.importance,
                    parent_id: i.parent_id.clone(),
                    section: i.section.clone(),
                })
                .collect(),
        }
    }
}

/// Validates a checklist document.
///
/// Missing ids are generated from position as `section.item.sub`: sections are
/// numbered from 1 in order of first appearance (0 when an item has no
/// section), top-level items from 1 within their section, and sub-items from 1
/// under their parent (0 for the top-level item itself). Sub-items may refer to
/// generated parent ids.
pub fn validate_checklist(doc: ChecklistDoc) -> Result<Checklist, ValidationError> {
    check_id(&doc.checklist_id)?;
    check_id(&doc.consultation_id)?;
    if doc.items.is_empty() {
        return Err(ValidationError::EmptyChecklist);
    }
    for (position, item) in doc.items.iter().enumerate() {
        if item.text.trim().is_empty() {
            return Err(ValidationError::EmptyText { position });
        }
    }

    // Pass 1: positional coordinates and ids of top-level items.
    let mut section_numbers: HashMap<&str, usize> = HashMap::new();
    let mut per_section_count: HashMap<usize, usize> = HashMap::new();
    let mut coords: Vec<Option<(usize, usize)>> = vec![None; doc.items.len()];
    let mut ids: Vec<Option<String>> = vec![None; doc.items.len()];
    for (pos, item) in doc.items.iter().enumerate() {
        if item.parent_id.is_some() {
            continue;
        }
        let section = match item.section.as_deref() {
            None => 0,
            Some(name) => {
                let next = section_numbers.len() + 1;
                *section_numbers.entry(name).or_insert(next)
            }
        };
        let count = per_section_count.entry(section).or_insert(0);
        *count += 1;
        coords[pos] = Some((section, *count));
        ids[pos] = Some(
            item.id
                .clone()
                .unwrap_or_else(|| format!("{section}.{count}.0")),
        );
    }

    let top_level: HashMap<String, usize> = ids
        .iter()
        .enumerate()
        .filter_map(|(pos, id)| id.clone().map(|id| (id, pos)))
        .collect();
    let explicit_sub_ids: HashSet<&str> = doc
        .items
        .iter()
        .filter(|i| i.parent_id.is_some())
        .filter_map(|i| i.id.as_deref())
        .collect();

    // Pass 2: sub-items.
    let mut child_count: HashMap<usize, usize> = HashMap::new();
    for (pos, item) in doc.items.iter().enumerate() {
        let Some(parent) = item.parent_id.as_deref() else {
            continue;
        };
        let display = item.id.clone().unwrap_or_else(|| format!("#{pos}"));
        let Some(&parent_pos) = top_level.get(parent) else {
            if explicit_sub_ids.contains(parent) {
                return Err(ValidationError::NestingTooDeep {
                    item: display,
                    parent: parent.to_string(),
                });
            }
            return Err(ValidationError::DanglingParent {
                item: display,
                parent: parent.to_string(),
            });
        };
        let (section, index) = coords[parent_pos].expect("top-level items have coordinates");
        let n = child_count.entry(parent_pos).or_insert(0);
        *n += 1;
        ids[pos] = Some(
            item.id
                .clone()
                .unwrap_or_else(|| format!("{section}.{index}.{n}")),
        );
    }

    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(doc.items.len());
    for (item, id) in doc.items.into_iter().zip(ids) {
        let id = id.expect("every item received an id");
        check_id(&id)?;
        if !seen.insert(id.clone()) {
            return Err(ValidationError::DuplicateId(id));
        }
        items.push(ChecklistItem {
            id,
            text: item.text,
            importance: item.importance,
            parent_id: item.parent_id,
            section: item.section,
        });
    }

    Ok(Checklist {
        checklist_id: doc.checklist_id,
        consultation_id: doc.consultation_id,
        audio_ref: doc.audio_ref,
        items,
    })
}

// ---------------------------------------------------------------------------
// Notes
// ---------------------------------------------------------------------------

/// Whether a note was produced by the system under evaluation or written by a clinician.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    #[default]
    Generated,
    Human,
}

impl NoteKind {
    fn is_generated(&self) -> bool {
        *self == NoteKind::Generated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteItemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

/// A note document: raw `text`, optionally with pre-computed `items`.
/// Without items, the text is itemized with the active splitting config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteDoc {
    pub note_id: String,
    pub consultation_id: String,
    #[serde(default, skip_serializing_if = "NoteKind::is_generated")]
    pub kind: NoteKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<NoteItemDoc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NoteItem {
    id: String,
    text: String,
    sentence_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
}

impl NoteItem {
    pub(crate) fn new(
        id: String,
        text: String,
        sentence_index: usize,
        parent_id: Option<String>,
    ) -> NoteItem {
        NoteItem {
            id,
            text,
            sentence_index,
            parent_id,
        }
    }
    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn text(&self) -> &str {
        &self.text
    }
    pub fn sentence_index(&self) -> usize {
        self.sentence_index
    }
    pub fn parent_id(&self) -> Option<&str> {
        self.parent_id.as_deref()
    }
    pub fn is_top_level(&self) -> bool {
        self.parent_id.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemizedNote {
    note_id: String,
    consultation_id: String,
    #[serde(skip_serializing_if = "NoteKind::is_generated")]
    kind: NoteKind,
    #[serde(rename = "text")]
    source_text: String,
    items: Vec<NoteItem>,
}

impl ItemizedNote {
    pub fn note_id(&self) -> &str {
        &self.note_id
    }
    pub fn consultation_id(&self) -> &str {
        &self.consultation_id
    }
    pub fn kind(&self) -> NoteKind {
        self.kind
    }
    pub fn source_text(&self) -> &str {
        &self.source_text
    }
    pub fn items(&self) -> &[NoteItem] {
        &self.items
    }
    /// Number of generated items, sub-items included.
    pub fn len(&self) -> usize {
        self.items.len()
    }
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
    pub fn item(&self, id: &str) -> Option<&NoteItem> {
        self.items.iter().find(|i| i.id == id)
    }
    /// Text of the full sentence an item belongs to, items joined in order.
    pub fn sentence_items(&self, sentence_index: usize) -> impl Iterator<Item = &NoteItem> {
        self.items
            .iter()
            .filter(move |i| i.sentence_index == sentence_index)
    }

    pub fn to_doc(&self) -> NoteDoc {
        NoteDoc {
            note_id: self.note_id.clone(),
            consultation_id: self.consultation_id.clone(),
            kind: self.kind,
            text: self.source_text.clone(),
            items: Some(
                self.items
                    .iter()
                    .map(|i| NoteItemDoc {
                        id: Some(i.id.clone()),
                        text: i.text.clone(),
                        sentence_index: i.sentence_index,
                        parent_id: i.parent_id.clone(),
                    })
                    .collect(),
            ),
        }
    }
}

/// Validates a note document, itemizing its text when no items are supplied.
pub fn validate_note(doc: NoteDoc, config: &SplitConfig) -> Result<ItemizedNote, ValidationError> {
    check_id(&doc.note_id)?;
    check_id(&doc.consultation_id)?;
    let items = match doc.items {
        None => itemizer::itemize(&doc.text, config)?,
        Some(items) => validate_note_items(items, &doc.text)?,
    };
    Ok(ItemizedNote {
        note_id: doc.note_id,
        consultation_id: doc.consultation_id,
        kind: doc.kind,
        source_text: doc.text,
        items,
    })
}

fn validate_note_items(docs: Vec<NoteItemDoc>, source: &str) -> Result<Vec<NoteItem>, ValidationError> {
    if docs.is_empty() {
        return Err(ValidationError::EmptyNote);
    }
    let mut items: Vec<NoteItem> = Vec::with_capacity(docs.len());
    let mut seen = HashSet::new();
    let mut group_top: Option<(usize, String)> = None;
    let mut position_in_group = 0usize;
    for (position, doc) in docs.into_iter().enumerate() {
        if doc.text.trim().is_empty() {
            return Err(ValidationError::EmptyText { position });
        }
        let new_group = match &group_top {
            None => {
                if doc.sentence_index != 0 {
                    return Err(ValidationError::SentenceOrder {
                        item: doc.id.unwrap_or_else(|| format!("#{position}")),
                    });
                }
                true
            }
            Some((current, _)) if doc.sentence_index == *current => false,
            Some((current, _)) if doc.sentence_index == current + 1 => true,
            Some(_) => {
                return Err(ValidationError::SentenceOrder {
                    item: doc.id.unwrap_or_else(|| format!("#{position}")),
                })
            }
        };
        position_in_group = if new_group { 0 } else { position_in_group + 1 };
        let id = doc
            .id
            .unwrap_or_else(|| format!("{}.{}", doc.sentence_index, position_in_group));
        check_id(&id)?;
        if !seen.insert(id.clone()) {
            return Err(ValidationError::DuplicateId(id));
        }

        if new_group {
            if doc.parent_id.is_some() {
                return Err(ValidationError::SentenceGroup {
                    sentence_index: doc.sentence_index,
                });
            }
            group_top = Some((doc.sentence_index, id.clone()));
        } else {
            let top = &group_top.as_ref().expect("group started").1;
            match doc.parent_id.as_deref() {
                None => {
                    return Err(ValidationError::SentenceGroup {
                        sentence_index: doc.sentence_index,
                    })
                }
                Some(p) if p == top => {}
                Some(p) if seen.contains(p) => {
                    return Err(ValidationError::ParentOutsideSentence {
                        item: id,
                        parent: p.to_string(),
                    })
                }
                Some(p) => {
                    return Err(ValidationError::DanglingParent {
                        item: id,
                        parent: p.to_string(),
                    })
                }
            }
        }
        items.push(NoteItem {
            id,
            text: doc.text,
            sentence_index: doc.sentence_index,
            parent_id: doc.parent_id,
        });
    }

    // Item alphanumerics must appear, in order, within the source alphanumerics.
    let mut source_chars = source.chars().filter(|c| c.is_alphanumeric());
    for item in &items {
        for c in item.text.chars().filter(|c| c.is_alphanumeric()) {
            if !source_chars.by_ref().any(|s| s == c) {
                return Err(ValidationError::SourceMismatch {
                    item: item.id.clone(),
                });
            }
        }
    }
    Ok(items)
}

pub(crate) fn build_itemized_note(
    note_id: String,
    consultation_id: String,
    source_text: String,
    items: Vec<NoteItem>,
) -> ItemizedNote {
    ItemizedNote {
        note_id,
        consultation_id,
        kind: NoteKind::Generated,
        source_text,
        items,
    }
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

/// Judgement on one note item. `correctness` and `importance` may be filled in
/// separate passes; both are required before the session leaves pre-audio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteItemJudgement {
    pub note_item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Importance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_post_audio: Option<Correctness>,
}

impl NoteItemJudgement {
    pub fn is_complete(&self) -> bool {
        self.correctness.is_some() && self.importance.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistItemJudgement {
    pub checklist_item_id: String,
    pub presence: Presence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionTimestamps {
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_audio_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<DateTime<Utc>>,
}

impl SessionTimestamps {
    fn consistent_with(&self, phase: Phase) -> bool {
        let shape_ok = match phase {
            Phase::PreAudio => self.post_audio_at.is_none() && self.submitted_at.is_none(),
            Phase::PostAudio => self.post_audio_at.is_some() && self.submitted_at.is_none(),
            Phase::Submitted => self.post_audio_at.is_some() && self.submitted_at.is_some(),
        };
        let order_ok = match (self.post_audio_at, self.submitted_at) {
            (Some(p), Some(s)) => self.created_at <= p && p <= s,
            (Some(p), None) => self.created_at <= p,
            _ => true,
        };
        shape_ok && order_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDoc {
    pub session_id: String,
    pub annotator_id: String,
    pub checklist_id: String,
    pub note_id: String,
    pub phase: Phase,
    #[serde(default)]
    pub note_judgements: BTreeMap<String, NoteItemJudgement>,
    #[serde(default)]
    pub checklist_judgements: BTreeMap<String, ChecklistItemJudgement>,
    pub timestamps: SessionTimestamps,
}

/// One annotator's judgements on one note against one checklist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvaluationSession {
    pub(crate) session_id: String,
    pub(crate) annotator_id: String,
    pub(crate) checklist_id: String,
    pub(crate) note_id: String,
    pub(crate) phase: Phase,
    pub(crate) note_judgements: BTreeMap<String, NoteItemJudgement>,
    pub(crate) checklist_judgements: BTreeMap<String, ChecklistItemJudgement>,
    pub(crate) timestamps: SessionTimestamps,
}

impl EvaluationSession {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }
    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }
    pub fn checklist_id(&self) -> &str {
        &self.checklist_id
    }
    pub fn note_id(&self) -> &str {
        &self.note_id
    }
    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn note_judgements(&self) -> &BTreeMap<String, NoteItemJudgement> {
        &self.note_judgements
    }
    pub fn checklist_judgements(&self) -> &BTreeMap<String, ChecklistItemJudgement> {
        &self.checklist_judgements
    }
    pub fn timestamps(&self) -> &SessionTimestamps {
        &self.timestamps
    }
    pub fn note_judgement(&self, note_item_id: &str) -> Option<&NoteItemJudgement> {
        self.note_judgements.get(note_item_id)
    }
    pub fn presence(&self, checklist_item_id: &str) -> Option<Presence> {
        self.checklist_judgements
            .get(checklist_item_id)
            .map(|j| j.presence)
    }

    pub fn to_doc(&self) -> SessionDoc {
        SessionDoc {
            session_id: self.session_id.clone(),
            annotator_id: self.annotator_id.clone(),
            checklist_id: self.checklist_id.clone(),
            note_id: self.note_id.clone(),
            phase: self.phase,
            note_judgements: self.note_judgements.clone(),
            checklist_judgements: self.checklist_judgements.clone(),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Ids of items still lacking a pre-audio mark: note items first (note order),
    /// then checklist items (checklist order).
    pub fn missing_marks(&self, checklist: &Checklist, note: &ItemizedNote) -> Vec<String> {
        let notes = note.items().iter().filter(|i| {
            !self
                .note_judgements
                .get(i.id())
                .is_some_and(NoteItemJudgement::is_complete)
        });
        let facts = checklist
            .items()
            .iter()
            .filter(|i| !self.checklist_judgements.contains_key(i.id()));
        notes
            .map(|i| i.id().to_string())
            .chain(facts.map(|i| i.id().to_string()))
            .collect()
    }
}

pub(crate) fn check_pair(checklist: &Checklist, note: &ItemizedNote) -> Result<(), ValidationError> {
    if checklist.consultation_id() != note.consultation_id() {
        return Err(ValidationError::ConsultationMismatch {
            checklist: checklist.consultation_id().to_string(),
            note: note.consultation_id().to_string(),
        });
    }
    Ok(())
}

/// Validates a session document against the checklist and note it refers to.
pub fn validate_session(
    doc: SessionDoc,
    checklist: &Checklist,
    note: &ItemizedNote,
) -> Result<EvaluationSession, ValidationError> {
    check_id(&doc.session_id)?;
    check_id(&doc.annotator_id)?;
    check_pair(checklist, note)?;
    if doc.checklist_id != checklist.checklist_id() {
        return Err(ValidationError::ReferenceMismatch {
            kind: "checklist",
            expected: doc.checklist_id,
            found: checklist.checklist_id().to_string(),
        });
    }
    if doc.note_id != note.note_id() {
        return Err(ValidationError::ReferenceMismatch {
            kind: "note",
            expected: doc.note_id,
            found: note.note_id().to_string(),
        });
    }
    for (key, judgement) in &doc.note_judgements {
        if *key != judgement.note_item_id {
            return Err(ValidationError::KeyMismatch {
                key: key.clone(),
                id: judgement.note_item_id.clone(),
            });
        }
        if note.item(key).is_none() {
            return Err(ValidationError::UnknownNoteItem(key.clone()));
        }
        if doc.phase == Phase::PreAudio && judgement.correctness_post_audio.is_some() {
            return Err(ValidationError::PrematurePostAudio(key.clone()));
        }
    }
    for (key, judgement) in &doc.checklist_judgements {
        if *key != judgement.checklist_item_id {
            return Err(ValidationError::KeyMismatch {
                key: key.clone(),
                id: judgement.checklist_item_id.clone(),
            });
        }
        if checklist.item(key).is_none() {
            return Err(ValidationError::UnknownChecklistItem(key.clone()));
        }
    }
    if !doc.timestamps.consistent_with(doc.phase) {
        return Err(ValidationError::Timestamps(doc.phase));
    }

    let session = EvaluationSession {
        session_id: doc.session_id,
        annotator_id: doc.annotator_id,
        checklist_id: doc.checklist_id,
        note_id: doc.note_id,
        phase: doc.phase,
        note_judgements: doc.note_judgements,
        checklist_judgements: doc.checklist_judgements,
        timestamps: doc.timestamps,
    };
    if session.phase >= Phase::PostAudio {
        let missing = session.missing_marks(checklist, note);
        if !missing.is_empty() {
            return Err(ValidationError::IncompleteForPhase {
                phase: session.phase,
                missing,
            });
        }
    }
    Ok(session)
}
