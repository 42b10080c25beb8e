//! Checklist-grounded evaluation of generated consultation notes.
//!
//! The crate is organised around the evaluation workflow:
//!
//! - [`model`]: checklists, itemized notes, judgements and evaluation sessions,
//!   plus validation of their JSON documents.
//! - [`itemizer`]: deterministic sentence and fragment splitting of raw notes.
//! - [`human_metrics`]: precision, recall, human score, fact coverage and
//!   post-audio revision statistics.
//! - [`agreement`]: Krippendorff's alpha (nominal, ordinal, interval) with
//!   missing data, pairwise and joint.
//! - [`auto_metrics`]: ROUGE-N/L, Levenshtein and BERTScore matching against a
//!   human note or a flattened checklist.
//! - [`stats`]: Pearson and Spearman correlation with permutation or
//!   t-distribution p-values.
//! - [`study`] and [`report`]: glue that turns a folder of sessions into the
//!   tables reported by an evaluation study.

pub mod agreement;
pub mod auto_metrics;
pub mod human_metrics;
pub mod itemizer;
pub mod model;
pub mod report;
pub mod session;
pub mod stats;
pub mod study;

pub use model::{
    Checklist, ChecklistItem, Correctness, EvaluationSession, Importance, ItemizedNote, NoteItem,
    Phase, Presence, ValidationError,
};

/// Version of this toolkit, embedded in every generated report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
