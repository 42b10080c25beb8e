//! Reference-based automatic metrics.
//!
//! Every metric can be computed against a clinician-written note or against a
//! flattened checklist, so the two reference kinds can be compared side by side.

mod bertscore;
mod embedding;
mod levenshtein;
mod rouge;
mod scoring;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use bertscore::{bertscore, BertScoreError, IdfWeights};
pub use embedding::{read_embedding_file, write_embedding_file, EmbeddingError, EmbeddingMatrix};
pub use levenshtein::{levenshtein, EditDistance};
pub use rouge::{lcs_len, rouge_l, rouge_n};
pub use scoring::{
    flatten_checklist, score_note, scoring_jobs, MetricReport, MetricRow, Reference, ReferenceIndex, ReferenceKind,
    ScoreError,
};
pub use tokenize::{tokenize, SourceKind, TokenSequence};

/// Precision, recall and F1. `degenerate` marks inputs where one side had
/// nothing to count; all three values are then zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            degenerate: false,
        }
    }

    pub fn degenerate() -> Prf {
        Prf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        }
    }
}
