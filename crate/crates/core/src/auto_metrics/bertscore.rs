//! Greedy cosine matching over contextual token embeddings.
//!
//! Recall averages, over reference tokens, the best cosine similarity to any
//! candidate token; precision does the same over candidate tokens. Optional
//! idf weights turn both averages into weighted means. Scores are raw (no
//! baseline rescaling).

use std::collections::HashMap;

use thiserror::Error;

use super::{EmbeddingMatrix, Prf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BertScoreError {
    #[error("candidate has dim {candidate}, reference has dim {reference}")]
    DimensionMismatch { candidate: usize, reference: usize },
    #[error("token `{0}` has a zero vector")]
    ZeroVector(String),
    #[error("{0} embedding matrix is empty")]
    Empty(&'static str),
    #[error("idf weight for `{0}` is negative or not finite")]
    InvalidWeight(String),
    #[error("{0} tokens carry zero total idf weight")]
    ZeroTotalWeight(&'static str),
}

/// Per-token idf weights; tokens not in the map get `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfWeights {
    pub weights: HashMap<String, f64>,
    pub default: f64,
}

impl IdfWeights {
    fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.default)
    }

    fn check(&self) -> Result<(), BertScoreError> {
        for (token, w) in &self.weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(BertScoreError::InvalidWeight(token.clone()));
            }
        }
        if !(self.default.is_finite() && self.default >= 0.0) {
            return Err(BertScoreError::InvalidWeight("<default>".into()));
        }
        Ok(())
    }
}

fn unit_rows(m: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>, BertScoreError> {
    (0..m.len())
        .map(|i| {
            let row: Vec<f64> = m.row(i).iter().map(|v| f64::from(*v)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(BertScoreError::ZeroVector(m.tokens()[i].clone()));
            }
            Ok(row.into_iter().map(|v| v / norm).collect())
        })
        .collect()
}

fn weighted_best_match(
    sims: &[Vec<f64>],
    tokens: &[String],
    idf: Option<&IdfWeights>,
    side: &'static str,
) -> Result<f64, BertScoreError> {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for (row, token) in sims.iter().zip(tokens) {
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = idf.map_or(1.0, |idf| idf.weight(token));
        total += w * best;
        weight_sum += w;
    }
    if weight_sum == 0.0 {
        return Err(BertScoreError::ZeroTotalWeight(side));
    }
    Ok(total / weight_sum)
}

pub fn bertscore(
    candidate: &EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    idf: Option<&IdfWeights>,
) -> Result<Prf, BertScoreError> {
    if candidate.dim() != reference.dim() {
        return Err(BertScoreError::DimensionMismatch {
            candidate: candidate.dim(),
            reference: reference.dim(),
        });
    }
    if candidate.is_empty() {
        return Err(BertScoreError::Empty("candidate"));
    }
    if reference.is_empty() {
        return Err(BertScoreError::Empty("reference"));
    }
    if let Some(idf) = idf {
        idf.check()?;
    }
    let cand = unit_rows(candidate)?;
    let refs = unit_rows(reference)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // sims[i][j]: candidate i vs reference j.
    let sims: Vec<Vec<f64>> = cand
        .iter()
        .map(|c| refs.iter().map(|r| dot(c, r)).collect())
        .collect();
    let transposed: Vec<Vec<f64>> = (0..refs.len())
        .map(|j| sims.iter().map(|row| row[j]).collect())
        .collect();

    let precision = weighted_best_match(&sims, candidate.tokens(), idf, "candidate")?;
    let recall = weighted_best_match(&transposed, reference.tokens(), idf, "reference")?;
    Ok(Prf::new(precision, recall))
}
