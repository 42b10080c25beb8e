use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditDistance {
    pub distance: usize,
    /// `distance / max(|a|, |b|)` in characters; 0 when both are empty.
    pub normalized: f64,
}

/// Character-level edit distance with unit insert, delete and substitute
/// costs. Operates on raw, case-preserved text.
pub fn levenshtein(a: &str, b: &str) -> EditDistance {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    let distance = row[b.len()];
    let longest = a.len().max(b.len());
    EditDistance {
        distance,
        normalized: if longest == 0 {
            0.0
        } else {
            distance as f64 / longest as f64
        },
    }
}
