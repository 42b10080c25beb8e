use std::collections::HashMap;

use super::{Prf, TokenSequence};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with clipped counts: each reference n-gram can be matched at most
/// as many times as it occurs in the reference.
///
/// # Panics
///
/// If `n` is zero.
pub fn rouge_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> Prf {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let cand = ngram_counts(candidate.tokens(), n);
    let refs = ngram_counts(reference.tokens(), n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = refs.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return Prf::degenerate();
    }
    let overlap: usize = cand
        .iter()
        .map(|(gram, c)| (*c).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    Prf::new(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    lcs_by(a, b, |x, y| x == y)
}

fn lcs_by<T>(a: &[T], b: &[T], eq: impl Fn(&T, &T) -> bool) -> usize {
    // one row over the shorter sequence; `diag` carries the previous row's left neighbour
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut stack = [0usize; 64];
    let mut heap;
    let row: &mut [usize] = if b.len() < stack.len() {
        &mut stack[..=b.len()]
    } else {
        heap = vec![0usize; b.len() + 1];
        &mut heap
    };
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if eq(x, y) { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Byte comparison kept inline; tokens are short.
fn same_token(x: &String, y: &String) -> bool {
    x.len() == y.len() && x.bytes().zip(y.bytes()).all(|(p, q)| p == q)
}

/// ROUGE-L from the longest common subsequence of the two token sequences.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::degenerate();
    }
    let l = lcs_by(candidate.tokens(), reference.tokens(), same_token) as f64;
    Prf::new(l / candidate.len() as f64, l / reference.len() as f64)
}
