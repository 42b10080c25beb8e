//! Pearson and Spearman correlation with significance.
//!
//! P-values are two-sided. For n ≤ 7 every one of the n! orderings of `y` is
//! enumerated; for 8 ≤ n ≤ 10 a seeded Monte Carlo permutation test is used;
//! beyond that the usual t-approximation with n − 2 degrees of freedom.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::auto_metrics::{MetricReport, MetricRow, ReferenceKind};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
pub const EXACT_MAX_N: usize = 7;
pub const MONTE_CARLO_MAX_N: usize = 10;
pub const MONTE_CARLO_DRAWS: usize = 100_000;
pub const PERMUTATION_SEED: u64 = 0x5EED_C0DE_2024;
/// A permuted statistic counts as "at least as extreme" when it is within this
/// distance of the observed one.
pub const PERMUTATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum StatsError {
    #[error("input contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("note ids do not align; missing human score: {missing_human:?}; missing metric rows: {missing_metric:?}")]
    Alignment {
        missing_human: Vec<String>,
        missing_metric: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    MonteCarloPermutation,
    TDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Method,
    pub significant: bool,
    pub p_method: PValueMethod,
}

/// Ascending ranks starting at 1; tied values share the mean of their ranks.
pub fn rankdata(x: &[f64]) -> Result<Vec<f64>, StatsError> {
    check_finite(x)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    Ok(ranks)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    correlate(x, y, Method::Pearson)
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    correlate(&rankdata(x)?, &rankdata(y)?, Method::Spearman)
}

fn check_finite(x: &[f64]) -> Result<(), StatsError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    check_finite(x)?;
    check_finite(y)?;
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples(x.len()));
    }
    Ok(())
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

struct Centered {
    x: Vec<f64>,
    y: Vec<f64>,
    denom: f64,
}

impl Centered {
    fn new(x: &[f64], y: &[f64]) -> Result<Centered, StatsError> {
        let x = centered(x);
        let y = centered(y);
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        if sxx == 0.0 || syy == 0.0 {
            return Err(StatsError::ZeroVariance);
        }
        Ok(Centered { denom: (sxx * syy).sqrt(), x, y })
    }

    fn r_with(&self, y: &[f64]) -> f64 {
        let sxy: f64 = self.x.iter().zip(y).map(|(a, b)| a * b).sum();
        (sxy / self.denom).clamp(-1.0, 1.0)
    }

    fn r(&self) -> f64 {
        self.r_with(&self.y)
    }
}

fn correlate(x: &[f64], y: &[f64], method: Method) -> Result<CorrelationResult, StatsError> {
    let c = Centered::new(x, y)?;
    let r = c.r();
    let n = x.len();
    let (p_value, p_method) = if n <= EXACT_MAX_N {
        (exact_permutation_p(&c, r), PValueMethod::ExactPermutation)
    } else if n <= MONTE_CARLO_MAX_N {
        (monte_carlo_p(&c, r), PValueMethod::MonteCarloPermutation)
    } else {
        (t_test_p(r, n), PValueMethod::TDistribution)
    };
    Ok(CorrelationResult {
        coefficient: r,
        p_value,
        n,
        method,
        significant: p_value < SIGNIFICANCE_LEVEL,
        p_method,
    })
}

fn at_least_as_extreme(r_perm: f64, r_obs: f64) -> bool {
    r_perm.abs() >= r_obs.abs() - PERMUTATION_TOLERANCE
}

/// Fraction of all n! orderings of `y` whose |r| is at least the observed |r|.
fn exact_permutation_p(c: &Centered, r_obs: f64) -> f64 {
    // Heap's algorithm, iterative
    let n = c.y.len();
    let mut y = c.y.clone();
    let mut stack = vec![0usize; n];
    let mut hits = u64::from(at_least_as_extreme(c.r_with(&y), r_obs));
    let mut total = 1u64;
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                y.swap(0, i);
            } else {
                y.swap(stack[i], i);
            }
            total += 1;
            hits += u64::from(at_least_as_extreme(c.r_with(&y), r_obs));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

fn monte_carlo_p(c: &Centered, r_obs: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(PERMUTATION_SEED);
    let mut y = c.y.clone();
    let mut hits = 0usize;
    for _ in 0..MONTE_CARLO_DRAWS {
        y.shuffle(&mut rng);
        if at_least_as_extreme(c.r_with(&y), r_obs) {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (MONTE_CARLO_DRAWS + 1) as f64
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t)).clamp(0.0, 1.0)
}

/// One coefficient in the correlation table, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Value(CorrelationResult),
    Degenerate { degenerate: StatsError },
}

impl Cell {
    fn from_result(r: Result<CorrelationResult, StatsError>) -> Cell {
        match r {
            Ok(v) => Cell::Value(v),
            Err(e) => Cell::Degenerate { degenerate: e },
        }
    }

    pub fn value(&self) -> Option<&CorrelationResult> {
        match self {
            Cell::Value(v) => Some(v),
            Cell::Degenerate { .. } => None,
        }
    }

    /// Three decimals, `†` when not significant, `NA` when degenerate.
    pub fn render(&self) -> String {
        match self {
            Cell::Value(v) if v.significant => format!("{:.3}", v.coefficient),
            Cell::Value(v) => format!("{:.3}†", v.coefficient),
            Cell::Degenerate { .. } => "NA".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric: String,
    pub reference_kind: ReferenceKind,
    pub n: usize,
    pub spearman: Cell,
    pub pearson: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
}

type Extractor = fn(&MetricRow) -> Option<f64>;

const METRICS: [(&str, Extractor); 7] = [
    ("rouge1_f", |r| Some(r.rouge1_f)),
    ("rouge2_f", |r| Some(r.rouge2_f)),
    ("rouge3_f", |r| Some(r.rouge3_f)),
    ("rougeL_f", |r| Some(r.rouge_l_f)),
    ("levenshtein", |r| Some(r.levenshtein as f64)),
    ("levenshtein_norm", |r| Some(r.levenshtein_norm)),
    ("bertscore_f", |r| r.bertscore_f),
];

/// Correlates every metric column against per-note human scores, separately
/// for each reference kind present in `metrics`.
///
/// Every note scored against a reference kind must have a human score and vice
/// versa. A BERTScore row is produced only when all rows of that reference
/// kind carry a BERTScore value.
pub fn correlate_report(
    metrics: &MetricReport,
    human_scores: &BTreeMap<String, f64>,
) -> Result<CorrelationReport, StatsError> {
    let mut by_kind: BTreeMap<ReferenceKind, Vec<&MetricRow>> = BTreeMap::new();
    for row in &metrics.rows {
        by_kind.entry(row.reference_kind).or_default().push(row);
    }
    let human_ids: BTreeSet<&str> = human_scores.keys().map(String::as_str).collect();
    for rows in by_kind.values_mut() {
        rows.sort_by(|a, b| a.note_id.cmp(&b.note_id));
        let metric_ids: BTreeSet<&str> = rows.iter().map(|r| r.note_id.as_str()).collect();
        if metric_ids != human_ids || metric_ids.len() != rows.len() {
            let mut missing_human: Vec<String> =
                metric_ids.difference(&human_ids).map(|s| s.to_string()).collect();
            for w in rows.windows(2) {
                if w[0].note_id == w[1].note_id {
                    missing_human.push(format!("{} (duplicate)", w[0].note_id));
                }
            }
            return Err(StatsError::Alignment {
                missing_human,
                missing_metric: human_ids.difference(&metric_ids).map(|s| s.to_string()).collect(),
            });
        }
    }

    let mut entries = Vec::new();
    for (name, extract) in METRICS {
        for (&kind, rows) in &by_kind {
            let values: Option<Vec<f64>> = rows.iter().map(|r| extract(r)).collect();
            let Some(values) = values else { continue };
            let human: Vec<f64> = rows.iter().map(|r| human_scores[&r.note_id]).collect();
            entries.push(CorrelationEntry {
                metric: name.to_string(),
                reference_kind: kind,
                n: rows.len(),
                spearman: Cell::from_result(spearman(&values, &human)),
                pearson: Cell::from_result(pearson(&values, &human)),
            });
        }
    }
    Ok(CorrelationReport { entries })
}

impl CorrelationReport {
    pub fn entry(&self, metric: &str, kind: ReferenceKind) -> Option<&CorrelationEntry> {
        self.entries
            .iter()
            .find(|e| e.metric == metric && e.reference_kind == kind)
    }

    /// True when there is no computable coefficient at all.
    pub fn all_degenerate(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.spearman.value().is_none() && e.pearson.value().is_none())
    }

    /// Table layout: one row per metric, Spearman then Pearson, each with a
    /// human-note and a checklist column. Cells for an absent reference kind
    /// are empty.
    pub fn write_csv<W: Write>(&self, mut writer: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(writer, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "metric",
            "spearman_human_ref",
            "spearman_checklist_ref",
            "pearson_human_ref",
            "pearson_checklist_ref",
        ])?;
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.metric.as_str()) {
                continue;
            }
            let cell = |kind, pick: fn(&CorrelationEntry) -> &Cell| {
                self.entry(&e.metric, kind)
                    .map(|e| pick(e).render())
                    .unwrap_or_default()
            };
            w.write_record([
                e.metric.clone(),
                cell(ReferenceKind::Human, |e| &e.spearman),
                cell(ReferenceKind::Checklist, |e| &e.spearman),
                cell(ReferenceKind::Human, |e| &e.pearson),
                cell(ReferenceKind::Checklist, |e| &e.pearson),
            ])?;
        }
        w.flush()
    }
}
