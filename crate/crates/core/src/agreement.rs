//! Krippendorff's alpha with missing data.
//!
//! Values are arranged in a units x annotators table. Units with fewer than two
//! values are not pairable and are skipped. For each remaining unit with `m`
//! values, every ordered pair of values from different annotators adds
//! `1 / (m - 1)` to the coincidence matrix. Then
//!
//! ```text
//! alpha = 1 - D_o / D_e
//! D_o = sum_ck o_ck * d(c,k) / n
//! D_e = sum_ck n_c * n_k * d(c,k) / (n * (n - 1))
//! ```
//!
//! where `n_c` are the matrix marginals and `n` the number of pairable values.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Nominal,
    Ordinal,
    Interval,
}

impl Level {
    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "nominal" => Some(Level::Nominal),
            "ordinal" => Some(Level::Ordinal),
            "interval" => Some(Level::Interval),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("no unit has two or more values")]
    NoPairableUnits,
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("invalid value `{value}` for unit `{unit}`: {reason}")]
    InvalidValue {
        unit: String,
        value: String,
        reason: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Units x annotators matrix of optional values.
///
/// For nominal and ordinal tables each cell holds a category index into
/// `categories`; ordinal categories are listed in rank order. Interval tables
/// hold finite reals and have no categories.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementTable {
    unit_ids: Vec<String>,
    annotator_ids: Vec<String>,
    level: Level,
    categories: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

impl AgreementTable {
    pub fn categorical(
        level: Level,
        categories: Vec<String>,
        unit_ids: Vec<String>,
        annotator_ids: Vec<String>,
        cells: Vec<Vec<Option<usize>>>,
    ) -> Result<AgreementTable, AgreementError> {
        if level == Level::Interval {
            return Err(AgreementError::Shape(
                "interval tables take real values".into(),
            ));
        }
        for (unit, row) in unit_ids.iter().zip(&cells) {
            if let Some(bad) = row.iter().flatten().find(|c| **c >= categories.len()) {
                return Err(AgreementError::InvalidValue {
                    unit: unit.clone(),
                    value: bad.to_string(),
                    reason: format!("only {} categories declared", categories.len()),
                });
            }
        }
        let cells = cells
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.map(|c| c as f64)).collect())
            .collect();
        AgreementTable::build(unit_ids, annotator_ids, level, categories, cells)
    }

    pub fn interval(
        unit_ids: Vec<String>,
        annotator_ids: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<AgreementTable, AgreementError> {
        for (unit, row) in unit_ids.iter().zip(&cells) {
            if let Some(bad) = row.iter().flatten().find(|v| !v.is_finite()) {
                return Err(AgreementError::InvalidValue {
                    unit: unit.clone(),
                    value: bad.to_string(),
                    reason: "interval values must be finite".into(),
                });
            }
        }
        AgreementTable::build(unit_ids, annotator_ids, Level::Interval, Vec::new(), cells)
    }

    fn build(
        unit_ids: Vec<String>,
        annotator_ids: Vec<String>,
        level: Level,
        categories: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<AgreementTable, AgreementError> {
        if cells.len() != unit_ids.len() {
            return Err(AgreementError::Shape(format!(
                "{} units but {} rows",
                unit_ids.len(),
                cells.len()
            )));
        }
        if let Some(row) = cells.iter().find(|r| r.len() != annotator_ids.len()) {
            return Err(AgreementError::Shape(format!(
                "{} annotators but a row has {} cells",
                annotator_ids.len(),
                row.len()
            )));
        }
        Ok(AgreementTable {
            unit_ids,
            annotator_ids,
            level,
            categories,
            cells,
        })
    }

    pub fn level(&self) -> Level {
        self.level
    }
    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }
    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }
    pub fn categories(&self) -> &[String] {
        &self.categories
    }
    pub fn cells(&self) -> &[Vec<Option<f64>>] {
        &self.cells
    }

    /// Number of units with at least two values.
    pub fn pairable_units(&self) -> usize {
        self.cells
            .iter()
            .filter(|row| row.iter().flatten().count() >= 2)
            .count()
    }

    /// The same table restricted to a subset of annotators (by column index).
    pub fn restrict(&self, annotators: &[usize]) -> AgreementTable {
        AgreementTable {
            unit_ids: self.unit_ids.clone(),
            annotator_ids: annotators
                .iter()
                .map(|&a| self.annotator_ids[a].clone())
                .collect(),
            level: self.level,
            categories: self.categories.clone(),
            cells: self
                .cells
                .iter()
                .map(|row| annotators.iter().map(|&a| row[a]).collect())
                .collect(),
        }
    }

    /// Reads a table from CSV: a header row `unit,<annotator ids...>`, one row
    /// per unit, empty cells for missing values.
    ///
    /// Nominal labels are arbitrary strings, ordered by first appearance.
    /// Ordinal labels are integer ranks or importance names
    /// (`irrelevant < non_critical < critical`). Interval cells are reals.
    pub fn from_csv<R: Read>(reader: R, level: Level) -> Result<AgreementTable, AgreementError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(AgreementError::Shape(
                "header needs a unit column and at least one annotator".into(),
            ));
        }
        let annotator_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut unit_ids = Vec::new();
        let mut raw: Vec<Vec<Option<String>>> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(AgreementError::Shape(format!(
                    "row {} has {} cells, header has {}",
                    unit_ids.len() + 1,
                    record.len(),
                    header.len()
                )));
            }
            unit_ids.push(record[0].to_string());
            raw.push(
                record
                    .iter()
                    .skip(1)
                    .map(|c| (!c.is_empty()).then(|| c.to_string()))
                    .collect(),
            );
        }
        match level {
            Level::Interval => {
                let mut cells = Vec::with_capacity(raw.len());
                for (unit, row) in unit_ids.iter().zip(raw) {
                    let mut parsed = Vec::with_capacity(row.len());
                    for cell in row {
                        parsed.push(match cell {
                            None => None,
                            Some(s) => Some(s.parse::<f64>().map_err(|e| {
                                AgreementError::InvalidValue {
                                    unit: unit.clone(),
                                    value: s.clone(),
                                    reason: e.to_string(),
                                }
                            })?),
                        });
                    }
                    cells.push(parsed);
                }
                AgreementTable::interval(unit_ids, annotator_ids, cells)
            }
            Level::Nominal => {
                let mut categories: Vec<String> = Vec::new();
                let cells = raw
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|cell| {
                                cell.map(|label| match categories.iter().position(|c| *c == label) {
                                    Some(i) => i,
                                    None => {
                                        categories.push(label);
                                        categories.len() - 1
                                    }
                                })
                            })
                            .collect()
                    })
                    .collect();
                AgreementTable::categorical(Level::Nominal, categories, unit_ids, annotator_ids, cells)
            }
            Level::Ordinal => {
                let mut ranks: BTreeMap<i64, String> = BTreeMap::new();
                let mut ranked: Vec<Vec<Option<i64>>> = Vec::with_capacity(raw.len());
                for (unit, row) in unit_ids.iter().zip(raw) {
                    let mut parsed = Vec::with_capacity(row.len());
                    for cell in row {
                        parsed.push(match cell {
                            None => None,
                            Some(s) => {
                                let rank = ordinal_rank(&s).ok_or_else(|| AgreementError::InvalidValue {
                                    unit: unit.clone(),
                                    value: s.clone(),
                                    reason: "ordinal values must be integer ranks or importance labels".into(),
                                })?;
                                ranks.entry(rank).or_insert(s);
                                Some(rank)
                            }
                        });
                    }
                    ranked.push(parsed);
                }
                let order: Vec<i64> = ranks.keys().copied().collect();
                let categories = ranks.into_values().collect();
                let cells = ranked
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|r| r.map(|r| order.binary_search(&r).expect("rank collected")))
                            .collect()
                    })
                    .collect();
                AgreementTable::categorical(Level::Ordinal, categories, unit_ids, annotator_ids, cells)
            }
        }
    }

    /// Writes the table in the format read by [`AgreementTable::from_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AgreementError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string()];
        header.extend(self.annotator_ids.iter().cloned());
        w.write_record(&header)?;
        for (unit, row) in self.unit_ids.iter().zip(&self.cells) {
            let mut record = vec![unit.clone()];
            record.extend(row.iter().map(|cell| match cell {
                None => String::new(),
                Some(v) if self.level == Level::Interval => v.to_string(),
                Some(v) => self.categories[*v as usize].clone(),
            }));
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn ordinal_rank(s: &str) -> Option<i64> {
    if let Ok(r) = s.parse::<i64>() {
        return Some(r);
    }
    crate::model::Importance::parse(s).map(|i| i64::from(i.rank()))
}

/// Symmetric coincidence matrix over the distinct values present in the data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceMatrix {
    /// Distinct pairable values in ascending order.
    pub values: Vec<f64>,
    /// `counts[c][k]`, indexed like `values`.
    pub counts: Vec<Vec<f64>>,
}

impl CoincidenceMatrix {
    pub fn marginals(&self) -> Vec<f64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.marginals().iter().sum()
    }

    pub fn get(&self, c: f64, k: f64) -> f64 {
        match (self.index_of(c), self.index_of(k)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0.0,
        }
    }

    fn index_of(&self, v: f64) -> Option<usize> {
        self.values.iter().position(|x| *x == v)
    }
}

pub fn coincidence_matrix(table: &AgreementTable) -> Result<CoincidenceMatrix, AgreementError> {
    let mut values: Vec<f64> = table
        .cells
        .iter()
        .filter(|row| row.iter().flatten().count() >= 2)
        .flat_map(|row| row.iter().flatten().copied())
        .collect();
    if values.is_empty() {
        return Err(AgreementError::NoPairableUnits);
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index = |v: f64| {
        values
            .binary_search_by(|x| x.total_cmp(&v))
            .expect("value collected above")
    };

    let d = values.len();
    let mut counts = vec![vec![0.0; d]; d];
    for row in &table.cells {
        let m = row.iter().flatten().count();
        if m < 2 {
            continue;
        }
        let present: Vec<usize> = row.iter().flatten().map(|v| index(*v)).collect();
        let weight = 1.0 / (m - 1) as f64;
        for (i, &c) in present.iter().enumerate() {
            for (j, &k) in present.iter().enumerate() {
                if i != j {
                    counts[c][k] += weight;
                }
            }
        }
    }
    Ok(CoincidenceMatrix { values, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    pub n_pairable: f64,
    /// Set when every pairable value is identical (zero expected disagreement);
    /// alpha is then reported as 1.0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Squared difference between value indices `c` and `k` of a coincidence matrix.
fn difference(level: Level, m: &CoincidenceMatrix, marginals: &[f64], c: usize, k: usize) -> f64 {
    match level {
        Level::Nominal => {
            if c == k {
                0.0
            } else {
                1.0
            }
        }
        Level::Ordinal => {
            let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
            let between: f64 = marginals[lo..=hi].iter().sum();
            let d = between - (marginals[lo] + marginals[hi]) / 2.0;
            d * d
        }
        Level::Interval => {
            let d = m.values[c] - m.values[k];
            d * d
        }
    }
}

pub fn alpha(table: &AgreementTable) -> Result<AlphaResult, AgreementError> {
    let m = coincidence_matrix(table)?;
    let marginals = m.marginals();
    let n: f64 = marginals.iter().sum();
    let d = m.values.len();

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..d {
        for k in 0..d {
            let delta = difference(table.level, &m, &marginals, c, k);
            observed += m.counts[c][k] * delta;
            expected += marginals[c] * marginals[k] * delta;
        }
    }
    let observed = observed / n;
    let expected = expected / (n * (n - 1.0));

    if expected == 0.0 {
        return Ok(AlphaResult {
            alpha: 1.0,
            observed_disagreement: observed,
            expected_disagreement: 0.0,
            n_pairable: n,
            degenerate: true,
        });
    }
    Ok(AlphaResult {
        alpha: 1.0 - observed / expected,
        observed_disagreement: observed,
        expected_disagreement: expected,
        n_pairable: n,
        degenerate: false,
    })
}

/// Alpha for one annotator subset, with the outcome kept even when undefined.
#[derive(Debug, Serialize)]
pub struct SubsetAlpha {
    pub annotators: Vec<String>,
    #[serde(flatten, serialize_with = "serialize_outcome")]
    pub outcome: Result<AlphaResult, AgreementError>,
}

fn serialize_outcome<S: serde::Serializer>(
    outcome: &Result<AlphaResult, AgreementError>,
    s: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Failed {
        error: String,
    }
    match outcome {
        Ok(r) => r.serialize(s),
        Err(e) => Failed { error: e.to_string() }.serialize(s),
    }
}

impl SubsetAlpha {
    pub fn value(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.alpha)
    }
}

/// Alpha for every annotator pair, in column order `(0,1), (0,2), ..., (1,2), ...`.
pub fn pairwise_alphas(table: &AgreementTable) -> Vec<SubsetAlpha> {
    let k = table.annotator_ids.len();
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let sub = table.restrict(&[a, b]);
            out.push(SubsetAlpha {
                annotators: sub.annotator_ids.clone(),
                outcome: alpha(&sub),
            });
        }
    }
    out
}

/// Alpha over all annotators jointly.
pub fn joint_alpha(table: &AgreementTable) -> SubsetAlpha {
    SubsetAlpha {
        annotators: table.annotator_ids.clone(),
        outcome: alpha(table),
    }
}

/// Unweighted mean of the defined pairwise alphas.
pub fn mean_pairwise_alpha(pairs: &[SubsetAlpha]) -> Option<f64> {
    let defined: Vec<f64> = pairs.iter().filter_map(SubsetAlpha::value).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}
