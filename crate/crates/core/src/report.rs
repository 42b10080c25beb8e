//! Study-level reports: human metrics, agreement tables and checklist fact coverage.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agreement::{
    alpha, joint_alpha, mean_pairwise_alpha, pairwise_alphas, AgreementError, AgreementTable,
    Level, SubsetAlpha,
};
use crate::human_metrics::{
    count_revisions, fact_coverage, precision, recall, CorrectnessView, RatioScore, RevisionStats,
};
use crate::model::{Importance, Phase};
use crate::study::{Study, StudyError};

/// Provenance embedded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub splitting_config_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_model: Option<String>,
}

impl ReportMeta {
    pub fn new(splitting_config_version: &str) -> ReportMeta {
        ReportMeta {
            tool_version: crate::TOOL_VERSION.to_string(),
            splitting_config_version: splitting_config_version.to_string(),
            embedding_model: None,
        }
    }

    /// Single line used as the leading `#` comment of CSV reports.
    pub fn comment(&self) -> String {
        let mut s = format!(
            "cceval {} splitting-config {}",
            self.tool_version, self.splitting_config_version
        );
        if let Some(m) = &self.embedding_model {
            s.push_str(&format!(" embedding-model {m}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub annotator_id: String,
    pub note_id: String,
    pub checklist_id: String,
    pub phase: Phase,
    pub precision: Option<RatioScore>,
    pub recall: Option<RatioScore>,
    pub critical_precision: Option<RatioScore>,
    pub critical_recall: Option<RatioScore>,
    pub post_audio_precision: Option<RatioScore>,
    pub human_score: Option<f64>,
    pub revision_stats: Option<RevisionStats>,
}

/// Means over sessions; undefined values are skipped, and a mean over no
/// defined values is null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sessions: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub critical_precision: Option<f64>,
    pub critical_recall: Option<f64>,
    pub post_audio_precision: Option<f64>,
    pub human_score: Option<f64>,
    /// Counts pooled over sessions that reached the post-audio phase.
    pub revisions: Option<RevisionStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanReport {
    pub meta: ReportMeta,
    pub sessions: Vec<SessionMetrics>,
    pub aggregate: Aggregate,
    pub per_annotator: BTreeMap<String, Aggregate>,
    /// Mean human score per note across annotators; the correlation target.
    pub note_human_scores: BTreeMap<String, f64>,
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn aggregate(sessions: &[&SessionMetrics]) -> Aggregate {
    let value = |f: fn(&SessionMetrics) -> Option<RatioScore>| {
        mean(sessions.iter().map(|s| f(s).map(|r| r.value)))
    };
    let revised: Vec<&RevisionStats> = sessions.iter().filter_map(|s| s.revision_stats.as_ref()).collect();
    Aggregate {
        sessions: sessions.len(),
        precision: value(|s| s.precision),
        recall: value(|s| s.recall),
        critical_precision: value(|s| s.critical_precision),
        critical_recall: value(|s| s.critical_recall),
        post_audio_precision: value(|s| s.post_audio_precision),
        human_score: mean(sessions.iter().map(|s| s.human_score)),
        revisions: (!revised.is_empty()).then(|| RevisionStats::combine(revised)),
    }
}

pub fn human_report(study: &Study, meta: ReportMeta) -> HumanReport {
    let sessions: Vec<SessionMetrics> = study
        .sessions()
        .iter()
        .map(|s| {
            let note = study.note_for(s);
            let cl = study.checklist_for(s);
            let p = precision(s, note, None, CorrectnessView::PreAudio).ok();
            let r = recall(s, cl, None).ok();
            SessionMetrics {
                session_id: s.session_id().into(),
                annotator_id: s.annotator_id().into(),
                note_id: s.note_id().into(),
                checklist_id: s.checklist_id().into(),
                phase: s.phase(),
                precision: p,
                recall: r,
                critical_precision: precision(s, note, Some(Importance::Critical), CorrectnessView::PreAudio).ok(),
                critical_recall: recall(s, cl, Some(Importance::Critical)).ok(),
                post_audio_precision: (s.phase() != Phase::PreAudio)
                    .then(|| precision(s, note, None, CorrectnessView::PostAudio).ok())
                    .flatten(),
                human_score: p.zip(r).map(|(p, r)| crate::human_metrics::mean_of(p.value, r.value)),
                revision_stats: count_revisions(s).ok(),
            }
        })
        .collect();

    let all: Vec<&SessionMetrics> = sessions.iter().collect();
    let mut by_annotator: BTreeMap<String, Vec<&SessionMetrics>> = BTreeMap::new();
    let mut by_note: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for s in &sessions {
        by_annotator.entry(s.annotator_id.clone()).or_default().push(s);
        by_note.entry(s.note_id.clone()).or_default().push(s.human_score);
    }
    HumanReport {
        meta,
        aggregate: aggregate(&all),
        per_annotator: by_annotator.into_iter().map(|(a, v)| (a, aggregate(&v))).collect(),
        note_human_scores: by_note
            .into_iter()
            .filter_map(|(n, v)| mean(v).map(|m| (n, m)))
            .collect(),
        sessions,
    }
}

/// Agreement over one judgement type.
#[derive(Debug, Serialize)]
pub struct AgreementColumn {
    pub name: String,
    pub level: Level,
    pub data_points: usize,
    pub pairable_units: usize,
    pub pairwise: Vec<SubsetAlpha>,
    /// Alpha over all annotators jointly; the default "3-way" figure.
    pub joint: SubsetAlpha,
    pub mean_pairwise: Option<f64>,
}

impl AgreementColumn {
    pub fn new(name: &str, table: &AgreementTable) -> AgreementColumn {
        let pairwise = pairwise_alphas(table);
        AgreementColumn {
            name: name.to_string(),
            level: table.level(),
            data_points: table.unit_ids().len(),
            pairable_units: table.pairable_units(),
            mean_pairwise: mean_pairwise_alpha(&pairwise),
            joint: joint_alpha(table),
            pairwise,
        }
    }
}

/// Item-level agreement per judgement type plus interval agreement on
/// per-note error counts.
#[derive(Debug, Serialize)]
pub struct AgreementReport {
    pub meta: ReportMeta,
    pub columns: Vec<AgreementColumn>,
    pub counts: Vec<AgreementColumn>,
}

fn fmt_alpha(v: Option<f64>) -> String {
    v.map(|a| format!("{a:.3}")).unwrap_or_else(|| "NA".into())
}

impl AgreementReport {
    pub fn from_tables(
        meta: ReportMeta,
        columns: &[(&str, &AgreementTable)],
        counts: &[(&str, &AgreementTable)],
    ) -> AgreementReport {
        AgreementReport {
            meta,
            columns: columns.iter().map(|(n, t)| AgreementColumn::new(n, t)).collect(),
            counts: counts.iter().map(|(n, t)| AgreementColumn::new(n, t)).collect(),
        }
    }

    pub fn from_study(study: &Study, meta: ReportMeta) -> Result<AgreementReport, StudyError> {
        let presence = study.presence_table()?;
        let correctness = study.correctness_table()?;
        let importance = study.importance_table()?;
        let absent = study.absent_count_table()?;
        let incorrect = study.incorrect_count_table()?;
        Ok(AgreementReport::from_tables(
            meta,
            &[
                ("present_absent", &presence),
                ("correct_incorrect", &correctness),
                ("importance", &importance),
            ],
            &[("present_absent", &absent), ("correct_incorrect", &incorrect)],
        ))
    }

    pub fn column(&self, name: &str) -> Option<&AgreementColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// True when no column has a defined joint alpha.
    pub fn all_undefined(&self) -> bool {
        self.columns.iter().all(|c| c.joint.value().is_none())
    }

    /// Item-level table: a data-point row, one row per annotator pair, then the
    /// joint and mean-pairwise rows.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "# {}", self.meta.comment())?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;

        let mut row = vec!["data_points".to_string()];
        row.extend(self.columns.iter().map(|c| c.data_points.to_string()));
        w.write_record(&row)?;

        let mut pairs: Vec<Vec<String>> = Vec::new();
        for c in &self.columns {
            for p in &c.pairwise {
                if !pairs.contains(&p.annotators) {
                    pairs.push(p.annotators.clone());
                }
            }
        }
        for pair in &pairs {
            let mut row = vec![pair.join(" - ")];
            row.extend(self.columns.iter().map(|c| {
                c.pairwise
                    .iter()
                    .find(|p| &p.annotators == pair)
                    .map(|p| fmt_alpha(p.value()))
                    .unwrap_or_default()
            }));
            w.write_record(&row)?;
        }

        let mut row = vec!["joint".to_string()];
        row.extend(self.columns.iter().map(|c| fmt_alpha(c.joint.value())));
        w.write_record(&row)?;
        let mut row = vec!["mean_pairwise".to_string()];
        row.extend(self.columns.iter().map(|c| fmt_alpha(c.mean_pairwise)));
        w.write_record(&row)?;
        w.flush()
    }

    /// Item-level joint alpha next to interval alpha on per-note counts, one
    /// row per judgement type that has both.
    pub fn write_counts_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "# {}", self.meta.comment())?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["", "item_level", "count"])?;
        for count in &self.counts {
            let item = self.column(&count.name).and_then(|c| c.joint.value());
            w.write_record([
                count.name.clone(),
                fmt_alpha(item),
                fmt_alpha(count.joint.value()),
            ])?;
        }
        w.flush()
    }
}

/// One item of checklist X and whether its information appears in checklist Y.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentMark {
    pub item_id: String,
    pub importance: Importance,
    pub matched: bool,
}

/// An annotator's alignment of two checklists built for the same consultation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentDoc {
    pub consultation_id: String,
    pub annotator_id: String,
    /// Items of checklist A, matched against checklist B.
    pub a_in_b: Vec<AlignmentMark>,
    /// Items of checklist B, matched against checklist A.
    pub b_in_a: Vec<AlignmentMark>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub annotator_id: String,
    pub a_in_b: Option<RatioScore>,
    pub a_in_b_critical: Option<RatioScore>,
    pub b_in_a: Option<RatioScore>,
    pub b_in_a_critical: Option<RatioScore>,
}

#[derive(Debug, Serialize)]
pub struct CoverageReport {
    pub meta: ReportMeta,
    pub annotators: Vec<CoverageRow>,
    pub average: [Option<f64>; 4],
    pub agreement_a: SubsetAlpha,
    pub agreement_b: SubsetAlpha,
}

fn coverage_of<'a>(marks: impl Iterator<Item = &'a AlignmentMark>, critical_only: bool) -> Option<RatioScore> {
    let matched: Vec<bool> = marks
        .filter(|m| !critical_only || m.importance == Importance::Critical)
        .map(|m| m.matched)
        .collect();
    fact_coverage(&matched).ok()
}

/// Nominal agreement on matched/unmatched, units `{consultation}/{item}`.
fn alignment_alpha(
    docs: &[AlignmentDoc],
    annotators: &[String],
    side: fn(&AlignmentDoc) -> &[AlignmentMark],
) -> SubsetAlpha {
    let mut units: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
    for d in docs {
        let col = annotators.iter().position(|a| *a == d.annotator_id).expect("annotator listed");
        for m in side(d) {
            units
                .entry(format!("{}/{}", d.consultation_id, m.item_id))
                .or_insert_with(|| vec![None; annotators.len()])[col] = Some(usize::from(!m.matched));
        }
    }
    let table = AgreementTable::categorical(
        Level::Nominal,
        vec!["matched".into(), "unmatched".into()],
        units.keys().cloned().collect(),
        annotators.to_vec(),
        units.into_values().collect(),
    );
    match table {
        Ok(t) => SubsetAlpha {
            annotators: annotators.to_vec(),
            outcome: alpha(&t),
        },
        Err(e) => SubsetAlpha {
            annotators: annotators.to_vec(),
            outcome: Err::<_, AgreementError>(e),
        },
    }
}

impl CoverageReport {
    /// Coverage is pooled over all consultations an annotator aligned.
    pub fn new(meta: ReportMeta, docs: &[AlignmentDoc]) -> CoverageReport {
        let mut by_annotator: BTreeMap<&str, Vec<&AlignmentDoc>> = BTreeMap::new();
        for d in docs {
            by_annotator.entry(&d.annotator_id).or_default().push(d);
        }
        let rows: Vec<CoverageRow> = by_annotator
            .iter()
            .map(|(a, ds)| CoverageRow {
                annotator_id: a.to_string(),
                a_in_b: coverage_of(ds.iter().flat_map(|d| &d.a_in_b), false),
                a_in_b_critical: coverage_of(ds.iter().flat_map(|d| &d.a_in_b), true),
                b_in_a: coverage_of(ds.iter().flat_map(|d| &d.b_in_a), false),
                b_in_a_critical: coverage_of(ds.iter().flat_map(|d| &d.b_in_a), true),
            })
            .collect();
        let avg = |f: fn(&CoverageRow) -> Option<RatioScore>| mean(rows.iter().map(|r| f(r).map(|s| s.value)));
        let annotators: Vec<String> = by_annotator.keys().map(|a| a.to_string()).collect();
        CoverageReport {
            meta,
            average: [
                avg(|r| r.a_in_b),
                avg(|r| r.a_in_b_critical),
                avg(|r| r.b_in_a),
                avg(|r| r.b_in_a_critical),
            ],
            agreement_a: alignment_alpha(docs, &annotators, |d| &d.a_in_b),
            agreement_b: alignment_alpha(docs, &annotators, |d| &d.b_in_a),
            annotators: rows,
        }
    }

    /// Percent cells as `94.7% (95.7%)`: all items, critical items in brackets.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "# {}", self.meta.comment())?;
        let pct = |v: Option<f64>| v.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_else(|| "NA".into());
        let pair = |all: Option<f64>, crit: Option<f64>| format!("{} ({})", pct(all), pct(crit));
        let val = |r: Option<RatioScore>| r.map(|r| r.value);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["annotator", "checklist_a", "checklist_b"])?;
        for r in &self.annotators {
            w.write_record([
                r.annotator_id.clone(),
                pair(val(r.a_in_b), val(r.a_in_b_critical)),
                pair(val(r.b_in_a), val(r.b_in_a_critical)),
            ])?;
        }
        w.write_record([
            "average".to_string(),
            pair(self.average[0], self.average[1]),
            pair(self.average[2], self.average[3]),
        ])?;
        w.write_record([
            "agreement".to_string(),
            fmt_alpha(self.agreement_a.value()),
            fmt_alpha(self.agreement_b.value()),
        ])?;
        w.flush()
    }
}
