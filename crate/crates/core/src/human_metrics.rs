//! Human-judgement metrics over evaluation sessions.
//!
//! Precision is the share of generated note items judged correct; recall is
//! the share of checklist items judged present. Both count sub-items as full
//! items. The critical-only variants filter precision by the evaluator's
//! judged importance and recall by the checklist's authored importance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Checklist, Correctness, EvaluationSession, Importance, ItemizedNote, Phase, Presence};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    /// The filter left zero items: the ratio is undefined, not zero.
    #[error("no items to score (undefined ratio)")]
    EmptyDenominator,
    #[error("item `{0}` has no judgement")]
    MissingJudgement(String),
    #[error("session is in {0}; revisions need the post-audio phase")]
    WrongPhase(Phase),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioScore {
    pub numerator: usize,
    pub denominator: usize,
    pub value: f64,
}

impl RatioScore {
    pub fn new(numerator: usize, denominator: usize) -> Result<RatioScore, MetricError> {
        if denominator == 0 {
            return Err(MetricError::EmptyDenominator);
        }
        debug_assert!(numerator <= denominator);
        Ok(RatioScore {
            numerator,
            denominator,
            value: numerator as f64 / denominator as f64,
        })
    }
}

/// Which correctness mark precision reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CorrectnessView {
    #[default]
    PreAudio,
    /// Post-audio mark where set, falling back to the pre-audio one.
    PostAudio,
}

/// Precision: correct items / generated items, optionally restricted to items
/// whose judged importance equals `filter`.
pub fn precision(
    session: &EvaluationSession,
    note: &ItemizedNote,
    filter: Option<Importance>,
    view: CorrectnessView,
) -> Result<RatioScore, MetricError> {
    let mut correct = 0;
    let mut total = 0;
    for item in note.items() {
        let judgement = session
            .note_judgement(item.id())
            .ok_or_else(|| MetricError::MissingJudgement(item.id().to_string()))?;
        if let Some(wanted) = filter {
            let importance = judgement
                .importance
                .ok_or_else(|| MetricError::MissingJudgement(item.id().to_string()))?;
            if importance != wanted {
                continue;
            }
        }
        let pre = judgement
            .correctness
            .ok_or_else(|| MetricError::MissingJudgement(item.id().to_string()))?;
        let mark = match view {
            CorrectnessView::PreAudio => pre,
            CorrectnessView::PostAudio => judgement.correctness_post_audio.unwrap_or(pre),
        };
        total += 1;
        if mark == Correctness::Correct {
            correct += 1;
        }
    }
    RatioScore::new(correct, total)
}

/// Recall: present checklist items / checklist items, optionally restricted
/// to checklist items of the given authored importance.
pub fn recall(
    session: &EvaluationSession,
    checklist: &Checklist,
    filter: Option<Importance>,
) -> Result<RatioScore, MetricError> {
    let mut present = 0;
    let mut total = 0;
    for item in checklist.items() {
        if filter.is_some_and(|f| f != item.importance()) {
            continue;
        }
        let presence = session
            .presence(item.id())
            .ok_or_else(|| MetricError::MissingJudgement(item.id().to_string()))?;
        total += 1;
        if presence == Presence::Present {
            present += 1;
        }
    }
    RatioScore::new(present, total)
}

/// Mean of unfiltered pre-audio precision and recall.
pub fn human_score(
    session: &EvaluationSession,
    note: &ItemizedNote,
    checklist: &Checklist,
) -> Result<f64, MetricError> {
    let p = precision(session, note, None, CorrectnessView::PreAudio)?;
    let r = recall(session, checklist, None)?;
    Ok(mean_of(p.value, r.value))
}

pub(crate) fn mean_of(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// Share of one checklist's items whose information appears in another checklist.
pub fn fact_coverage(matches: &[bool]) -> Result<RatioScore, MetricError> {
    RatioScore::new(matches.iter().filter(|m| **m).count(), matches.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RevisionStats {
    pub total_items: usize,
    pub changes: usize,
    pub correct_to_incorrect: usize,
    pub incorrect_to_correct: usize,
    pub change_rate: f64,
}

impl RevisionStats {
    fn from_counts(total_items: usize, c2i: usize, i2c: usize) -> RevisionStats {
        let changes = c2i + i2c;
        RevisionStats {
            total_items,
            changes,
            correct_to_incorrect: c2i,
            incorrect_to_correct: i2c,
            change_rate: if total_items == 0 {
                0.0
            } else {
                changes as f64 / total_items as f64
            },
        }
    }

    /// Pools counts across sessions; the rate is recomputed from the pooled counts.
    pub fn combine<'a>(stats: impl IntoIterator<Item = &'a RevisionStats>) -> RevisionStats {
        let (mut total, mut c2i, mut i2c) = (0, 0, 0);
        for s in stats {
            total += s.total_items;
            c2i += s.correct_to_incorrect;
            i2c += s.incorrect_to_correct;
        }
        RevisionStats::from_counts(total, c2i, i2c)
    }
}

/// Counts correctness changes made after listening to the consultation audio.
/// Items without a post-audio mark count as unchanged.
pub fn count_revisions(session: &EvaluationSession) -> Result<RevisionStats, MetricError> {
    if session.phase() == Phase::PreAudio {
        return Err(MetricError::WrongPhase(Phase::PreAudio));
    }
    let (mut c2i, mut i2c) = (0, 0);
    for judgement in session.note_judgements().values() {
        match (judgement.correctness, judgement.correctness_post_audio) {
            (Some(Correctness::Correct), Some(Correctness::Incorrect)) => c2i += 1,
            (Some(Correctness::Incorrect), Some(Correctness::Correct)) => i2c += 1,
            _ => {}
        }
    }
    Ok(RevisionStats::from_counts(
        session.note_judgements().len(),
        c2i,
        i2c,
    ))
}
