//! State transitions for evaluation sessions.
//!
//! Sessions are immutable; every operation here returns a new validated value.
//! Pre-audio marks are frozen once the session leaves pre-audio, and a
//! post-audio correctness, once set, can be changed but never cleared.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{
    check_id, check_pair, Checklist, ChecklistItemJudgement, Correctness, EvaluationSession,
    Importance, ItemizedNote, NoteItemJudgement, Phase, Presence, SessionTimestamps,
    ValidationError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteJudgementUpdate {
    pub note_item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Importance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_post_audio: Option<Correctness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistJudgementUpdate {
    pub checklist_item_id: String,
    pub presence: Presence,
}

/// A batch of judgement upserts. Fields left as `None` are not touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgementBatch {
    #[serde(default)]
    pub note_judgements: Vec<NoteJudgementUpdate>,
    #[serde(default)]
    pub checklist_judgements: Vec<ChecklistJudgementUpdate>,
}

impl EvaluationSession {
    /// Starts an empty pre-audio session.
    pub fn start(
        session_id: &str,
        annotator_id: &str,
        checklist: &Checklist,
        note: &ItemizedNote,
        created_at: DateTime<Utc>,
    ) -> Result<EvaluationSession, ValidationError> {
        check_id(session_id)?;
        check_id(annotator_id)?;
        check_pair(checklist, note)?;
        Ok(EvaluationSession {
            session_id: session_id.to_string(),
            annotator_id: annotator_id.to_string(),
            checklist_id: checklist.checklist_id().to_string(),
            note_id: note.note_id().to_string(),
            phase: Phase::PreAudio,
            note_judgements: BTreeMap::new(),
            checklist_judgements: BTreeMap::new(),
            timestamps: SessionTimestamps {
                created_at,
                post_audio_at: None,
                submitted_at: None,
            },
        })
    }

    /// Applies a batch of upserts atomically: either every update is accepted or
    /// the session is returned unchanged through the error.
    pub fn apply_judgements(
        &self,
        batch: &JudgementBatch,
        checklist: &Checklist,
        note: &ItemizedNote,
    ) -> Result<EvaluationSession, ValidationError> {
        if self.phase == Phase::Submitted {
            return Err(ValidationError::SessionClosed);
        }
        let mut next = self.clone();
        let pre_audio = self.phase == Phase::PreAudio;

        for update in &batch.note_judgements {
            let id = &update.note_item_id;
            if note.item(id).is_none() {
                return Err(ValidationError::UnknownNoteItem(id.clone()));
            }
            let entry = next
                .note_judgements
                .entry(id.clone())
                .or_insert_with(|| NoteItemJudgement {
                    note_item_id: id.clone(),
                    correctness: None,
                    importance: None,
                    correctness_post_audio: None,
                });
            if pre_audio {
                if update.correctness_post_audio.is_some() {
                    return Err(ValidationError::PrematurePostAudio(id.clone()));
                }
                if update.correctness.is_some() {
                    entry.correctness = update.correctness;
                }
                if update.importance.is_some() {
                    entry.importance = update.importance;
                }
            } else {
                let changes_correctness =
                    update.correctness.is_some() && update.correctness != entry.correctness;
                let changes_importance =
                    update.importance.is_some() && update.importance != entry.importance;
                if changes_correctness || changes_importance {
                    return Err(ValidationError::PreAudioMarkLocked(id.clone()));
                }
                if update.correctness_post_audio.is_some() {
                    entry.correctness_post_audio = update.correctness_post_audio;
                }
            }
        }

        for update in &batch.checklist_judgements {
            let id = &update.checklist_item_id;
            if checklist.item(id).is_none() {
                return Err(ValidationError::UnknownChecklistItem(id.clone()));
            }
            if !pre_audio {
                if next.presence(id) != Some(update.presence) {
                    return Err(ValidationError::PreAudioMarkLocked(id.clone()));
                }
                continue;
            }
            next.checklist_judgements.insert(
                id.clone(),
                ChecklistItemJudgement {
                    checklist_item_id: id.clone(),
                    presence: update.presence,
                },
            );
        }
        Ok(next)
    }

    /// Moves the session one phase forward. Leaving pre-audio requires every
    /// note item to carry correctness and importance and every checklist item
    /// to carry presence.
    pub fn advance(
        &self,
        target: Phase,
        at: DateTime<Utc>,
        checklist: &Checklist,
        note: &ItemizedNote,
    ) -> Result<EvaluationSession, ValidationError> {
        if self.phase.next() != Some(target) {
            return Err(ValidationError::PhaseTransition {
                from: self.phase,
                to: target,
            });
        }
        let missing = self.missing_marks(checklist, note);
        if !missing.is_empty() {
            return Err(ValidationError::IncompleteForPhase {
                phase: target,
                missing,
            });
        }
        let mut next = self.clone();
        let at = at.max(self.last_transition());
        next.phase = target;
        match target {
            Phase::PostAudio => next.timestamps.post_audio_at = Some(at),
            Phase::Submitted => next.timestamps.submitted_at = Some(at),
            Phase::PreAudio => unreachable!("pre-audio is never a transition target"),
        }
        Ok(next)
    }

    fn last_transition(&self) -> DateTime<Utc> {
        let t = &self.timestamps;
        t.submitted_at
            .or(t.post_audio_at)
            .unwrap_or(t.created_at)
    }
}
