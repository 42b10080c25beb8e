//! A study: checklists, notes and every annotator's session over them.
//!
//! Agreement tables are built from pre-audio marks. Unit ids are
//! `{note_id}/{item_id}`; annotators are columns in sorted order.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::agreement::{AgreementError, AgreementTable, Level};
use crate::model::{Checklist, Correctness, EvaluationSession, Importance, ItemizedNote, Presence};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("session `{session}` references unknown checklist `{checklist}`")]
    UnknownChecklist { session: String, checklist: String },
    #[error("session `{session}` references unknown note `{note}`")]
    UnknownNote { session: String, note: String },
    #[error("annotator `{annotator}` has more than one session for note `{note}`")]
    DuplicateSession { annotator: String, note: String },
    #[error("note `{note}` is evaluated against different checklists")]
    ChecklistConflict { note: String },
    #[error(transparent)]
    Agreement(#[from] AgreementError),
}

#[derive(Debug, Clone)]
pub struct Study {
    checklists: BTreeMap<String, Checklist>,
    notes: BTreeMap<String, ItemizedNote>,
    sessions: Vec<EvaluationSession>,
}

impl Study {
    /// Sessions are kept sorted by (note, annotator, session id).
    pub fn new(
        checklists: impl IntoIterator<Item = Checklist>,
        notes: impl IntoIterator<Item = ItemizedNote>,
        sessions: impl IntoIterator<Item = EvaluationSession>,
    ) -> Result<Study, StudyError> {
        let checklists: BTreeMap<String, Checklist> = checklists
            .into_iter()
            .map(|c| (c.checklist_id().to_string(), c))
            .collect();
        let notes: BTreeMap<String, ItemizedNote> =
            notes.into_iter().map(|n| (n.note_id().to_string(), n)).collect();
        let mut sessions: Vec<EvaluationSession> = sessions.into_iter().collect();
        sessions.sort_by(|a, b| {
            (a.note_id(), a.annotator_id(), a.session_id())
                .cmp(&(b.note_id(), b.annotator_id(), b.session_id()))
        });
        let mut seen = BTreeSet::new();
        let mut note_checklist: BTreeMap<&str, &str> = BTreeMap::new();
        for s in &sessions {
            if !checklists.contains_key(s.checklist_id()) {
                return Err(StudyError::UnknownChecklist {
                    session: s.session_id().into(),
                    checklist: s.checklist_id().into(),
                });
            }
            if !notes.contains_key(s.note_id()) {
                return Err(StudyError::UnknownNote {
                    session: s.session_id().into(),
                    note: s.note_id().into(),
                });
            }
            if !seen.insert((s.annotator_id(), s.note_id())) {
                return Err(StudyError::DuplicateSession {
                    annotator: s.annotator_id().into(),
                    note: s.note_id().into(),
                });
            }
            if *note_checklist.entry(s.note_id()).or_insert(s.checklist_id()) != s.checklist_id() {
                return Err(StudyError::ChecklistConflict { note: s.note_id().into() });
            }
        }
        Ok(Study { checklists, notes, sessions })
    }

    pub fn checklists(&self) -> &BTreeMap<String, Checklist> {
        &self.checklists
    }

    pub fn notes(&self) -> &BTreeMap<String, ItemizedNote> {
        &self.notes
    }

    pub fn sessions(&self) -> &[EvaluationSession] {
        &self.sessions
    }

    pub fn checklist_for(&self, session: &EvaluationSession) -> &Checklist {
        &self.checklists[session.checklist_id()]
    }

    pub fn note_for(&self, session: &EvaluationSession) -> &ItemizedNote {
        &self.notes[session.note_id()]
    }

    pub fn annotators(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.sessions.iter().map(|s| s.annotator_id()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Evaluated notes with their checklist, in note id order.
    fn evaluated(&self) -> Vec<(&ItemizedNote, &Checklist)> {
        let mut out: BTreeMap<&str, (&ItemizedNote, &Checklist)> = BTreeMap::new();
        for s in &self.sessions {
            out.entry(s.note_id())
                .or_insert((self.note_for(s), self.checklist_for(s)));
        }
        out.into_values().collect()
    }

    fn session(&self, note_id: &str, annotator: &str) -> Option<&EvaluationSession> {
        self.sessions
            .iter()
            .find(|s| s.note_id() == note_id && s.annotator_id() == annotator)
    }

    /// Builds a units x annotators grid by calling `value` for every unit and
    /// annotator that has a session on the unit's note.
    fn grid<T>(
        &self,
        units: &[(&str, &str)],
        value: impl Fn(&EvaluationSession, &str) -> Option<T>,
    ) -> (Vec<String>, Vec<String>, Vec<Vec<Option<T>>>) {
        let annotators = self.annotators();
        let unit_ids = units.iter().map(|(n, i)| format!("{n}/{i}")).collect();
        let cells = units
            .iter()
            .map(|(note, item)| {
                annotators
                    .iter()
                    .map(|a| self.session(note, a).and_then(|s| value(s, item)))
                    .collect()
            })
            .collect();
        (unit_ids, annotators, cells)
    }

    fn checklist_units(&self) -> Vec<(&str, &str)> {
        self.evaluated()
            .into_iter()
            .flat_map(|(note, cl)| cl.items().iter().map(move |i| (note.note_id(), i.id())))
            .collect()
    }

    fn note_units(&self) -> Vec<(&str, &str)> {
        self.evaluated()
            .into_iter()
            .flat_map(|(note, _)| note.items().iter().map(move |i| (note.note_id(), i.id())))
            .collect()
    }

    /// Present/absent per (note, checklist item); nominal.
    pub fn presence_table(&self) -> Result<AgreementTable, StudyError> {
        let (units, annotators, cells) = self.grid(&self.checklist_units(), |s, item| {
            s.presence(item).map(|p| match p {
                Presence::Present => 0,
                Presence::Absent => 1,
            })
        });
        Ok(AgreementTable::categorical(
            Level::Nominal,
            vec!["present".into(), "absent".into()],
            units,
            annotators,
            cells,
        )?)
    }

    /// Pre-audio correct/incorrect per (note, note item); nominal.
    pub fn correctness_table(&self) -> Result<AgreementTable, StudyError> {
        let (units, annotators, cells) = self.grid(&self.note_units(), |s, item| {
            s.note_judgement(item)
                .and_then(|j| j.correctness)
                .map(|c| match c {
                    Correctness::Correct => 0,
                    Correctness::Incorrect => 1,
                })
        });
        Ok(AgreementTable::categorical(
            Level::Nominal,
            vec!["correct".into(), "incorrect".into()],
            units,
            annotators,
            cells,
        )?)
    }

    /// Judged importance per (note, note item); ordinal.
    pub fn importance_table(&self) -> Result<AgreementTable, StudyError> {
        let (units, annotators, cells) = self.grid(&self.note_units(), |s, item| {
            s.note_judgement(item)
                .and_then(|j| j.importance)
                .map(|i| i.rank() as usize)
        });
        Ok(AgreementTable::categorical(
            Level::Ordinal,
            Importance::ALL.iter().map(|i| i.as_str().to_string()).collect(),
            units,
            annotators,
            cells,
        )?)
    }

    fn count_table(
        &self,
        count: impl Fn(&EvaluationSession, &ItemizedNote, &Checklist) -> Option<usize>,
    ) -> Result<AgreementTable, StudyError> {
        let evaluated = self.evaluated();
        let annotators = self.annotators();
        let units = evaluated.iter().map(|(n, _)| n.note_id().to_string()).collect();
        let cells = evaluated
            .iter()
            .map(|(note, cl)| {
                annotators
                    .iter()
                    .map(|a| {
                        self.session(note.note_id(), a)
                            .and_then(|s| count(s, note, cl))
                            .map(|c| c as f64)
                    })
                    .collect()
            })
            .collect();
        Ok(AgreementTable::interval(units, annotators, cells)?)
    }

    /// Number of items marked incorrect per (note, annotator); interval. A
    /// session with any unmarked item contributes no value.
    pub fn incorrect_count_table(&self) -> Result<AgreementTable, StudyError> {
        self.count_table(|s, note, _| {
            note.items().iter().try_fold(0, |acc, item| {
                let c = s.note_judgement(item.id())?.correctness?;
                Some(acc + usize::from(c == Correctness::Incorrect))
            })
        })
    }

    /// Number of checklist items marked absent per (note, annotator); interval.
    pub fn absent_count_table(&self) -> Result<AgreementTable, StudyError> {
        self.count_table(|s, _, cl| {
            cl.items().iter().try_fold(0, |acc, item| {
                Some(acc + usize::from(s.presence(item.id())? == Presence::Absent))
            })
        })
    }
}
