//! Directory-per-kind document store.
//!
//! Each accepted write creates `{root}/{kind}/{id}@{revision:010}.json`; older
//! revisions stay on disk. A write is staged in a temporary file, synced, then
//! published with `hard_link`, which fails if the target revision already
//! exists. That makes publication atomic and doubles as the compare-and-set
//! for optimistic locking.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use cceval_core::itemizer::SplitConfig;
use cceval_core::model::{
    validate_checklist, validate_note, validate_session, ChecklistDoc, NoteDoc, SessionDoc,
};
use cceval_core::{Checklist, EvaluationSession, ItemizedNote, ValidationError};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Checklist,
    Note,
    Session,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::Checklist, RecordKind::Note, RecordKind::Session];

    pub fn dir_name(self) -> &'static str {
        match self {
            RecordKind::Checklist => "checklists",
            RecordKind::Note => "notes",
            RecordKind::Session => "sessions",
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind:?} `{id}` not found")]
    NotFound { kind: RecordKind, id: String },
    #[error("{kind:?} `{id}`: expected revision {expected}, current is {current}")]
    RevisionConflict {
        kind: RecordKind,
        id: String,
        expected: u64,
        current: u64,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{reason}")]
    Invalid { reason: String },
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// A validated payload at a given revision.
#[derive(Debug, Clone)]
pub struct Record<T> {
    pub id: String,
    pub revision: u64,
    pub updated_at: DateTime<Utc>,
    pub payload: T,
}

/// On-disk envelope.
#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    kind: RecordKind,
    id: String,
    revision: u64,
    updated_at: DateTime<Utc>,
    payload: T,
}

const TEMP_PREFIX: &str = ".tmp-";

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    config: SplitConfig,
}

fn file_name(id: &str, revision: u64) -> String {
    format!("{id}@{revision:010}.json")
}

fn parse_file_name(name: &str) -> Option<(&str, u64)> {
    let stem = name.strip_suffix(".json")?;
    let (id, rev) = stem.rsplit_once('@')?;
    if rev.len() != 10 || !rev.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((id, rev.parse().ok()?))
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root` and removes
    /// temporary files left by interrupted writes.
    pub fn open(root: impl Into<PathBuf>, config: SplitConfig) -> Result<Store, StoreError> {
        let root = root.into();
        for kind in RecordKind::ALL {
            let dir = root.join(kind.dir_name());
            fs::create_dir_all(&dir)?;
            for entry in fs::read_dir(&dir)? {
                let entry = entry?;
                if entry.file_name().to_string_lossy().starts_with(TEMP_PREFIX) {
                    fs::remove_file(entry.path())?;
                }
            }
        }
        Ok(Store { root, config })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_config(&self) -> &SplitConfig {
        &self.config
    }

    fn dir(&self, kind: RecordKind) -> PathBuf {
        self.root.join(kind.dir_name())
    }

    /// Ids with at least one revision, sorted.
    pub fn list_ids(&self, kind: RecordKind) -> Result<Vec<String>, StoreError> {
        let mut ids = std::collections::BTreeSet::new();
        for entry in fs::read_dir(self.dir(kind))? {
            let name = entry?.file_name();
            if let Some((id, _)) = parse_file_name(&name.to_string_lossy()) {
                ids.insert(id.to_string());
            }
        }
        Ok(ids.into_iter().collect())
    }

    /// Latest revision of `id`, 0 when it does not exist.
    pub fn current_revision(&self, kind: RecordKind, id: &str) -> Result<u64, StoreError> {
        let mut latest = 0;
        for entry in fs::read_dir(self.dir(kind))? {
            let name = entry?.file_name();
            if let Some((rid, rev)) = parse_file_name(&name.to_string_lossy()) {
                if rid == id {
                    latest = latest.max(rev);
                }
            }
        }
        Ok(latest)
    }

    fn read_raw<T: DeserializeOwned>(&self, kind: RecordKind, id: &str) -> Result<Record<T>, StoreError> {
        let revision = self.current_revision(kind, id)?;
        if revision == 0 {
            return Err(StoreError::NotFound { kind, id: id.to_string() });
        }
        let path = self.dir(kind).join(file_name(id, revision));
        let bytes = fs::read(&path)?;
        let env: Envelope<T> = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if env.kind != kind || env.id != id || env.revision != revision {
            return Err(StoreError::Corrupt {
                path,
                reason: "envelope does not match file name".into(),
            });
        }
        Ok(Record {
            id: env.id,
            revision: env.revision,
            updated_at: env.updated_at,
            payload: env.payload,
        })
    }

    /// Publishes revision `expected + 1` of `id`, failing if the current
    /// revision is not `expected`.
    fn write_raw<T: Serialize>(
        &self,
        kind: RecordKind,
        id: &str,
        expected: u64,
        payload: &T,
        updated_at: DateTime<Utc>,
    ) -> Result<u64, StoreError> {
        let conflict = |current| StoreError::RevisionConflict {
            kind,
            id: id.to_string(),
            expected,
            current,
        };
        let current = self.current_revision(kind, id)?;
        if current != expected {
            return Err(conflict(current));
        }
        let revision = expected + 1;
        let env = Envelope {
            kind,
            id: id.to_string(),
            revision,
            updated_at,
            payload,
        };
        let mut bytes = serde_json::to_vec_pretty(&env).map_err(io::Error::other)?;
        bytes.push(b'\n');

        let dir = self.dir(kind);
        let tmp = dir.join(format!(
            "{TEMP_PREFIX}{}-{}-{}",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed),
            file_name(id, revision)
        ));
        let result = (|| {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::hard_link(&tmp, dir.join(file_name(id, revision)))
        })();
        let _ = fs::remove_file(&tmp);
        match result {
            Ok(()) => {
                sync_dir(&dir)?;
                Ok(revision)
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(conflict(self.current_revision(kind, id)?))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn get_checklist(&self, id: &str) -> Result<Record<Checklist>, StoreError> {
        let raw: Record<ChecklistDoc> = self.read_raw(RecordKind::Checklist, id)?;
        raw.try_map(|doc| Ok(validate_checklist(doc)?))
    }

    pub fn get_note(&self, id: &str) -> Result<Record<ItemizedNote>, StoreError> {
        let raw: Record<NoteDoc> = self.read_raw(RecordKind::Note, id)?;
        raw.try_map(|doc| Ok(validate_note(doc, &self.config)?))
    }

    pub fn get_session(&self, id: &str) -> Result<Record<EvaluationSession>, StoreError> {
        let raw: Record<SessionDoc> = self.read_raw(RecordKind::Session, id)?;
        raw.try_map(|doc| {
            let checklist = self.get_checklist(&doc.checklist_id)?.payload;
            let note = self.get_note(&doc.note_id)?.payload;
            Ok(validate_session(doc, &checklist, &note)?)
        })
    }

    fn check_path_id(kind: RecordKind, path_id: &str, doc_id: &str) -> Result<(), StoreError> {
        if path_id != doc_id {
            return Err(StoreError::Invalid {
                reason: format!("{kind:?} id `{doc_id}` in body does not match `{path_id}`"),
            });
        }
        Ok(())
    }

    /// Sessions referring to a checklist or note must stay valid against a
    /// replacement document.
    fn check_dependents(
        &self,
        checklist: Option<&Checklist>,
        note: Option<&ItemizedNote>,
    ) -> Result<(), StoreError> {
        for sid in self.list_ids(RecordKind::Session)? {
            let raw: Record<SessionDoc> = self.read_raw(RecordKind::Session, &sid)?;
            let doc = raw.payload;
            let cl_match = checklist.filter(|c| c.checklist_id() == doc.checklist_id);
            let note_match = note.filter(|n| n.note_id() == doc.note_id);
            if cl_match.is_none() && note_match.is_none() {
                continue;
            }
            let cl = match cl_match {
                Some(c) => c.clone(),
                None => self.get_checklist(&doc.checklist_id)?.payload,
            };
            let n = match note_match {
                Some(n) => n.clone(),
                None => self.get_note(&doc.note_id)?.payload,
            };
            validate_session(doc, &cl, &n).map_err(|e| StoreError::Invalid {
                reason: format!("replacement would invalidate session `{sid}`: {e}"),
            })?;
        }
        Ok(())
    }

    pub fn put_checklist(
        &self,
        id: &str,
        doc: ChecklistDoc,
        expected: u64,
        at: DateTime<Utc>,
    ) -> Result<Record<Checklist>, StoreError> {
        Self::check_path_id(RecordKind::Checklist, id, &doc.checklist_id)?;
        let checklist = validate_checklist(doc)?;
        if expected > 0 {
            self.check_dependents(Some(&checklist), None)?;
        }
        let revision = self.write_raw(RecordKind::Checklist, id, expected, &checklist.to_doc(), at)?;
        Ok(Record { id: id.to_string(), revision, updated_at: at, payload: checklist })
    }

    /// Notes given without items are itemized with the store's splitting config.
    pub fn put_note(
        &self,
        id: &str,
        doc: NoteDoc,
        expected: u64,
        at: DateTime<Utc>,
    ) -> Result<Record<ItemizedNote>, StoreError> {
        Self::check_path_id(RecordKind::Note, id, &doc.note_id)?;
        let note = validate_note(doc, &self.config)?;
        if expected > 0 {
            self.check_dependents(None, Some(&note))?;
        }
        let revision = self.write_raw(RecordKind::Note, id, expected, &note.to_doc(), at)?;
        Ok(Record { id: id.to_string(), revision, updated_at: at, payload: note })
    }

    pub fn create_session(
        &self,
        session_id: &str,
        annotator_id: &str,
        checklist_id: &str,
        note_id: &str,
        at: DateTime<Utc>,
    ) -> Result<Record<EvaluationSession>, StoreError> {
        let checklist = self.get_checklist(checklist_id)?.payload;
        let note = self.get_note(note_id)?.payload;
        let session = EvaluationSession::start(session_id, annotator_id, &checklist, &note, at)?;
        let revision = self.write_raw(RecordKind::Session, session_id, 0, &session.to_doc(), at)?;
        Ok(Record { id: session_id.to_string(), revision, updated_at: at, payload: session })
    }

    /// Read-modify-write of a session. With `expected` set, the write fails on
    /// any intervening revision; without it the update is retried on top of
    /// the latest revision until it commits.
    pub fn update_session<F>(
        &self,
        id: &str,
        expected: Option<u64>,
        at: DateTime<Utc>,
        update: F,
    ) -> Result<Record<EvaluationSession>, StoreError>
    where
        F: Fn(&EvaluationSession, &Checklist, &ItemizedNote) -> Result<EvaluationSession, ValidationError>,
    {
        loop {
            let current = self.get_session(id)?;
            if let Some(e) = expected {
                if e != current.revision {
                    return Err(StoreError::RevisionConflict {
                        kind: RecordKind::Session,
                        id: id.to_string(),
                        expected: e,
                        current: current.revision,
                    });
                }
            }
            let checklist = self.get_checklist(current.payload.checklist_id())?.payload;
            let note = self.get_note(current.payload.note_id())?.payload;
            let next = update(&current.payload, &checklist, &note)?;
            match self.write_raw(RecordKind::Session, id, current.revision, &next.to_doc(), at) {
                Ok(revision) => {
                    return Ok(Record { id: id.to_string(), revision, updated_at: at, payload: next })
                }
                Err(StoreError::RevisionConflict { .. }) if expected.is_none() => continue,
                Err(e) => return Err(e),
            }
        }
    }

    pub fn checklists(&self) -> Result<Vec<Checklist>, StoreError> {
        self.list_ids(RecordKind::Checklist)?
            .iter()
            .map(|id| Ok(self.get_checklist(id)?.payload))
            .collect()
    }

    pub fn notes(&self) -> Result<Vec<ItemizedNote>, StoreError> {
        self.list_ids(RecordKind::Note)?
            .iter()
            .map(|id| Ok(self.get_note(id)?.payload))
            .collect()
    }

    pub fn sessions(&self) -> Result<Vec<EvaluationSession>, StoreError> {
        self.list_ids(RecordKind::Session)?
            .iter()
            .map(|id| Ok(self.get_session(id)?.payload))
            .collect()
    }

    /// Re-reads and re-validates every record; returns how many were checked.
    pub fn verify(&self) -> Result<usize, StoreError> {
        Ok(self.checklists()?.len() + self.notes()?.len() + self.sessions()?.len())
    }
}

impl<T> Record<T> {
    fn try_map<U>(self, f: impl FnOnce(T) -> Result<U, StoreError>) -> Result<Record<U>, StoreError> {
        Ok(Record {
            id: self.id,
            revision: self.revision,
            updated_at: self.updated_at,
            payload: f(self.payload)?,
        })
    }
}
