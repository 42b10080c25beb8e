//! Flat-folder study layout: one JSON document per file, named `{id}.json`.

use std::fs;
use std::path::{Path, PathBuf};

use cceval_core::itemizer::SplitConfig;
use cceval_core::model::{
    validate_checklist, validate_note, validate_session, ChecklistDoc, NoteDoc, SessionDoc,
};
use cceval_core::study::Study;
use cceval_core::{Checklist, EvaluationSession, ItemizedNote};
use serde::de::DeserializeOwned;

use crate::error::CliError;

/// `*.json` files in `dir`, sorted by file name.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn check_stem(path: &Path, id: &str) -> Result<(), CliError> {
    if stem(path) != id {
        return Err(CliError::validation(format!(
            "{}: file name must be `{id}.json`",
            path.display()
        )));
    }
    Ok(())
}

pub fn load_config(path: Option<&Path>) -> Result<SplitConfig, CliError> {
    match path {
        None => Ok(SplitConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            SplitConfig::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        }
    }
}

pub fn load_checklists(dir: &Path) -> Result<Vec<Checklist>, CliError> {
    json_files(dir)?
        .iter()
        .map(|p| {
            let doc: ChecklistDoc = read_json(p)?;
            check_stem(p, &doc.checklist_id)?;
            validate_checklist(doc).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn load_notes(dir: &Path, config: &SplitConfig) -> Result<Vec<ItemizedNote>, CliError> {
    json_files(dir)?
        .iter()
        .map(|p| {
            let doc: NoteDoc = read_json(p)?;
            check_stem(p, &doc.note_id)?;
            validate_note(doc, config).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn load_study(
    sessions_dir: &Path,
    checklists_dir: &Path,
    notes_dir: &Path,
    config: &SplitConfig,
) -> Result<Study, CliError> {
    let checklists = load_checklists(checklists_dir)?;
    let notes = load_notes(notes_dir, config)?;
    let mut sessions: Vec<EvaluationSession> = Vec::new();
    for p in json_files(sessions_dir)? {
        let doc: SessionDoc = read_json(&p)?;
        check_stem(&p, &doc.session_id)?;
        let cl = checklists
            .iter()
            .find(|c| c.checklist_id() == doc.checklist_id)
            .ok_or_else(|| CliError::validation(format!("{}: unknown checklist `{}`", p.display(), doc.checklist_id)))?;
        let note = notes
            .iter()
            .find(|n| n.note_id() == doc.note_id)
            .ok_or_else(|| CliError::validation(format!("{}: unknown note `{}`", p.display(), doc.note_id)))?;
        sessions.push(
            validate_session(doc, cl, note).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?,
        );
    }
    Study::new(checklists, notes, sessions).map_err(|e| CliError::validation(e.to_string()))
}
