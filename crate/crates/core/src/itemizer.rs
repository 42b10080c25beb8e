//! Rule-based splitting of a raw note into sentences and items.
//!
//! Sentences end at `.`, `!`, `?` and newlines. A period does not end a
//! sentence when it closes a protected abbreviation (`Dr.`, `e.g.`) or sits
//! between two digits (`3.5`). Each sentence is then cut at `,`, `;`, `:` and
//! standalone coordinating conjunctions. The first fragment of a sentence is
//! the top-level item and the remaining fragments are its sub-items. A colon
//! whose prefix is short enough to be a header (`PMH:`) is fused with the
//! fragment that follows it instead of splitting.
//!
//! Everything works on character boundaries of the original text, so item
//! texts are always slices of the input.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{build_itemized_note, check_id, ItemizedNote, NoteItem, ValidationError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItemizeError {
    #[error("input is empty")]
    EmptyInput,
    #[error("input contains only delimiters")]
    AllFragmentsEmpty,
}

/// Versioned splitting configuration. Pin one per evaluation for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub version: String,
    #[serde(default = "default_abbreviations")]
    pub abbreviations: Vec<String>,
    #[serde(default = "default_conjunctions")]
    pub conjunctions: Vec<String>,
    #[serde(default = "default_header_fuse_max_len")]
    pub header_fuse_max_len: usize,
}

fn default_abbreviations() -> Vec<String> {
    ["Dr", "Mr", "Mrs", "Ms", "e.g", "i.e", "hx", "pt", "vs", "etc"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn default_conjunctions() -> Vec<String> {
    ["and", "but", "or", "nor", "so", "yet"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn default_header_fuse_max_len() -> usize {
    4
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            version: "1".to_string(),
            abbreviations: default_abbreviations(),
            conjunctions: default_conjunctions(),
            header_fuse_max_len: default_header_fuse_max_len(),
        }
    }
}

impl SplitConfig {
    pub fn from_json(json: &str) -> Result<SplitConfig, serde_json::Error> {
        serde_json::from_str(json)
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        self.abbreviations
            .iter()
            .any(|a| a.eq_ignore_ascii_case(token))
    }

    fn is_conjunction(&self, word: &str) -> bool {
        let lower = word.to_lowercase();
        self.conjunctions.iter().any(|c| c.to_lowercase() == lower)
    }
}

/// A sentence and its byte range in the input (whitespace trimmed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub range: Range<usize>,
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 4] = ['"', '\'', ')', ']'];

pub fn split_sentences(text: &str, config: &SplitConfig) -> Result<Vec<Sentence>, ItemizeError> {
    if text.trim().is_empty() {
        return Err(ItemizeError::EmptyInput);
    }
    Ok(sentence_ranges(text, config)
        .into_iter()
        .map(|range| Sentence {
            text: text[range.clone()].to_string(),
            range,
        })
        .collect())
}

fn sentence_ranges(text: &str, config: &SplitConfig) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut raw = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        if c == '\n' {
            raw.push(start..at);
            start = at + 1;
        } else if TERMINATORS.contains(&c) && !(c == '.' && protected_period(&chars, i, config)) {
            let mut j = i;
            while j + 1 < chars.len() && TERMINATORS.contains(&chars[j + 1].1) {
                j += 1;
            }
            while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
                j += 1;
            }
            let end = chars[j].0 + chars[j].1.len_utf8();
            raw.push(start..end);
            start = end;
            i = j;
        }
        i += 1;
    }
    raw.push(start..text.len());
    raw.into_iter()
        .filter_map(|r| trim_range(text, r))
        .collect()
}

fn protected_period(chars: &[(usize, char)], i: usize, config: &SplitConfig) -> bool {
    let prev = i.checked_sub(1).map(|p| chars[p].1);
    let next = chars.get(i + 1).map(|n| n.1);
    if prev.is_some_and(|c| c.is_ascii_digit()) && next.is_some_and(|c| c.is_ascii_digit()) {
        return true;
    }
    let mut s = i;
    while s > 0 && (chars[s - 1].1.is_alphanumeric() || chars[s - 1].1 == '.') {
        s -= 1;
    }
    if s == i {
        return false;
    }
    let mut e = i + 1;
    while e < chars.len() && (chars[e].1.is_alphanumeric() || chars[e].1 == '.') {
        e += 1;
    }
    let token: String = chars[s..e].iter().map(|(_, c)| c).collect();
    config.is_abbreviation(token.trim_end_matches('.'))
}

fn trim_range(text: &str, range: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        let start = range.start + lead;
        Some(start..start + trimmed.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cut {
    Colon,
    Other,
}

/// Splits one sentence (given by its range) into item ranges.
fn fragment_ranges(text: &str, sentence: Range<usize>, config: &SplitConfig) -> Vec<Range<usize>> {
    let mut body = sentence.clone();
    while body.end > body.start {
        let chars: Vec<(usize, char)> = text[body.clone()].char_indices().collect();
        let (_, last) = *chars.last().expect("non-empty");
        // an abbreviation closing the sentence keeps its period
        if TERMINATORS.contains(&last) && !(last == '.' && protected_period(&chars, chars.len() - 1, config)) {
            body.end -= last.len_utf8();
        } else {
            break;
        }
    }

    // Pieces between cuts, and the kind of cut following each piece.
    let mut pieces: Vec<Range<usize>> = Vec::new();
    let mut cuts: Vec<Cut> = Vec::new();
    let mut piece_start = body.start;
    let mut word_start: Option<usize> = None;
    let slice = &text[body.clone()];
    let close_word = |word: Range<usize>, pieces: &mut Vec<Range<usize>>, cuts: &mut Vec<Cut>, piece_start: &mut usize| {
        if config.is_conjunction(&text[word.clone()]) {
            pieces.push(*piece_start..word.start);
            cuts.push(Cut::Other);
            *piece_start = word.end;
        }
    };
    for (offset, c) in slice.char_indices() {
        let at = body.start + offset;
        let is_cut = matches!(c, ',' | ';' | ':');
        if c.is_whitespace() || is_cut {
            if let Some(ws) = word_start.take() {
                close_word(ws..at, &mut pieces, &mut cuts, &mut piece_start);
            }
            if is_cut {
                pieces.push(piece_start..at);
                cuts.push(if c == ':' { Cut::Colon } else { Cut::Other });
                piece_start = at + c.len_utf8();
            }
        } else if word_start.is_none() {
            word_start = Some(at);
        }
    }
    if let Some(ws) = word_start.take() {
        close_word(ws..body.end, &mut pieces, &mut cuts, &mut piece_start);
    }
    pieces.push(piece_start..body.end);

    let mut fragments = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let piece = pieces[i].clone();
        let header_len = text[piece.clone()].trim().chars().count();
        let fuse = cuts.get(i) == Some(&Cut::Colon)
            && header_len > 0
            && header_len <= config.header_fuse_max_len;
        if fuse {
            let end = pieces[i + 1].end;
            fragments.push(piece.start..end);
            i += 2;
        } else {
            fragments.push(piece);
            i += 1;
        }
    }
    fragments
        .into_iter()
        .filter_map(|r| trim_range(text, r))
        .collect()
}

/// Splits `text` into note items. Item ids are `sentence.position`, where
/// position 0 is the sentence's top-level item.
pub fn itemize(text: &str, config: &SplitConfig) -> Result<Vec<NoteItem>, ItemizeError> {
    if text.trim().is_empty() {
        return Err(ItemizeError::EmptyInput);
    }
    let mut items = Vec::new();
    let mut sentence_index = 0;
    for sentence in sentence_ranges(text, config) {
        let fragments = fragment_ranges(text, sentence, config);
        if fragments.is_empty() {
            continue;
        }
        let top_id = format!("{sentence_index}.0");
        for (k, range) in fragments.into_iter().enumerate() {
            let parent = (k > 0).then(|| top_id.clone());
            items.push(NoteItem::new(
                format!("{sentence_index}.{k}"),
                text[range].to_string(),
                sentence_index,
                parent,
            ));
        }
        sentence_index += 1;
    }
    if items.is_empty() {
        return Err(ItemizeError::AllFragmentsEmpty);
    }
    Ok(items)
}

/// Itemizes a raw generated note into a validated [`ItemizedNote`].
pub fn itemize_note(
    note_id: &str,
    consultation_id: &str,
    text: &str,
    config: &SplitConfig,
) -> Result<ItemizedNote, ValidationError> {
    check_id(note_id)?;
    check_id(consultation_id)?;
    let items = itemize(text, config)?;
    Ok(build_itemized_note(
        note_id.to_string(),
        consultation_id.to_string(),
        text.to_string(),
        items,
    ))
}
