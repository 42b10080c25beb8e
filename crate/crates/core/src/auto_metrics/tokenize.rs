use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    HumanNote,
    ChecklistFlattened,
    GeneratedNote,
}

/// Lower-cased alphanumeric tokens of a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    source_kind: SourceKind,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
    pub fn source_kind(&self) -> SourceKind {
        self.source_kind
    }
    pub fn len(&self) -> usize {
        self.tokens.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lower-cases and splits on every non-alphanumeric character. No stemming,
/// no stopword removal.
pub fn tokenize(text: &str, source_kind: SourceKind) -> TokenSequence {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenSequence {
        tokens,
        source_kind,
    }
}
