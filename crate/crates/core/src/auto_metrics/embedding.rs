//! Per-token embedding files.
//!
//! Layout: one line of compact JSON `{"dim":D,"token_count":N,"tokens":[...]}`
//! terminated by `\n` (0x0A), followed immediately by `N * D` little-endian
//! IEEE-754 `f32` values in row-major order (token 0's vector first). Extra
//! header fields are allowed and ignored. Nothing may follow the vectors.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding shape: {0}")]
    Shape(String),
    #[error("non-finite component in vector for token {0}")]
    NonFinite(usize),
    #[error("embedding header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("embedding file truncated: expected {expected} vector bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("embedding file has trailing bytes after the vectors")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One fixed-dimension vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    vectors: Vec<f32>,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(tokens: Vec<String>, vectors: Vec<f32>, dim: usize) -> Result<EmbeddingMatrix, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::Shape("dim must be positive".into()));
        }
        if vectors.len() != tokens.len() * dim {
            return Err(EmbeddingError::Shape(format!(
                "{} tokens x {dim} dims needs {} values, got {}",
                tokens.len(),
                tokens.len() * dim,
                vectors.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(pos / dim));
        }
        Ok(EmbeddingMatrix { tokens, vectors, dim })
    }

    pub fn from_rows(tokens: Vec<String>, rows: &[Vec<f32>]) -> Result<EmbeddingMatrix, EmbeddingError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EmbeddingError::Shape("rows differ in length".into()));
        }
        EmbeddingMatrix::new(tokens, rows.concat(), dim)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.tokens.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    token_count: usize,
    tokens: Vec<String>,
}

pub fn write_embedding_file<W: Write>(mut writer: W, matrix: &EmbeddingMatrix) -> Result<(), EmbeddingError> {
    let header = Header {
        dim: matrix.dim,
        token_count: matrix.tokens.len(),
        tokens: matrix.tokens.clone(),
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(matrix.vectors.len() * 4);
    for v in &matrix.vectors {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}

pub fn read_embedding_file<R: BufRead>(mut reader: R) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(EmbeddingError::Shape("missing header line".into()));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.tokens.len() != header.token_count {
        return Err(EmbeddingError::Shape(format!(
            "token_count {} but {} tokens listed",
            header.token_count,
            header.tokens.len()
        )));
    }
    let expected = header.token_count * header.dim * 4;
    let mut body = Vec::with_capacity(expected);
    reader.read_to_end(&mut body)?;
    if body.len() < expected {
        return Err(EmbeddingError::Truncated {
            expected,
            found: body.len(),
        });
    }
    if body.len() > expected {
        return Err(EmbeddingError::TrailingBytes);
    }
    let vectors = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingMatrix::new(header.tokens, vectors, header.dim)
}
