//! Per-headline embedding matrices and their on-disk formats.
//!
//! Two formats are supported: a whitespace-separated text table for static
//! token vectors, and the `EMB1` binary container for per-headline matrices
//! (see [`binary`]).

mod binary;
mod table;

use std::fmt;
use std::io;

use thiserror::Error;

pub use binary::{
    read_embeddings, read_index, read_record_at, write_embeddings, write_index, EmbeddingReader,
    EmbeddingWriter, FileHeader, HEADER_LEN, MAGIC,
};
pub use table::{embed_static, load_static_table, write_static_table, OovPolicy, StaticTable};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("truncated payload in record {record}")]
    Truncated { record: u32 },
    #[error("header contradiction: {0}")]
    HeaderMismatch(String),
    #[error("{extra} trailing bytes after the declared records")]
    TrailingData { extra: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate token `{token}`")]
    DuplicateToken { token: String },
    #[error("headline has no tokens")]
    EmptyHeadline,
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingSource {
    Static,
    Base,
    Tuned,
}

impl EmbeddingSource {
    pub fn tag(self) -> u8 {
        match self {
            EmbeddingSource::Static => 0,
            EmbeddingSource::Base => 1,
            EmbeddingSource::Tuned => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EmbeddingSource::Static),
            1 => Some(EmbeddingSource::Base),
            2 => Some(EmbeddingSource::Tuned),
            _ => None,
        }
    }

    /// Static vectors carry layer 0; contextual ones a 1-based layer.
    pub fn accepts_layer(self, layer: u16) -> bool {
        match self {
            EmbeddingSource::Static => layer == 0,
            _ => layer >= 1,
        }
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingSource::Static => "static",
            EmbeddingSource::Base => "base",
            EmbeddingSource::Tuned => "tuned",
        })
    }
}

/// A `rows x cols` row-major matrix of token vectors for one headline.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadlineEmbedding {
    pub news_id: u64,
    pub source: EmbeddingSource,
    pub layer: u16,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl HeadlineEmbedding {
    pub fn new(
        news_id: u64,
        source: EmbeddingSource,
        layer: u16,
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        if rows == 0 || cols == 0 {
            return Err(EmbeddingError::Shape(format!("{rows}x{cols} matrix")));
        }
        if rows > u16::MAX as usize || cols > u16::MAX as usize {
            return Err(EmbeddingError::Shape(format!(
                "{rows}x{cols} exceeds the u16 shape fields"
            )));
        }
        if data.len() != rows * cols {
            return Err(EmbeddingError::Shape(format!(
                "{rows}x{cols} matrix with {} values",
                data.len()
            )));
        }
        if !source.accepts_layer(layer) {
            return Err(EmbeddingError::HeaderMismatch(format!(
                "layer {layer} with {source} source"
            )));
        }
        Ok(Self {
            news_id,
            source,
            layer,
            rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Bitwise equality, distinguishing NaN payloads and signed zeros.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.news_id == other.news_id
            && self.source == other.source
            && self.layer == other.layer
            && self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
