use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{EmbeddingError, EmbeddingSource, HeadlineEmbedding};

/// Token -> vector lookup with a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
}

impl StaticTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: self.tokens.len() + 2,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(token) {
            return Err(EmbeddingError::DuplicateToken {
                token: token.to_string(),
            });
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.vectors.extend_from_slice(vector);
        Ok(())
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

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

pub fn load_static_table<R: BufRead>(source: R) -> Result<StaticTable, EmbeddingError> {
    let mut lines = source.lines();
    let header = lines.next().transpose()?.ok_or(EmbeddingError::Parse {
        line: 1,
        reason: "missing header".into(),
    })?;
    let parse_usize = |s: Option<&str>, what: &str| -> Result<usize, EmbeddingError> {
        s.and_then(|v| v.parse().ok()).ok_or(EmbeddingError::Parse {
            line: 1,
            reason: format!("header needs `count dimension`, bad {what}"),
        })
    };
    let mut fields = header.split_whitespace();
    let count = parse_usize(fields.next(), "count")?;
    let dim = parse_usize(fields.next(), "dimension")?;
    if fields.next().is_some() || dim == 0 {
        return Err(EmbeddingError::Parse {
            line: 1,
            reason: "header needs `count dimension` with dimension > 0".into(),
        });
    }

    let mut table = StaticTable::new(dim);
    let mut values = Vec::with_capacity(dim);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        values.clear();
        for f in fields {
            values.push(f.parse::<f32>().map_err(|e| EmbeddingError::Parse {
                line: line_no,
                reason: format!("value `{f}`: {e}"),
            })?);
        }
        if values.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        table.insert(token, &values)?;
    }
    if table.len() != count {
        return Err(EmbeddingError::Parse {
            line: 1,
            reason: format!("header declares {count} tokens, body has {}", table.len()),
        });
    }
    Ok(table)
}

pub fn write_static_table<W: Write>(table: &StaticTable, mut sink: W) -> Result<(), EmbeddingError> {
    writeln!(sink, "{} {}", table.len(), table.dim())?;
    for token in table.tokens() {
        write!(sink, "{token}")?;
        for v in table.get(token).expect("token from the table") {
            write!(sink, " {v}")?;
        }
        writeln!(sink)?;
    }
    Ok(())
}

/// Treatment of tokens missing from a static table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OovPolicy {
    /// Keep the position as an all-zero row.
    #[default]
    Zero,
    /// Drop the token.
    Skip,
}

/// Stacks the table vectors of `tokens` into a matrix, one row per token.
pub fn embed_static<S: AsRef<str>>(
    news_id: u64,
    tokens: &[S],
    table: &StaticTable,
    oov: OovPolicy,
) -> Result<HeadlineEmbedding, EmbeddingError> {
    let dim = table.dim();
    let mut data = Vec::with_capacity(tokens.len() * dim);
    let mut rows = 0;
    for token in tokens {
        match (table.get(token.as_ref()), oov) {
            (Some(v), _) => data.extend_from_slice(v),
            (None, OovPolicy::Zero) => data.resize(data.len() + dim, 0.0),
            (None, OovPolicy::Skip) => continue,
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(EmbeddingError::EmptyHeadline);
    }
    HeadlineEmbedding::new(news_id, EmbeddingSource::Static, 0, rows, dim, data)
}
