//! Word-frequency classifiers used as reference points for the RNN.

mod nbc;
mod ssestm;

use thiserror::Error;

pub use nbc::{nbc_score, nbc_train, NbcModel};
pub use ssestm::{ssestm_score, ssestm_train, SsestmModel, SsestmParams};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training data has a single class")]
    DegenerateTraining,
    #[error("no token survives screening")]
    NoSentimentWords,
    #[error("tone regression is singular: {0}")]
    SingularRegression(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bundle line {line}: {reason}")]
    Bundle { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One tokenized training headline.
#[derive(Debug, Clone, Copy)]
pub struct TrainDoc<'a> {
    pub tokens: &'a [String],
    pub label: bool,
    /// Forward market-adjusted return; only the screening scorer uses it.
    pub ret: f64,
}

// Shared CSV helpers for the `kind,name,a,b` audit bundles.
fn bundle_writer<W: std::io::Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(false).from_writer(sink)
}

fn csv_err(e: csv::Error) -> BaselineError {
    BaselineError::Io(std::io::Error::other(e))
}

fn bundle_rows<R: std::io::Read>(
    source: R,
    magic: &str,
) -> Result<Vec<(usize, csv::StringRecord)>, BaselineError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(["kind", "name", "a", "b"]) {
        return Err(BaselineError::Bundle {
            line: 1,
            reason: "expected header kind,name,a,b".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        rows.push((i + 2, rec.map_err(csv_err)?));
    }
    match rows.first() {
        Some((_, rec)) if &rec[0] == "version" && &rec[1] == magic => Ok(rows),
        _ => Err(BaselineError::Bundle {
            line: 2,
            reason: format!("expected version row `{magic}`"),
        }),
    }
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: usize,
) -> Result<T, BaselineError>
where
    T::Err: std::fmt::Display,
{
    rec[i].parse().map_err(|e| BaselineError::Bundle {
        line,
        reason: format!("field {i} `{}`: {e}", &rec[i]),
    })
}
