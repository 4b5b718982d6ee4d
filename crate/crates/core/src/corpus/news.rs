use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, NaiveDateTime, SubsecRound, Utc};
use serde_json::Value;

use super::CorpusError;

const CSV_HEADER: [&str; 6] = [
    "id",
    "timestamp",
    "ticker",
    "headline",
    "vendor_score",
    "vendor_confidence",
];

/// One timestamped headline bound to one ticker.
///
/// Compound symbols such as `ROSN RM` are kept as a single opaque ticker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsItem {
    pub id: u64,
    pub timestamp: DateTime<Utc>,
    pub ticker: String,
    pub headline: String,
    pub vendor_score: Option<i8>,
    pub vendor_confidence: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewsFormat {
    Csv,
    JsonLines,
}

impl NewsFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.ndjson` are
    /// JSON-lines, anything else CSV).
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => NewsFormat::JsonLines,
            _ => NewsFormat::Csv,
        }
    }
}

// Field values as text, shared by both input formats.
struct RawRecord {
    id: String,
    timestamp: String,
    ticker: String,
    headline: String,
    vendor_score: String,
    vendor_confidence: String,
}

/// Parses a news file. Any record violating the item invariants aborts the
/// parse with a row-indexed error (rows count data records from 0).
pub fn parse_news<R: Read>(source: R, format: NewsFormat) -> Result<Vec<NewsItem>, CorpusError> {
    match format {
        NewsFormat::Csv => parse_csv(source),
        NewsFormat::JsonLines => parse_jsonl(source),
    }
}

fn parse_csv<R: Read>(source: R) -> Result<Vec<NewsItem>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(CorpusError::BadHeader {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut items = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record?;
        if record.len() != CSV_HEADER.len() {
            return Err(CorpusError::row(
                row,
                "record",
                format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            ));
        }
        let raw = RawRecord {
            id: record[0].to_owned(),
            timestamp: record[1].to_owned(),
            ticker: record[2].to_owned(),
            headline: record[3].to_owned(),
            vendor_score: record[4].to_owned(),
            vendor_confidence: record[5].to_owned(),
        };
        items.push(validate(row, raw)?);
    }
    Ok(items)
}

fn parse_jsonl<R: Read>(source: R) -> Result<Vec<NewsItem>, CorpusError> {
    let mut items = Vec::new();
    let mut row = 0;
    for line in BufReader::new(source).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::row(row, "record", format!("invalid json: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::row(row, "record", "expected a json object"))?;
        let text = |key: &str| -> String {
            match obj.get(key) {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
            }
        };
        let raw = RawRecord {
            id: text("id"),
            timestamp: text("timestamp"),
            ticker: text("ticker"),
            headline: text("headline"),
            vendor_score: text("vendor_score"),
            vendor_confidence: text("vendor_confidence"),
        };
        items.push(validate(row, raw)?);
        row += 1;
    }
    Ok(items)
}

fn validate(row: usize, raw: RawRecord) -> Result<NewsItem, CorpusError> {
    let id = raw
        .id
        .trim()
        .parse::<u64>()
        .map_err(|e| CorpusError::row(row, "id", format!("`{}`: {e}", raw.id)))?;
    let timestamp = parse_timestamp(raw.timestamp.trim())
        .ok_or_else(|| CorpusError::row(row, "timestamp", format!("`{}`", raw.timestamp)))?;
    let ticker = raw.ticker.trim().to_owned();
    if ticker.is_empty() {
        return Err(CorpusError::row(row, "ticker", "empty"));
    }
    if raw.headline.trim().is_empty() {
        return Err(CorpusError::row(row, "headline", "empty"));
    }
    let vendor_score = match raw.vendor_score.trim() {
        "" => None,
        s => match s.parse::<i8>() {
            Ok(v @ -1..=1) => Some(v),
            _ => return Err(CorpusError::row(row, "vendor_score", format!("`{s}` not in {{-1,0,1}}"))),
        },
    };
    let vendor_confidence = match raw.vendor_confidence.trim() {
        "" => None,
        s => match s.parse::<u8>() {
            Ok(v @ 0..=100) => Some(v),
            _ => {
                return Err(CorpusError::row(
                    row,
                    "vendor_confidence",
                    format!("`{s}` not in [0,100]"),
                ))
            }
        },
    };
    if vendor_score.is_some() != vendor_confidence.is_some() {
        let field = if vendor_score.is_some() {
            "vendor_confidence"
        } else {
            "vendor_score"
        };
        return Err(CorpusError::row(
            row,
            field,
            "vendor score and confidence must be given together",
        ));
    }
    Ok(NewsItem {
        id,
        timestamp,
        ticker,
        headline: raw.headline,
        vendor_score,
        vendor_confidence,
    })
}

/// RFC-3339 instant, or an offset-less timestamp taken as UTC. Truncated to
/// milliseconds.
pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc()))
        .ok()?;
    Some(t.trunc_subsecs(3))
}

pub(crate) fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

pub fn write_news<W: Write>(
    items: &[NewsItem],
    sink: W,
    format: NewsFormat,
) -> Result<(), CorpusError> {
    match format {
        NewsFormat::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .quote_style(csv::QuoteStyle::Necessary)
                .from_writer(sink);
            writer.write_record(CSV_HEADER)?;
            for item in items {
                writer.write_record([
                    item.id.to_string(),
                    format_timestamp(&item.timestamp),
                    item.ticker.clone(),
                    item.headline.clone(),
                    item.vendor_score.map(|v| v.to_string()).unwrap_or_default(),
                    item.vendor_confidence.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
            writer.flush()?;
        }
        NewsFormat::JsonLines => {
            let mut sink = sink;
            for item in items {
                let value = serde_json::json!({
                    "id": item.id,
                    "timestamp": format_timestamp(&item.timestamp),
                    "ticker": item.ticker,
                    "headline": item.headline,
                    "vendor_score": item.vendor_score,
                    "vendor_confidence": item.vendor_confidence,
                });
                writeln!(sink, "{value}")?;
            }
            sink.flush()?;
        }
    }
    Ok(())
}
