//! News, price and calendar ingestion.

mod calendar;
mod news;
mod prices;
mod tokenize;

pub use calendar::{CalendarError, TradingCalendar, Zone};
pub use news::{parse_news, write_news, NewsFormat, NewsItem};
pub use prices::{
    parse_daily_closes, parse_minute_bars, write_daily_closes, write_minute_bars, PriceBook,
    PriceSeries,
};
pub use tokenize::tokenize;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: field `{field}`: {reason}")]
    Row {
        row: usize,
        field: &'static str,
        reason: String,
    },
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("unreadable stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CorpusError {
    pub(crate) fn row(row: usize, field: &'static str, reason: impl Into<String>) -> Self {
        CorpusError::Row {
            row,
            field,
            reason: reason.into(),
        }
    }
}
