use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, Utc};

use super::news::{format_timestamp, parse_timestamp};
use super::{CorpusError, TradingCalendar};

/// Corporate-action-adjusted closes and intraday bars for one instrument.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceSeries {
    pub instrument: String,
    pub daily_closes: Vec<(NaiveDate, f64)>,
    pub minute_bars: Vec<(DateTime<Utc>, f64)>,
}

impl PriceSeries {
    pub fn new(instrument: impl Into<String>) -> Self {
        Self {
            instrument: instrument.into(),
            ..Default::default()
        }
    }

    pub fn close_on(&self, date: NaiveDate) -> Option<f64> {
        self.daily_closes
            .binary_search_by_key(&date, |(d, _)| *d)
            .ok()
            .map(|i| self.daily_closes[i].1)
    }

    /// Last intraday bar at or before `t`.
    pub fn bar_at_or_before(&self, t: DateTime<Utc>) -> Option<(DateTime<Utc>, f64)> {
        let idx = self.minute_bars.partition_point(|(ts, _)| *ts <= t);
        idx.checked_sub(1).map(|i| self.minute_bars[i])
    }

    /// Last daily close whose close instant is at or before `t`.
    pub fn close_at_or_before(
        &self,
        cal: &TradingCalendar,
        t: DateTime<Utc>,
    ) -> Option<(NaiveDate, f64)> {
        let local = cal.local_date(t);
        // closes on `local` may or may not have happened yet
        let idx = self.daily_closes.partition_point(|(d, _)| *d <= local);
        let mut i = idx.checked_sub(1)?;
        if self.daily_closes[i].0 == local && cal.close_instant(local) > t {
            i = i.checked_sub(1)?;
        }
        Some(self.daily_closes[i])
    }
}

/// All instruments, keyed by symbol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceBook {
    pub series: BTreeMap<String, PriceSeries>,
}

impl PriceBook {
    pub fn get(&self, instrument: &str) -> Option<&PriceSeries> {
        self.series.get(instrument)
    }

    pub fn from_rows(
        daily: Vec<(String, NaiveDate, f64)>,
        minute: Vec<(String, DateTime<Utc>, f64)>,
    ) -> Self {
        let mut book = PriceBook::default();
        for (inst, date, price) in daily {
            book.entry(&inst).daily_closes.push((date, price));
        }
        for (inst, ts, price) in minute {
            book.entry(&inst).minute_bars.push((ts, price));
        }
        book
    }

    fn entry(&mut self, instrument: &str) -> &mut PriceSeries {
        self.series
            .entry(instrument.to_owned())
            .or_insert_with(|| PriceSeries::new(instrument))
    }

    /// Reads the daily-close and minute-bar files into one book.
    pub fn from_csv<D: Read, M: Read>(daily: D, minute: Option<M>) -> Result<Self, CorpusError> {
        let daily = parse_daily_closes(daily)?;
        let minute = match minute {
            Some(m) => parse_minute_bars(m)?,
            None => Vec::new(),
        };
        Ok(Self::from_rows(daily, minute))
    }
}

const PRICE_HEADER: [&str; 3] = ["instrument", "timestamp", "price"];

fn read_price_rows<R: Read, K: PartialOrd + Copy>(
    source: R,
    parse_key: impl Fn(&str) -> Option<K>,
) -> Result<Vec<(String, K, f64)>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    if header.iter().map(str::trim).ne(PRICE_HEADER) {
        return Err(CorpusError::BadHeader {
            expected: PRICE_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut last: BTreeMap<String, K> = BTreeMap::new();
    let mut rows = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record?;
        let instrument = record.get(0).unwrap_or("").trim();
        if instrument.is_empty() {
            return Err(CorpusError::row(row, "instrument", "empty"));
        }
        let raw_key = record.get(1).unwrap_or("").trim();
        let key = parse_key(raw_key)
            .ok_or_else(|| CorpusError::row(row, "timestamp", format!("`{raw_key}`")))?;
        let raw_price = record.get(2).unwrap_or("").trim();
        let price: f64 = raw_price
            .parse()
            .map_err(|_| CorpusError::row(row, "price", format!("`{raw_price}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(CorpusError::row(row, "price", "must be finite and positive"));
        }
        if let Some(prev) = last.get(instrument) {
            if key <= *prev {
                return Err(CorpusError::row(
                    row,
                    "timestamp",
                    "timestamps must be strictly increasing per instrument",
                ));
            }
        }
        last.insert(instrument.to_owned(), key);
        rows.push((instrument.to_owned(), key, price));
    }
    Ok(rows)
}

/// `instrument,timestamp,price` with `YYYY-MM-DD` dates.
pub fn parse_daily_closes<R: Read>(source: R) -> Result<Vec<(String, NaiveDate, f64)>, CorpusError> {
    read_price_rows(source, |s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
}

/// `instrument,timestamp,price` with RFC-3339 instants.
pub fn parse_minute_bars<R: Read>(
    source: R,
) -> Result<Vec<(String, DateTime<Utc>, f64)>, CorpusError> {
    read_price_rows(source, parse_timestamp)
}

pub fn write_daily_closes<W: Write>(book: &PriceBook, sink: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(PRICE_HEADER)?;
    for s in book.series.values() {
        for (date, price) in &s.daily_closes {
            w.write_record([s.instrument.as_str(), &date.to_string(), &price.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_minute_bars<W: Write>(book: &PriceBook, sink: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(PRICE_HEADER)?;
    for s in book.series.values() {
        for (ts, price) in &s.minute_bars {
            w.write_record([s.instrument.as_str(), &format_timestamp(ts), &price.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
