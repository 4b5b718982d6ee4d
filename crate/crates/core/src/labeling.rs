//! Forward market-adjusted returns and class labels.
//!
//! Headlines published in trading hours are measured over a short intraday
//! horizon on minute bars. Everything else is re-anchored to the next open
//! and measured over whole trading days on daily closes, which makes the
//! out-of-hours return the close-to-close move spanning the headline.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use thiserror::Error;

use crate::corpus::{NewsItem, PriceSeries, TradingCalendar};
use crate::fraction::ceil_fraction;

/// Staleness tolerance for an intraday price lookup.
pub const MINUTE_GRACE: Duration = Duration::minutes(30);
/// Staleness tolerance, in trading days, for a daily-close lookup.
pub const DAILY_GRACE_DAYS: u32 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("no price coverage for {instrument} at {at}")]
    NoPriceCoverage {
        instrument: String,
        at: DateTime<Utc>,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for LabelError {
    fn from(e: csv::Error) -> Self {
        LabelError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConfig {
    /// Horizon for headlines inside trading hours.
    pub intraday: Duration,
    /// Horizon in trading days for headlines outside trading hours.
    pub overnight_days: u32,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            intraday: Duration::minutes(30),
            overnight_days: 1,
        }
    }
}

impl HorizonConfig {
    /// Candidate intraday horizons, in minutes.
    pub const INTRADAY_GRID: [i64; 4] = [5, 30, 60, 120];
    /// Candidate out-of-hours horizons, in trading days.
    pub const OVERNIGHT_GRID: [u32; 4] = [1, 2, 3, 5];

    pub fn new(intraday: Duration, overnight_days: u32) -> Result<Self, LabelError> {
        if intraday <= Duration::zero() || overnight_days == 0 {
            return Err(LabelError::InvalidConfig(
                "horizons must be strictly positive".into(),
            ));
        }
        Ok(Self {
            intraday,
            overnight_days,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Minute,
    Daily,
}

/// Measurement interval for one headline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub resolution: Resolution,
}

impl ForwardWindow {
    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

pub fn resolve_horizon(
    item: &NewsItem,
    cal: &TradingCalendar,
    cfg: &HorizonConfig,
) -> ForwardWindow {
    if cal.is_trading_hours(item.timestamp) {
        ForwardWindow {
            start: item.timestamp,
            end: item.timestamp + cfg.intraday,
            resolution: Resolution::Minute,
        }
    } else {
        let open = cal.next_open(item.timestamp);
        let open_date = cal.local_date(open);
        let end_date = cal.add_trading_days(open_date, cfg.overnight_days);
        ForwardWindow {
            start: open,
            end: cal.open_instant(end_date),
            resolution: Resolution::Daily,
        }
    }
}

// Observation used for a price lookup; `ordinal` orders observations of one
// series so the end price can be checked to be newer than the start price.
struct Observation {
    ordinal: i64,
    price: f64,
}

fn lookup(
    series: &PriceSeries,
    cal: &TradingCalendar,
    at: DateTime<Utc>,
    resolution: Resolution,
) -> Result<Observation, LabelError> {
    let missing = || LabelError::NoPriceCoverage {
        instrument: series.instrument.clone(),
        at,
    };
    match resolution {
        Resolution::Minute => {
            let (ts, price) = series.bar_at_or_before(at).ok_or_else(missing)?;
            if at - ts > MINUTE_GRACE {
                return Err(missing());
            }
            Ok(Observation {
                ordinal: ts.timestamp_millis(),
                price,
            })
        }
        Resolution::Daily => {
            let (date, price) = series.close_at_or_before(cal, at).ok_or_else(missing)?;
            if cal.trading_days_between(date, cal.local_date(at)) > DAILY_GRACE_DAYS {
                return Err(missing());
            }
            Ok(Observation {
                ordinal: date_ordinal(date),
                price,
            })
        }
    }
}

fn date_ordinal(d: NaiveDate) -> i64 {
    d.signed_duration_since(NaiveDate::MIN).num_days()
}

fn simple_return(
    series: &PriceSeries,
    cal: &TradingCalendar,
    window: &ForwardWindow,
) -> Result<f64, LabelError> {
    let start = lookup(series, cal, window.start, window.resolution)?;
    let end = lookup(series, cal, window.end, window.resolution)?;
    if end.ordinal <= start.ordinal {
        return Err(LabelError::NoPriceCoverage {
            instrument: series.instrument.clone(),
            at: window.end,
        });
    }
    Ok(end.price / start.price)
}

/// `P_s(end)/P_s(start) - P_m(end)/P_m(start)`.
pub fn adjusted_return(
    stock: &PriceSeries,
    market: &PriceSeries,
    window: &ForwardWindow,
    cal: &TradingCalendar,
) -> Result<f64, LabelError> {
    let s = simple_return(stock, cal, window)?;
    let m = simple_return(market, cal, window)?;
    Ok(s - m)
}

/// Fraction of headlines labeled on each side of the training distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelQuantile(f64);

impl LabelQuantile {
    pub fn new(q: f64) -> Result<Self, LabelError> {
        if q > 0.0 && q <= 0.5 {
            Ok(Self(q))
        } else {
            Err(LabelError::InvalidConfig(format!(
                "label quantile {q} outside (0, 0.5]"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Number of headlines labeled per class out of `n`.
    pub fn count(self, n: usize) -> usize {
        ceil_fraction(self.0, n).min(n / 2)
    }
}

impl Default for LabelQuantile {
    fn default() -> Self {
        Self(0.15)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
    Excluded,
}

impl Label {
    pub fn is_positive(self) -> Option<bool> {
        match self {
            Label::Negative => Some(false),
            Label::Positive => Some(true),
            Label::Excluded => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Negative => "0",
            Label::Positive => "1",
            Label::Excluded => "excluded",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "0" => Ok(Label::Negative),
            "1" => Ok(Label::Positive),
            "excluded" => Ok(Label::Excluded),
            other => Err(format!("bad label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("bad split `{other}`")),
        }
    }
}

/// Splits labeled with the sign rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOut {
    Dev,
    Test,
}

impl From<HeldOut> for Split {
    fn from(h: HeldOut) -> Split {
        match h {
            HeldOut::Dev => Split::Dev,
            HeldOut::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub news_id: u64,
    pub adjusted_return: f64,
    pub label: Label,
    pub split: Split,
}

/// Labels the top `ceil(q*n)` returns 1 and the bottom `ceil(q*n)` returns 0;
/// the rest are excluded. Equal returns are ordered by ascending id, so the
/// smallest ids fall to the bottom. Output keeps the input order.
pub fn label_training(
    examples: &[(u64, f64)],
    q: LabelQuantile,
) -> Result<Vec<LabeledExample>, LabelError> {
    if examples.is_empty() {
        return Err(LabelError::EmptyDataset);
    }
    let n = examples.len();
    let k = q.count(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ia, ra) = examples[a];
        let (ib, rb) = examples[b];
        ra.total_cmp(&rb).then(ia.cmp(&ib))
    });
    let mut labels = vec![Label::Excluded; n];
    for &i in &order[..k] {
        labels[i] = Label::Negative;
    }
    for &i in &order[n - k..] {
        labels[i] = Label::Positive;
    }
    Ok(examples
        .iter()
        .zip(labels)
        .map(|(&(news_id, adjusted_return), label)| LabeledExample {
            news_id,
            adjusted_return,
            label,
            split: Split::Train,
        })
        .collect())
}

/// Sign rule: 1 iff the return is strictly positive.
pub fn label_eval(examples: &[(u64, f64)], split: HeldOut) -> Vec<LabeledExample> {
    examples
        .iter()
        .map(|&(news_id, adjusted_return)| LabeledExample {
            news_id,
            adjusted_return,
            label: if adjusted_return > 0.0 {
                Label::Positive
            } else {
                Label::Negative
            },
            split: split.into(),
        })
        .collect()
}

const LABEL_HEADER: [&str; 4] = ["news_id", "adjusted_return", "label", "split"];

pub fn write_labeled<W: Write>(rows: &[LabeledExample], sink: W) -> Result<(), LabelError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(LABEL_HEADER)?;
    for r in rows {
        w.write_record([
            r.news_id.to_string(),
            r.adjusted_return.to_string(),
            r.label.to_string(),
            r.split.to_string(),
        ])?;
    }
    w.flush().map_err(|e| LabelError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_labeled<R: Read>(source: R) -> Result<Vec<LabeledExample>, LabelError> {
    let mut reader = csv::Reader::from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(LABEL_HEADER) {
        return Err(LabelError::Parse {
            row: 0,
            reason: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| LabelError::Parse { row, reason };
        let news_id = rec[0].parse().map_err(|e| bad(format!("news_id: {e}")))?;
        let adjusted_return = rec[1]
            .parse()
            .map_err(|e| bad(format!("adjusted_return: {e}")))?;
        let label: Label = rec[2].parse().map_err(bad)?;
        let split: Split = rec[3].parse().map_err(bad)?;
        if split != Split::Train && label == Label::Excluded {
            return Err(bad(format!("{split} rows cannot be excluded")));
        }
        rows.push(LabeledExample {
            news_id,
            adjusted_return,
            label,
            split,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Zone;
    use chrono::NaiveDateTime;
    use proptest::prelude::*;

    fn paris(s: &str) -> DateTime<Utc> {
        let local = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap();
        Zone::Named(chrono_tz::Europe::Paris).to_utc(local)
    }

    fn item_at(t: DateTime<Utc>) -> NewsItem {
        NewsItem {
            id: 1,
            timestamp: t,
            ticker: "AAA".into(),
            headline: "x".into(),
            vendor_score: None,
            vendor_confidence: None,
        }
    }

    #[test]
    fn in_hours_uses_intraday_horizon() {
        let cal = TradingCalendar::european();
        let w = resolve_horizon(&item_at(paris("2024-03-06 10:30")), &cal, &HorizonConfig::default());
        assert_eq!(w.duration(), Duration::minutes(30));
        assert_eq!(w.resolution, Resolution::Minute);
    }

    #[test]
    fn evening_news_is_one_trading_day_from_next_open() {
        let cal = TradingCalendar::european();
        let w = resolve_horizon(&item_at(paris("2024-03-06 20:00")), &cal, &HorizonConfig::default());
        assert_eq!(w.resolution, Resolution::Daily);
        assert_eq!(w.start, paris("2024-03-07 09:00"));
        assert_eq!(w.end, paris("2024-03-08 09:00"));
    }

    #[test]
    fn sunday_news_anchors_to_monday_open() {
        let cal = TradingCalendar::european();
        let w = resolve_horizon(&item_at(paris("2024-03-10 12:00")), &cal, &HorizonConfig::default());
        assert_eq!(w.start, paris("2024-03-11 09:00"));
        assert_eq!(w.end, paris("2024-03-12 09:00"));
    }

    fn minute_series(name: &str, points: &[(&str, f64)]) -> PriceSeries {
        let mut s = PriceSeries::new(name);
        s.minute_bars = points.iter().map(|(t, p)| (paris(t), *p)).collect();
        s
    }

    fn intraday_window() -> ForwardWindow {
        ForwardWindow {
            start: paris("2024-03-06 10:30"),
            end: paris("2024-03-06 11:00"),
            resolution: Resolution::Minute,
        }
    }

    #[test]
    fn adjusted_return_examples() {
        let cal = TradingCalendar::european();
        let w = intraday_window();
        let stock = minute_series("S", &[("2024-03-06 10:30", 100.0), ("2024-03-06 11:00", 102.0)]);
        let market = minute_series("M", &[("2024-03-06 10:30", 200.0), ("2024-03-06 11:00", 201.0)]);
        let r = adjusted_return(&stock, &market, &w, &cal).unwrap();
        assert!((r - 0.015).abs() < 1e-12);
        assert_eq!(adjusted_return(&stock, &stock, &w, &cal).unwrap(), 0.0);

        let down = minute_series("S", &[("2024-03-06 10:30", 50.0), ("2024-03-06 11:00", 49.0)]);
        let flat = minute_series("M", &[("2024-03-06 10:30", 80.0), ("2024-03-06 11:00", 80.0)]);
        let r = adjusted_return(&down, &flat, &w, &cal).unwrap();
        assert!((r + 0.02).abs() < 1e-12);
    }

    #[test]
    fn last_observation_at_or_before_is_used() {
        let cal = TradingCalendar::european();
        let stock = minute_series("S", &[("2024-03-06 10:21", 100.0), ("2024-03-06 10:52", 110.0)]);
        let market = minute_series("M", &[("2024-03-06 10:00", 1.0), ("2024-03-06 10:59", 1.0)]);
        let r = adjusted_return(&stock, &market, &intraday_window(), &cal).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_coverage_is_reported() {
        let cal = TradingCalendar::european();
        let w = intraday_window();
        let market = minute_series("M", &[("2024-03-06 10:30", 1.0), ("2024-03-06 11:00", 1.0)]);
        // series stops before the horizon
        let stale = minute_series("S", &[("2024-03-06 10:29", 1.0)]);
        assert!(matches!(
            adjusted_return(&stale, &market, &w, &cal),
            Err(LabelError::NoPriceCoverage { ref instrument, .. }) if instrument == "S"
        ));
        // nothing before the start
        let late = minute_series("S", &[("2024-03-06 10:45", 1.0), ("2024-03-06 11:00", 1.0)]);
        assert!(adjusted_return(&late, &market, &w, &cal).is_err());
        // start observation older than the grace window
        let old = minute_series("S", &[("2024-03-06 09:00", 1.0), ("2024-03-06 11:00", 1.0)]);
        assert!(adjusted_return(&old, &market, &w, &cal).is_err());
        let empty = PriceSeries::new("IDX");
        assert!(adjusted_return(&market, &empty, &w, &cal).is_err());
    }

    #[test]
    fn daily_window_uses_closes() {
        let cal = TradingCalendar::european();
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let mut stock = PriceSeries::new("S");
        stock.daily_closes = vec![(d("2024-03-08"), 100.0), (d("2024-03-11"), 104.0)];
        let mut market = PriceSeries::new("M");
        market.daily_closes = vec![(d("2024-03-08"), 50.0), (d("2024-03-11"), 51.0)];
        // Saturday headline: Friday close -> Monday close
        let w = resolve_horizon(&item_at(paris("2024-03-09 12:00")), &cal, &HorizonConfig::default());
        let r = adjusted_return(&stock, &market, &w, &cal).unwrap();
        assert!((r - 0.02).abs() < 1e-12);

        // series ending on Friday gives no coverage for the Monday close
        stock.daily_closes.pop();
        assert!(adjusted_return(&stock, &market, &w, &cal).is_err());
    }

    fn brute_force_labels(examples: &[(u64, f64)], k: usize) -> Vec<Label> {
        // count, for each example, how many others rank strictly below/above it
        examples
            .iter()
            .map(|&(id, r)| {
                let below = examples
                    .iter()
                    .filter(|&&(j, s)| s < r || (s == r && j < id))
                    .count();
                let above = examples.len() - 1 - below;
                if below < k {
                    Label::Negative
                } else if above < k {
                    Label::Positive
                } else {
                    Label::Excluded
                }
            })
            .collect()
    }

    #[test]
    fn ceiling_rule_on_seven_returns() {
        let ids = ["a", "b", "c", "d", "e", "f", "g"];
        let rets = [-0.005, -0.004, -0.001, 0.0, 0.001, 0.004, 0.005];
        let examples: Vec<(u64, f64)> = rets.iter().enumerate().map(|(i, &r)| (i as u64, r)).collect();
        let out = label_training(&examples, LabelQuantile::default()).unwrap();
        let got: Vec<(&str, Label)> = ids.iter().copied().zip(out.iter().map(|e| e.label)).collect();
        use Label::*;
        assert_eq!(
            got,
            [("a", Negative), ("b", Negative), ("c", Excluded), ("d", Excluded), ("e", Excluded), ("f", Positive), ("g", Positive)]
        );
        assert_eq!(out.iter().map(|e| e.label).collect::<Vec<_>>(), brute_force_labels(&examples, 2));
    }

    #[test]
    fn equal_returns_break_ties_by_id() {
        let examples: Vec<(u64, f64)> = [30, 10, 20, 40, 50, 60, 70, 80, 90, 100]
            .iter()
            .map(|&id| (id, 0.0))
            .collect();
        let out = label_training(&examples, LabelQuantile::default()).unwrap();
        let pos: Vec<u64> = out.iter().filter(|e| e.label == Label::Positive).map(|e| e.news_id).collect();
        let neg: Vec<u64> = out.iter().filter(|e| e.label == Label::Negative).map(|e| e.news_id).collect();
        assert_eq!(pos, [90, 100]);
        assert_eq!(neg, [10, 20]);
    }

    #[test]
    fn half_quantile_labels_everything() {
        let examples: Vec<(u64, f64)> = (0..10).map(|i| (i, i as f64 * 0.01)).collect();
        let out = label_training(&examples, LabelQuantile::new(0.5).unwrap()).unwrap();
        assert!(out.iter().all(|e| e.label != Label::Excluded));
    }

    #[test]
    fn training_errors_and_quantile_bounds() {
        assert_eq!(label_training(&[], LabelQuantile::default()), Err(LabelError::EmptyDataset));
        assert!(LabelQuantile::new(0.0).is_err());
        assert!(LabelQuantile::new(0.51).is_err());
        assert!(HorizonConfig::new(Duration::zero(), 1).is_err());
        assert!(HorizonConfig::new(Duration::minutes(5), 0).is_err());
    }

    #[test]
    fn eval_sign_rule() {
        let out = label_eval(&[(1, 0.001), (2, 0.0), (3, -0.001)], HeldOut::Test);
        let labels: Vec<Label> = out.iter().map(|e| e.label).collect();
        assert_eq!(labels, [Label::Positive, Label::Negative, Label::Negative]);
        assert!(out.iter().all(|e| e.split == Split::Test));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let mut rows = label_training(&[(1, 0.3), (2, -0.1), (3, 0.0)], LabelQuantile::default()).unwrap();
        rows.extend(label_eval(&[(4, 0.25)], HeldOut::Dev));
        let mut buf = Vec::new();
        write_labeled(&rows, &mut buf).unwrap();
        assert_eq!(read_labeled(&buf[..]).unwrap(), rows);
        let bad = "news_id,adjusted_return,label,split\n1,0.1,excluded,test\n";
        assert!(matches!(read_labeled(bad.as_bytes()), Err(LabelError::Parse { row: 0, .. })));
    }

    proptest! {
        #[test]
        fn training_counts_are_balanced(rets in proptest::collection::vec(-1.0f64..1.0, 2..300)) {
            let examples: Vec<(u64, f64)> = rets.iter().enumerate().map(|(i, &r)| (i as u64 * 7 % 1000, r)).collect();
            let q = LabelQuantile::default();
            let out = label_training(&examples, q).unwrap();
            let pos = out.iter().filter(|e| e.label == Label::Positive).count();
            let neg = out.iter().filter(|e| e.label == Label::Negative).count();
            let expected = ceil_fraction(0.15, examples.len()).min(examples.len() / 2);
            prop_assert_eq!(pos, expected);
            prop_assert_eq!(neg, expected);
            prop_assert_eq!(out.iter().map(|e| e.label).collect::<Vec<_>>(), brute_force_labels(&examples, expected));
        }

        #[test]
        fn training_labels_are_rank_based(
            rets in proptest::collection::vec(-1.0f64..1.0, 2..100),
            scale in 0.01f64..100.0,
            shift in -5.0f64..5.0,
        ) {
            let a: Vec<(u64, f64)> = rets.iter().enumerate().map(|(i, &r)| (i as u64, r)).collect();
            let b: Vec<(u64, f64)> = a.iter().map(|&(i, r)| (i, r * scale + shift)).collect();
            let la: Vec<Label> = label_training(&a, LabelQuantile::default()).unwrap().iter().map(|e| e.label).collect();
            let lb: Vec<Label> = label_training(&b, LabelQuantile::default()).unwrap().iter().map(|e| e.label).collect();
            prop_assert_eq!(la, lb);
        }

        #[test]
        fn intraday_horizon_only_inside_sessions(ms in 1_500_000_000_000i64..1_800_000_000_000) {
            let cal = TradingCalendar::european();
            let t = DateTime::from_timestamp_millis(ms).unwrap();
            let w = resolve_horizon(&item_at(t), &cal, &HorizonConfig::default());
            prop_assert_eq!(w.resolution == Resolution::Minute, cal.is_trading_hours(t));
            prop_assert!(w.end > w.start);
        }
    }
}
