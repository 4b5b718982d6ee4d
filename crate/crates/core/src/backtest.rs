//! Dollar-neutral daily strategies, close-to-close simulation and
//! performance metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;

use crate::corpus::{PriceBook, TradingCalendar};

/// Ticker -> signed target notional. Absent tickers hold nothing.
pub type Book = BTreeMap<String, f64>;

#[derive(Debug, Error, PartialEq)]
pub enum BacktestError {
    #[error("no price for {ticker} on {date}")]
    NoPriceCoverage { ticker: String, date: NaiveDate },
    #[error("sharpe ratio undefined: returns have zero dispersion")]
    DegenerateSharpe,
    #[error("need at least {needed} daily returns, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("book dates must be strictly increasing ({0})")]
    UnorderedDates(NaiveDate),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    /// Maximum headline age, in trading days.
    pub lookback: u32,
    /// Unit notional per S1 position.
    pub unit: f64,
    pub top_k: usize,
    /// Cost per unit of turnover.
    pub cost_rate: f64,
    /// Trading days per year for annualisation.
    pub trading_days: u32,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            lookback: 5,
            unit: 1.0,
            top_k: 20,
            cost_rate: 4e-4,
            trading_days: 250,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.lookback == 0
            || !(self.unit > 0.0 && self.unit.is_finite())
            || self.top_k == 0
            || !(self.cost_rate > 0.0 && self.cost_rate.is_finite())
            || self.trading_days == 0
        {
            return Err(BacktestError::InvalidConfig(format!(
                "all strategy parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Gross notional of each S2 leg.
    pub fn leg_notional(&self) -> f64 {
        self.top_k as f64 * self.unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Equal-notional top/bottom k names.
    S1,
    /// Score-proportional legs.
    S2,
}

impl Strategy {
    pub fn book(self, means: &BTreeMap<String, f64>, cfg: &StrategyConfig) -> Book {
        match self {
            Strategy::S1 => strategy_s1(means, cfg),
            Strategy::S2 => strategy_s2(means, cfg),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Strategy::S1),
            "s2" => Ok(Strategy::S2),
            other => Err(format!("unknown strategy `{other}` (s1, s2)")),
        }
    }
}

/// A scored headline with the fields the backtest needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedScore {
    pub timestamp: DateTime<Utc>,
    pub ticker: String,
    pub score: f64,
}

/// Mean score per ticker over headlines published by the close of `as_of`
/// whose session date lies at most `lookback` trading days earlier.
pub fn aggregate_scores(
    scores: &[TimedScore],
    as_of: NaiveDate,
    lookback: u32,
    cal: &TradingCalendar,
) -> BTreeMap<String, f64> {
    let cutoff = cal.close_instant(as_of);
    let mut acc: BTreeMap<&str, (f64, u32)> = BTreeMap::new();
    for s in scores {
        if s.timestamp > cutoff {
            continue;
        }
        if cal.trading_days_between(cal.session_date(s.timestamp), as_of) <= lookback {
            let e = acc.entry(s.ticker.as_str()).or_default();
            e.0 += s.score;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(t, (sum, n))| (t.to_string(), sum / f64::from(n)))
        .collect()
}

/// Books for each date in `dates`, formed from scores available by that
/// date's close.
pub fn daily_books(
    scores: &[TimedScore],
    dates: &[NaiveDate],
    cal: &TradingCalendar,
    cfg: &StrategyConfig,
    strategy: Strategy,
) -> Vec<(NaiveDate, Book)> {
    let mut by_session: Vec<(NaiveDate, &TimedScore)> =
        scores.iter().map(|s| (cal.session_date(s.timestamp), s)).collect();
    by_session.sort_by_key(|e| e.0);
    dates
        .iter()
        .map(|&d| {
            let start = (0..cfg.lookback).fold(d, |x, _| cal.prev_trading_day(x));
            let lo = by_session.partition_point(|e| e.0 < start);
            let hi = by_session.partition_point(|e| e.0 <= d);
            let mut acc: BTreeMap<&str, (f64, u32)> = BTreeMap::new();
            for (_, s) in &by_session[lo..hi] {
                let e = acc.entry(s.ticker.as_str()).or_default();
                e.0 += s.score;
                e.1 += 1;
            }
            let means = acc
                .into_iter()
                .map(|(t, (sum, n))| (t.to_string(), sum / f64::from(n)))
                .collect();
            (d, strategy.book(&means, cfg))
        })
        .collect()
}

/// Long the `k` highest and short the `k` lowest mean scores at `+-T`, with
/// `k = min(top_k, floor(n/2))`. Equal scores rank by ticker.
pub fn strategy_s1(means: &BTreeMap<String, f64>, cfg: &StrategyConfig) -> Book {
    let mut ranked: Vec<(&String, f64)> = means.iter().map(|(t, &s)| (t, s)).collect();
    // map order is by ticker; the stable sort keeps it among equal scores
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let k = cfg.top_k.min(ranked.len() / 2);
    let mut book = Book::new();
    for (t, _) in &ranked[..k] {
        book.insert((*t).clone(), cfg.unit);
    }
    for (t, _) in &ranked[ranked.len() - k..] {
        book.insert((*t).clone(), -cfg.unit);
    }
    book
}

/// Positive scores share a long leg and negative scores a short leg in
/// proportion to their magnitudes; each non-empty leg has gross
/// `top_k * T`.
pub fn strategy_s2(means: &BTreeMap<String, f64>, cfg: &StrategyConfig) -> Book {
    let leg = cfg.leg_notional();
    let pos: f64 = means.values().filter(|&&s| s > 0.0).sum();
    let neg: f64 = means.values().filter(|&&s| s < 0.0).map(|s| -s).sum();
    means
        .iter()
        .filter_map(|(t, &s)| {
            let notional = if s > 0.0 {
                leg * s / pos
            } else if s < 0.0 {
                leg * s / neg
            } else {
                return None;
            };
            Some((t.clone(), notional))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub date: NaiveDate,
    /// Gross exposure held into the day, `sum |pos_{d-1}|`.
    pub gross: f64,
    pub pnl: f64,
    pub turnover: f64,
    pub cost: f64,
    /// `(pnl - cost) / gross`, zero when nothing was held.
    pub net_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub rows: Vec<LedgerRow>,
    /// Target book set at each day's close.
    pub books: Vec<Book>,
}

impl Ledger {
    pub fn returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.net_return).collect()
    }

    pub fn total_pnl(&self) -> f64 {
        self.rows.iter().map(|r| r.pnl - r.cost).sum()
    }

    /// `(date, cumulative net P&L, cumulative sum of returns)`.
    pub fn cumulative(&self) -> Vec<(NaiveDate, f64, f64)> {
        let (mut pnl, mut ret) = (0.0, 0.0);
        self.rows
            .iter()
            .map(|r| {
                pnl += r.pnl - r.cost;
                ret += r.net_return;
                (r.date, pnl, ret)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["date", "gross", "pnl", "turnover", "cost", "net_return"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.gross.to_string(),
                r.pnl.to_string(),
                r.turnover.to_string(),
                r.cost.to_string(),
                r.net_return.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
    }

    pub fn write_cumulative_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["date", "cumulative_pnl", "cumulative_return"])
            .map_err(io)?;
        for (d, p, r) in self.cumulative() {
            w.write_record([d.to_string(), p.to_string(), r.to_string()])
                .map_err(io)?;
        }
        w.flush()
    }
}

fn close(prices: &PriceBook, ticker: &str, date: NaiveDate) -> Result<f64, BacktestError> {
    prices
        .get(ticker)
        .and_then(|s| s.close_on(date))
        .ok_or_else(|| BacktestError::NoPriceCoverage {
            ticker: ticker.to_string(),
            date,
        })
}

/// Holds each day's book from its close to the next book date's close.
pub fn simulate(
    books: &[(NaiveDate, Book)],
    prices: &PriceBook,
    cfg: &StrategyConfig,
    with_costs: bool,
) -> Result<Ledger, BacktestError> {
    let mut rows = Vec::with_capacity(books.len());
    let empty = Book::new();
    let mut prev: (Option<NaiveDate>, &Book) = (None, &empty);
    for (date, book) in books {
        let (prev_date, held) = prev;
        if prev_date.is_some_and(|p| p >= *date) {
            return Err(BacktestError::UnorderedDates(*date));
        }
        let mut pnl = 0.0;
        let mut gross = 0.0;
        if let Some(pd) = prev_date {
            for (t, &pos) in held {
                if pos != 0.0 {
                    pnl += pos * (close(prices, t, *date)? / close(prices, t, pd)? - 1.0);
                    gross += pos.abs();
                }
            }
        }
        let turnover = turnover(held, book);
        let cost = if with_costs { cfg.cost_rate * turnover } else { 0.0 };
        let net_return = if gross > 0.0 { (pnl - cost) / gross } else { 0.0 };
        rows.push(LedgerRow {
            date: *date,
            gross,
            pnl,
            turnover,
            cost,
            net_return,
        });
        prev = (Some(*date), book);
    }
    Ok(Ledger {
        rows,
        books: books.iter().map(|b| b.1.clone()).collect(),
    })
}

/// `sum_i |new_i - old_i|` over the union of tickers.
pub fn turnover(old: &Book, new: &Book) -> f64 {
    let mut total = 0.0;
    for (t, &o) in old {
        total += (new.get(t).copied().unwrap_or(0.0) - o).abs();
    }
    for (t, &n) in new {
        if !old.contains_key(t) {
            total += n.abs();
        }
    }
    total
}

pub fn annualized_return(returns: &[f64], trading_days: u32) -> Result<f64, BacktestError> {
    if returns.is_empty() {
        return Err(BacktestError::InsufficientData { needed: 1, have: 0 });
    }
    Ok(mean(returns) * f64::from(trading_days))
}

/// `mean / sample std * sqrt(D)`.
pub fn sharpe(returns: &[f64], trading_days: u32) -> Result<f64, BacktestError> {
    if returns.len() < 2 {
        return Err(BacktestError::InsufficientData {
            needed: 2,
            have: returns.len(),
        });
    }
    if returns.iter().all(|&r| r == returns[0]) {
        return Err(BacktestError::DegenerateSharpe);
    }
    let m = mean(returns);
    let var = returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (returns.len() - 1) as f64;
    if var == 0.0 {
        return Err(BacktestError::DegenerateSharpe);
    }
    Ok(m / var.sqrt() * f64::from(trading_days).sqrt())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PriceSeries;
    use crate::rng::SeededStream;
    use chrono::Duration;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as Gen;

    fn means(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(t, s)| (t.to_string(), *s)).collect()
    }

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn at_close(cal: &TradingCalendar, date: &str, minus_hours: i64) -> DateTime<Utc> {
        cal.close_instant(d(date)) - Duration::hours(minus_hours)
    }

    #[test]
    fn aggregation_window() {
        let cal = TradingCalendar::european();
        let ts = |date: &str, ticker: &str, score: f64| TimedScore {
            timestamp: at_close(&cal, date, 2),
            ticker: ticker.into(),
            score,
        };
        // Monday 2024-03-11; five trading days back is Monday 2024-03-04
        let scores = vec![
            ts("2024-03-11", "AAA", 1.0),
            ts("2024-03-07", "AAA", 0.0),
            ts("2024-03-04", "BBB", 0.4),
            ts("2024-03-01", "CCC", 0.9),
            ts("2024-03-12", "DDD", 0.9),
        ];
        let m = aggregate_scores(&scores, d("2024-03-11"), 5, &cal);
        assert_eq!(m, means(&[("AAA", 0.5), ("BBB", 0.4)]));
        assert!(aggregate_scores(&[], d("2024-03-11"), 5, &cal).is_empty());

        // published after the close counts for the next session
        let late = TimedScore { timestamp: cal.close_instant(d("2024-03-11")) + Duration::minutes(1), ..ts("2024-03-11", "EEE", 1.0) };
        assert!(aggregate_scores(std::slice::from_ref(&late), d("2024-03-11"), 5, &cal).is_empty());
        assert_eq!(aggregate_scores(&[late], d("2024-03-12"), 5, &cal).len(), 1);
    }

    #[test]
    fn s1_examples() {
        let cfg = StrategyConfig::default();
        let book = strategy_s1(&means(&[("a", 0.9), ("b", 0.5), ("c", 0.1), ("d", -0.2), ("e", -0.8)]), &cfg);
        assert_eq!(book, means(&[("a", 1.0), ("b", 1.0), ("d", -1.0), ("e", -1.0)]));
        assert!(strategy_s1(&BTreeMap::new(), &cfg).is_empty());

        let mut rng = SeededStream::new(5);
        let many: BTreeMap<String, f64> = (0..600).map(|i| (format!("T{i:03}"), rng.uniform_in(-1.0, 1.0))).collect();
        let book = strategy_s1(&many, &cfg);
        assert_eq!(book.values().filter(|&&v| v == 1.0).count(), 20);
        assert_eq!(book.values().filter(|&&v| v == -1.0).count(), 20);
        assert_eq!(book.len(), 40);
    }

    #[test]
    fn s1_ties_rank_by_ticker() {
        let cfg = StrategyConfig { top_k: 1, ..StrategyConfig::default() };
        let book = strategy_s1(&means(&[("b", 0.0), ("a", 0.0), ("c", 0.0)]), &cfg);
        assert_eq!(book, means(&[("a", 1.0), ("c", -1.0)]));
    }

    #[test]
    fn s2_examples() {
        let cfg = StrategyConfig::default();
        let book = strategy_s2(&means(&[("a", 0.6), ("b", 0.4), ("c", -1.0)]), &cfg);
        let expected = means(&[("a", 12.0), ("b", 8.0), ("c", -20.0)]);
        for (t, v) in &expected {
            assert!((book[t] - v).abs() < 1e-12);
        }
        assert_eq!(strategy_s2(&means(&[("a", 0.3)]), &cfg), means(&[("a", 20.0)]));
        assert!(strategy_s2(&means(&[("a", 0.0), ("b", 0.0)]), &cfg).is_empty());
    }

    fn flat_prices(tickers: &[&str], dates: &[NaiveDate]) -> PriceBook {
        let mut book = PriceBook::default();
        for t in tickers {
            let mut s = PriceSeries::new(*t);
            s.daily_closes = dates.iter().map(|&d| (d, 100.0)).collect();
            book.series.insert(t.to_string(), s);
        }
        book
    }

    #[test]
    fn flat_book_has_no_activity() {
        let cal = TradingCalendar::european();
        let dates = cal.trading_dates(d("2024-03-04"), d("2024-03-15"));
        let books: Vec<(NaiveDate, Book)> = dates.iter().map(|&x| (x, Book::new())).collect();
        let l = simulate(&books, &PriceBook::default(), &StrategyConfig::default(), true).unwrap();
        assert!(l.rows.iter().all(|r| r.net_return == 0.0 && r.cost == 0.0));
    }

    #[test]
    fn turnover_and_costs() {
        let cal = TradingCalendar::european();
        let dates = cal.trading_dates(d("2024-03-04"), d("2024-03-06"));
        let prices = flat_prices(&["X"], &dates);
        let books = vec![
            (dates[0], Book::new()),
            (dates[1], means(&[("X", 10.0)])),
            (dates[2], means(&[("X", -10.0)])),
        ];
        let l = simulate(&books, &prices, &StrategyConfig::default(), true).unwrap();
        let turn: Vec<f64> = l.rows.iter().map(|r| r.turnover).collect();
        assert_eq!(turn, [0.0, 10.0, 20.0]);
        assert!((l.rows[1].cost - 0.004).abs() < 1e-15);
        assert!((l.rows[2].cost - 0.008).abs() < 1e-15);
    }

    #[test]
    fn hedged_pair_cancels() {
        let cal = TradingCalendar::european();
        let dates = cal.trading_dates(d("2024-03-04"), d("2024-03-05"));
        let mut prices = flat_prices(&["A", "B"], &dates);
        for s in prices.series.values_mut() {
            s.daily_closes[1].1 = 101.0;
        }
        let book = means(&[("A", 1.0), ("B", -1.0)]);
        let books = vec![(dates[0], book.clone()), (dates[1], book)];
        let l = simulate(&books, &prices, &StrategyConfig::default(), false).unwrap();
        assert!(l.rows[1].pnl.abs() < 1e-15);
        assert_eq!(l.rows[1].gross, 2.0);
    }

    #[test]
    fn missing_price_is_an_error() {
        let cal = TradingCalendar::european();
        let dates = cal.trading_dates(d("2024-03-04"), d("2024-03-05"));
        let prices = flat_prices(&["A"], &dates[..1]);
        let books = vec![(dates[0], means(&[("A", 1.0)])), (dates[1], Book::new())];
        assert_eq!(
            simulate(&books, &prices, &StrategyConfig::default(), true),
            Err(BacktestError::NoPriceCoverage { ticker: "A".into(), date: dates[1] })
        );
    }

    #[test]
    fn metric_examples() {
        let constant = vec![0.0004; 250];
        assert!((annualized_return(&constant, 250).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(sharpe(&constant, 250), Err(BacktestError::DegenerateSharpe));
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert_eq!(sharpe(&alt, 250).unwrap(), 0.0);
        let s = sharpe(&[0.01, 0.02, 0.03], 250).unwrap();
        assert!((s - 2.0 * 250f64.sqrt()).abs() < 1e-9);
        assert!(sharpe(&[0.1], 250).is_err());
    }

    fn arb_means() -> impl Gen<Value = BTreeMap<String, f64>> {
        proptest::collection::btree_map("[A-Z]{1,4}", -1.0f64..1.0, 0..60)
    }

    proptest! {
        #[test]
        fn books_are_dollar_neutral(m in arb_means(), top_k in 1usize..30) {
            let cfg = StrategyConfig { top_k, ..StrategyConfig::default() };
            for book in [strategy_s1(&m, &cfg), strategy_s2(&m, &cfg)] {
                let long: f64 = book.values().filter(|&&v| v > 0.0).sum();
                let short: f64 = book.values().filter(|&&v| v < 0.0).sum();
                let gross: f64 = book.values().map(|v| v.abs()).sum();
                if long > 0.0 && short < 0.0 {
                    prop_assert!((long + short).abs() <= 1e-9 * gross);
                }
            }
            let s2 = strategy_s2(&m, &cfg);
            let long: f64 = s2.values().filter(|&&v| v > 0.0).sum();
            let short: f64 = s2.values().filter(|&&v| v < 0.0).sum();
            if long > 0.0 && short < 0.0 {
                prop_assert!((long - cfg.leg_notional()).abs() <= 1e-9 * cfg.leg_notional());
                prop_assert!((short + cfg.leg_notional()).abs() <= 1e-9 * cfg.leg_notional());
            }
        }

        #[test]
        fn books_ignore_score_scale(m in arb_means(), scale in 1e-3f64..1e3) {
            let cfg = StrategyConfig::default();
            let scaled: BTreeMap<String, f64> = m.iter().map(|(t, s)| (t.clone(), s * scale)).collect();
            prop_assert_eq!(strategy_s1(&m, &cfg), strategy_s1(&scaled, &cfg));
            let (a, b) = (strategy_s2(&m, &cfg), strategy_s2(&scaled, &cfg));
            prop_assert_eq!(a.len(), b.len());
            for (t, v) in &a {
                prop_assert!((b[t] - v).abs() <= 1e-12 * cfg.leg_notional());
            }
        }

        #[test]
        fn costs_never_help(seed in any::<u64>(), days in 2usize..30) {
            let cal = TradingCalendar::european();
            let dates: Vec<NaiveDate> = cal.trading_dates(d("2024-01-01"), d("2024-12-31")).into_iter().take(days).collect();
            let mut rng = SeededStream::new(seed);
            let tickers = ["A", "B", "C", "D"];
            let mut prices = PriceBook::default();
            for t in tickers {
                let mut s = PriceSeries::new(t);
                let mut p = 100.0;
                for &x in &dates {
                    p *= 1.0 + 0.02 * rng.gaussian();
                    s.daily_closes.push((x, p));
                }
                prices.series.insert(t.to_string(), s);
            }
            let books: Vec<(NaiveDate, Book)> = dates.iter().map(|&x| {
                let m = tickers.iter().map(|t| (t.to_string(), rng.uniform_in(-1.0, 1.0))).collect();
                (x, strategy_s2(&m, &StrategyConfig::default()))
            }).collect();
            let cfg = StrategyConfig::default();
            let net = simulate(&books, &prices, &cfg, true).unwrap();
            let raw = simulate(&books, &prices, &cfg, false).unwrap();
            let traded: f64 = net.rows.iter().map(|r| r.turnover).sum();
            prop_assert!(net.total_pnl() <= raw.total_pnl());
            prop_assert_eq!(net.total_pnl() == raw.total_pnl(), traded == 0.0);
        }

        #[test]
        fn no_look_ahead(seed in any::<u64>(), cut in 0usize..15) {
            let cal = TradingCalendar::european();
            let dates = cal.trading_dates(d("2024-03-01"), d("2024-03-29"));
            let mut rng = SeededStream::new(seed);
            let start = cal.open_instant(dates[0]) - Duration::days(3);
            let span = (cal.close_instant(*dates.last().unwrap()) - start).num_seconds();
            let mut scores: Vec<TimedScore> = (0..200).map(|_| TimedScore {
                timestamp: start + Duration::seconds(rng.below(span as usize) as i64),
                ticker: format!("T{}", rng.below(12)),
                score: rng.uniform_in(-1.0, 1.0),
            }).collect();
            let cfg = StrategyConfig { top_k: 3, ..StrategyConfig::default() };
            let before = daily_books(&scores, &dates, &cal, &cfg, Strategy::S1);
            let boundary = cal.close_instant(dates[cut]);
            // rewrite every score published after the cut day's close
            for s in scores.iter_mut().filter(|s| s.timestamp > boundary) {
                s.score = rng.uniform_in(-1.0, 1.0);
                s.ticker = format!("T{}", rng.below(12));
            }
            let after = daily_books(&scores, &dates, &cal, &cfg, Strategy::S1);
            prop_assert_eq!(&before[..=cut], &after[..=cut]);
        }

        #[test]
        fn daily_books_match_direct_aggregation(seed in any::<u64>()) {
            let cal = TradingCalendar::european();
            let dates = cal.trading_dates(d("2024-03-01"), d("2024-03-29"));
            let mut rng = SeededStream::new(seed);
            let start = cal.open_instant(dates[0]) - Duration::days(10);
            let scores: Vec<TimedScore> = (0..150).map(|_| TimedScore {
                timestamp: start + Duration::seconds(rng.below(40 * 86_400) as i64),
                ticker: format!("T{}", rng.below(8)),
                score: (rng.below(9) as f64 - 4.0) / 4.0,
            }).collect();
            let cfg = StrategyConfig::default();
            let books = daily_books(&scores, &dates, &cal, &cfg, Strategy::S2);
            for (date, book) in books {
                let direct = strategy_s2(&aggregate_scores(&scores, date, cfg.lookback, &cal), &cfg);
                prop_assert_eq!(book.len(), direct.len());
                for (t, v) in &book {
                    prop_assert!((direct[t] - v).abs() < 1e-9);
                }
            }
        }
    }
}
