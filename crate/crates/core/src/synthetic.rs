//! Planted-signal corpora: headlines, minute bars, daily closes and a static
//! embedding table, all drawn from one seeded stream.
//!
//! Each trading day is split into 18 log-price increments: the overnight gap
//! into the 09:00 bar, then seventeen half-hour steps to the 17:30 bar, which
//! is also the daily close. A headline carrying a signal word shifts the
//! increment its label measures: the next half-hour step for in-session
//! headlines, the next session's overnight gap otherwise.

use chrono::{Days, Duration, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{NewsItem, PriceBook, PriceSeries, TradingCalendar};
use crate::embedding::StaticTable;
use crate::rng::SeededStream;

pub const BARS_PER_DAY: usize = 18;
const BAR_MINUTES: i64 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_stocks: usize,
    /// Trading days of prices.
    pub n_days: usize,
    /// Headlines per calendar day.
    pub headlines_per_day: usize,
    /// Background vocabulary size.
    pub vocab_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    /// Chance that a headline carries signal words.
    pub signal_probability: f64,
    /// A signal headline carries between 1 and this many words of one
    /// polarity, drawn uniformly.
    pub max_signal_words: usize,
    /// Log-price shift planted per signal word.
    pub effect_size: f64,
    /// Daily idiosyncratic volatility.
    pub noise_vol: f64,
    /// Daily volatility of the shared market factor.
    pub market_vol: f64,
    pub embedding_dim: usize,
    pub start: NaiveDate,
    pub market: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self {
            seed: 7,
            n_stocks: 50,
            n_days: 120,
            headlines_per_day: 40,
            vocab_size: 500,
            min_words: 5,
            max_words: 9,
            positive_words: words(&["upgraded", "beats", "surges", "buy"]),
            negative_words: words(&["downgraded", "misses", "plunges", "cut"]),
            signal_probability: 0.5,
            max_signal_words: 3,
            effect_size: 0.01,
            noise_vol: 0.002,
            market_vol: 0.002,
            embedding_dim: 16,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
            market: "IDX".into(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.n_stocks == 0 || self.n_days < 2 || self.vocab_size == 0 || self.embedding_dim == 0 {
            return bad("stocks, vocabulary and embedding dimension must be positive, days >= 2");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if self.positive_words.iter().any(|w| self.negative_words.contains(w)) {
            return bad("signal word lists overlap");
        }
        if self.max_signal_words == 0 {
            return bad("max_signal_words must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.signal_probability) {
            return bad("signal probability outside [0, 1]");
        }
        if self.signal_probability > 0.0
            && (self.positive_words.is_empty() || self.negative_words.is_empty())
        {
            return bad("both signal lists need words");
        }
        let signal = self.positive_words.iter().chain(&self.negative_words);
        for w in signal {
            if w.is_empty() || w.chars().any(|c| c.is_whitespace()) || crate::corpus::tokenize(w) != [w.as_str()] {
                return bad("signal words must be single lowercase tokens");
            }
            if self.background_index(w).is_some() {
                return bad("signal word collides with the background vocabulary");
            }
        }
        if !(self.effect_size >= 0.0 && self.noise_vol >= 0.0 && self.market_vol >= 0.0) {
            return bad("effect size and volatilities must be >= 0");
        }
        if self.market.is_empty() {
            return bad("market symbol is empty");
        }
        Ok(())
    }

    pub fn ticker(&self, i: usize) -> String {
        format!("S{:04}", i + 1)
    }

    pub fn background_word(&self, i: usize) -> String {
        format!("w{:04}", i + 1)
    }

    fn background_index(&self, w: &str) -> Option<usize> {
        let n: usize = w.strip_prefix('w')?.parse().ok()?;
        (w.len() >= 5 && (1..=self.vocab_size).contains(&n)).then(|| n - 1)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub news: Vec<NewsItem>,
    pub prices: PriceBook,
    pub calendar: TradingCalendar,
    pub table: StaticTable,
    pub market: String,
    /// Trading days covered by prices.
    pub dates: Vec<NaiveDate>,
}

// Index of the increment a headline's forward label measures, if priced.
fn planted_increment(
    cal: &TradingCalendar,
    dates: &[NaiveDate],
    t: chrono::DateTime<chrono::Utc>,
) -> Option<usize> {
    let day_index = |d: NaiveDate| dates.binary_search(&d).ok();
    if cal.is_trading_hours(t) {
        let d = cal.local_date(t);
        let k = ((t - cal.open_instant(d)).num_minutes() / BAR_MINUTES) as usize;
        Some(day_index(d)? * BARS_PER_DAY + k + 1)
    } else {
        let d = cal.local_date(cal.next_open(t));
        Some(day_index(d)? * BARS_PER_DAY)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SyntheticError> {
    spec.validate()?;
    let cal = TradingCalendar::european();
    let mut rng = SeededStream::new(spec.seed);

    let mut dates = Vec::with_capacity(spec.n_days);
    let mut d = if cal.is_trading_day(spec.start) {
        spec.start
    } else {
        cal.next_trading_day(spec.start)
    };
    while dates.len() < spec.n_days {
        dates.push(d);
        d = cal.next_trading_day(d);
    }
    let first = dates[0];
    let last = *dates.last().expect("n_days >= 2");

    // headlines, day by day in local time
    let n_incr = spec.n_days * BARS_PER_DAY;
    let mut shifts = vec![0.0f64; spec.n_stocks * n_incr];
    let mut news = Vec::new();
    let mut day = first;
    while day <= last {
        let mut batch = Vec::with_capacity(spec.headlines_per_day);
        for _ in 0..spec.headlines_per_day {
            let ms = rng.below(86_400_000) as i64;
            let local = day.and_time(NaiveTime::MIN) + Duration::milliseconds(ms);
            let timestamp = cal.zone().to_utc(local);
            let stock = rng.below(spec.n_stocks);
            let n_words = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
            let mut words: Vec<String> = (0..n_words)
                .map(|_| spec.background_word(rng.below(spec.vocab_size)))
                .collect();
            if rng.bernoulli(spec.signal_probability) {
                let positive = rng.bernoulli(0.5);
                let list = if positive { &spec.positive_words } else { &spec.negative_words };
                let count = 1 + rng.below(spec.max_signal_words);
                for _ in 0..count {
                    let word = list[rng.below(list.len())].clone();
                    let at = rng.below(words.len() + 1);
                    words.insert(at, word);
                }
                if let Some(k) = planted_increment(&cal, &dates, timestamp) {
                    let sign = if positive { 1.0 } else { -1.0 };
                    shifts[stock * n_incr + k] += sign * count as f64 * spec.effect_size;
                }
            }
            batch.push((timestamp, stock, words.join(" ")));
        }
        batch.sort_by_key(|b| b.0);
        for (timestamp, stock, headline) in batch {
            news.push(NewsItem {
                id: news.len() as u64 + 1,
                timestamp,
                ticker: spec.ticker(stock),
                headline,
                vendor_score: None,
                vendor_confidence: None,
            });
        }
        day = day + Days::new(1);
    }

    // log-price paths
    let step = (BARS_PER_DAY as f64).sqrt();
    let market: Vec<f64> = (0..n_incr).map(|_| spec.market_vol / step * rng.gaussian()).collect();
    let bar_times: Vec<_> = dates
        .iter()
        .flat_map(|&d| {
            let open = cal.open_instant(d);
            (0..BARS_PER_DAY as i64).map(move |k| open + Duration::minutes(BAR_MINUTES * k))
        })
        .collect();
    let mut prices = PriceBook::default();
    let mut index_sum = vec![0.0f64; n_incr];
    for s in 0..spec.n_stocks {
        let mut log_p = rng.uniform_in(20f64.ln(), 200f64.ln());
        let mut bars = Vec::with_capacity(n_incr);
        for k in 0..n_incr {
            log_p += market[k] + spec.noise_vol / step * rng.gaussian() + shifts[s * n_incr + k];
            let p = log_p.exp();
            bars.push((bar_times[k], p));
            index_sum[k] += p;
        }
        prices.series.insert(spec.ticker(s), series_from_bars(spec.ticker(s), &dates, bars));
    }
    let index_bars = bar_times
        .iter()
        .zip(&index_sum)
        .map(|(&t, &sum)| (t, sum / spec.n_stocks as f64))
        .collect();
    prices
        .series
        .insert(spec.market.clone(), series_from_bars(spec.market.clone(), &dates, index_bars));

    let mut table = StaticTable::new(spec.embedding_dim);
    let scale = 1.0 / (spec.embedding_dim as f64).sqrt();
    let vocab = (0..spec.vocab_size)
        .map(|i| spec.background_word(i))
        .chain(spec.positive_words.iter().cloned())
        .chain(spec.negative_words.iter().cloned());
    for w in vocab {
        let v: Vec<f32> = (0..spec.embedding_dim)
            .map(|_| (scale * rng.gaussian()) as f32)
            .collect();
        table
            .insert(&w, &v)
            .map_err(|e| SyntheticError::InvalidSpec(e.to_string()))?;
    }

    Ok(SyntheticCorpus {
        news,
        prices,
        calendar: cal,
        table,
        market: spec.market.clone(),
        dates,
    })
}

fn series_from_bars(
    name: String,
    dates: &[NaiveDate],
    bars: Vec<(chrono::DateTime<chrono::Utc>, f64)>,
) -> PriceSeries {
    let mut s = PriceSeries::new(name);
    s.daily_closes = dates
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, bars[(i + 1) * BARS_PER_DAY - 1].1))
        .collect();
    s.minute_bars = bars;
    s
}
