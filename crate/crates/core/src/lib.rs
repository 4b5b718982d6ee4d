//! Headline-driven stock movement prediction.
//!
//! The crate covers the whole path from raw news and prices to trading
//! results:
//!
//! * [`corpus`] ingests headlines, prices and the exchange calendar.
//! * [`labeling`] turns forward market-adjusted returns into class labels.
//! * [`embedding`] reads and writes per-headline embedding matrices.
//! * [`baselines`] holds the word-frequency classifiers (naive Bayes and a
//!   screening/topic-regression scorer).
//! * [`rnn`] is a stacked recurrent classifier with hand-written
//!   backpropagation through time and a finite-difference checker.
//! * [`evaluation`] builds extreme-score evaluation sets and metrics.
//! * [`backtest`] simulates the two dollar-neutral strategies with costs.
//! * [`synthetic`] generates planted-signal corpora for end-to-end checks.
//! * [`workflow`] splits a corpus into rolling train/dev/test windows.

pub mod backtest;
pub mod baselines;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod labeling;
pub mod rng;
pub mod rnn;
pub mod synthetic;
pub mod workflow;

mod fraction;

pub use backtest::{Book, Ledger, StrategyConfig};
pub use corpus::{NewsItem, PriceBook, PriceSeries, TradingCalendar};
pub use embedding::{EmbeddingSource, HeadlineEmbedding, StaticTable};
pub use evaluation::{ConfusionMatrix, ExtremeThresholds, ScoredNews};
pub use labeling::{HorizonConfig, Label, LabelQuantile, LabeledExample, Split};
pub use rnn::{CellKind, RnnConfig, RnnModel};
