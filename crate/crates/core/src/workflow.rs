//! Rolling train/dev/test windows and the per-window model lifecycle.
//!
//! A window is a run of consecutive trading days: `train_days` of training
//! data whose last tenth (rounded up) is held out as dev, followed by
//! `test_days` of test data. Successive windows start `step_days` apart.
//! Headlines belong to the window segment containing their session date.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::backtest::TimedScore;
use crate::baselines::{
    nbc_score, nbc_train, ssestm_score, ssestm_train, BaselineError, NbcModel, SsestmModel,
    SsestmParams, TrainDoc,
};
use crate::corpus::{tokenize, NewsItem, PriceBook, TradingCalendar};
use crate::embedding::{embed_static, EmbeddingError, HeadlineEmbedding, OovPolicy, StaticTable};
use crate::fraction::ceil_fraction;
use crate::labeling::{
    adjusted_return, label_eval, label_training, resolve_horizon, HeldOut, HorizonConfig,
    LabelError, LabelQuantile, LabeledExample, Split,
};
use crate::rnn::{read_checkpoint, train_with_history, EpochStats, write_checkpoint, RnnConfig, RnnError, RnnModel};

pub const DEV_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("invalid window spec: {0}")]
    InvalidWindows(String),
    #[error("{have} trading days cannot hold one window of {need}")]
    TooFewDays { need: usize, have: usize },
    #[error("no price series for `{0}`")]
    MissingSeries(String),
    #[error("no embedding for news {0}")]
    MissingEmbedding(u64),
    #[error("model `{0}` needs an embedding source")]
    NoEmbedder(ModelKind),
    #[error("window {window} has no {what}")]
    EmptyWindow { window: usize, what: &'static str },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub train_days: usize,
    pub test_days: usize,
    pub step_days: usize,
}

impl Default for WindowSpec {
    /// Three trading years of history, then one year of test.
    fn default() -> Self {
        Self {
            train_days: 750,
            test_days: 250,
            step_days: 250,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.train_days < 2 || self.test_days == 0 || self.step_days == 0 {
            return Err(WorkflowError::InvalidWindows(
                "need train_days >= 2 and positive test_days, step_days".into(),
            ));
        }
        Ok(())
    }

    pub fn dev_days(&self) -> usize {
        ceil_fraction(DEV_FRACTION, self.train_days).clamp(1, self.train_days - 1)
    }
}

/// Inclusive date bounds of one rolling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub index: usize,
    pub train_start: NaiveDate,
    pub dev_start: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Window {
    /// Segment a session date falls in, if any.
    pub fn split_of(&self, session: NaiveDate) -> Option<Split> {
        if session < self.train_start || session > self.test_end {
            None
        } else if session < self.dev_start {
            Some(Split::Train)
        } else if session < self.test_start {
            Some(Split::Dev)
        } else {
            Some(Split::Test)
        }
    }
}

/// Full windows over the sorted trading `dates`; a trailing partial test
/// span is dropped.
pub fn rolling_windows(dates: &[NaiveDate], spec: &WindowSpec) -> Result<Vec<Window>, WorkflowError> {
    spec.validate()?;
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(WorkflowError::InvalidWindows("dates are not strictly increasing".into()));
    }
    let span = spec.train_days + spec.test_days;
    if dates.len() < span {
        return Err(WorkflowError::TooFewDays {
            need: span,
            have: dates.len(),
        });
    }
    Ok((0..=dates.len() - span)
        .step_by(spec.step_days)
        .enumerate()
        .map(|(index, s)| Window {
            index,
            train_start: dates[s],
            dev_start: dates[s + spec.train_days - spec.dev_days()],
            test_start: dates[s + spec.train_days],
            test_end: dates[s + span - 1],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewsReturn {
    pub news_id: u64,
    pub session: NaiveDate,
    pub ret: f64,
}

/// Forward adjusted return of every headline with price coverage, plus the
/// number of headlines skipped for lack of it.
pub fn compute_returns(
    news: &[NewsItem],
    prices: &PriceBook,
    market: &str,
    cal: &TradingCalendar,
    horizon: &HorizonConfig,
) -> Result<(Vec<NewsReturn>, usize), WorkflowError> {
    let index = prices
        .get(market)
        .ok_or_else(|| WorkflowError::MissingSeries(market.to_string()))?;
    let mut out = Vec::with_capacity(news.len());
    let mut skipped = 0;
    for item in news {
        let Some(stock) = prices.get(&item.ticker) else {
            skipped += 1;
            continue;
        };
        let window = resolve_horizon(item, cal, horizon);
        match adjusted_return(stock, index, &window, cal) {
            Ok(ret) => out.push(NewsReturn {
                news_id: item.id,
                session: cal.session_date(item.timestamp),
                ret,
            }),
            Err(LabelError::NoPriceCoverage { .. }) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, skipped))
}

/// Quantile labels on the training segment and sign labels on dev and test,
/// sorted by news id.
pub fn label_window(
    window: &Window,
    returns: &[NewsReturn],
    quantile: LabelQuantile,
) -> Result<Vec<LabeledExample>, WorkflowError> {
    let mut parts: [Vec<(u64, f64)>; 3] = Default::default();
    for r in returns {
        let slot = match window.split_of(r.session) {
            Some(Split::Train) => 0,
            Some(Split::Dev) => 1,
            Some(Split::Test) => 2,
            None => continue,
        };
        parts[slot].push((r.news_id, r.ret));
    }
    let names = ["training headlines", "dev headlines", "test headlines"];
    if let Some(i) = parts.iter().position(Vec::is_empty) {
        return Err(WorkflowError::EmptyWindow {
            window: window.index,
            what: names[i],
        });
    }
    let mut rows = label_training(&parts[0], quantile)?;
    rows.extend(label_eval(&parts[1], HeldOut::Dev));
    rows.extend(label_eval(&parts[2], HeldOut::Test));
    rows.sort_by_key(|r| r.news_id);
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Nbc,
    Ssestm,
    /// Recurrent net over static word vectors.
    RnnStatic,
    /// Recurrent net over precomputed contextual embeddings.
    RnnContextual,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Nbc,
        ModelKind::Ssestm,
        ModelKind::RnnStatic,
        ModelKind::RnnContextual,
    ];

    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::RnnStatic | ModelKind::RnnContextual)
    }

    /// File extension of the saved model.
    pub fn artifact_extension(self) -> &'static str {
        if self.is_recurrent() {
            "rnn"
        } else {
            "csv"
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Nbc => "nbc",
            ModelKind::Ssestm => "ssestm",
            ModelKind::RnnStatic => "rnn-static",
            ModelKind::RnnContextual => "rnn-contextual",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown model `{s}` (nbc, ssestm, rnn-static, rnn-contextual)"))
    }
}

/// Where recurrent models get their input matrices.
#[derive(Debug, Clone)]
pub enum Embedder {
    Static { table: StaticTable, oov: OovPolicy },
    Precomputed(HashMap<u64, HeadlineEmbedding>),
}

impl Embedder {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Embedder::Static { table, .. } => Some(table.dim()),
            Embedder::Precomputed(m) => m.values().next().map(HeadlineEmbedding::cols),
        }
    }

    /// `Ok(None)` for a headline with nothing to embed.
    pub fn embed(&self, item: &NewsItem, tokens: &[String]) -> Result<Option<HeadlineEmbedding>, WorkflowError> {
        match self {
            Embedder::Static { table, oov } => match embed_static(item.id, tokens, table, *oov) {
                Ok(e) => Ok(Some(e)),
                Err(EmbeddingError::EmptyHeadline) => Ok(None),
                Err(e) => Err(e.into()),
            },
            Embedder::Precomputed(m) => m
                .get(&item.id)
                .cloned()
                .map(Some)
                .ok_or(WorkflowError::MissingEmbedding(item.id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub nbc_alpha: f64,
    pub ssestm: SsestmParams,
    pub rnn: RnnConfig,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            nbc_alpha: 1.0,
            ssestm: SsestmParams::default(),
            rnn: RnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Nbc(NbcModel),
    Ssestm(SsestmModel),
    Rnn(RnnModel),
}

/// A headline joined with its label row.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub item: &'a NewsItem,
    pub label: &'a LabeledExample,
}

pub fn fit_model(
    kind: ModelKind,
    params: &ModelParams,
    train: &[Example<'_>],
    dev: &[Example<'_>],
    embedder: Option<&Embedder>,
) -> Result<TrainedModel, WorkflowError> {
    Ok(fit_model_with_history(kind, params, train, dev, embedder)?.0)
}

/// [`fit_model`] plus the per-epoch losses of recurrent models (empty for
/// the word-frequency baselines).
pub fn fit_model_with_history(
    kind: ModelKind,
    params: &ModelParams,
    train: &[Example<'_>],
    dev: &[Example<'_>],
    embedder: Option<&Embedder>,
) -> Result<(TrainedModel, Vec<EpochStats>), WorkflowError> {
    let labeled = |set: &[Example<'_>]| -> Vec<(Vec<String>, bool, f64, usize)> {
        set.iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let y = e.label.label.is_positive()?;
                Some((tokenize(&e.item.headline), y, e.label.adjusted_return, i))
            })
            .collect()
    };
    let train_rows = labeled(train);
    match kind {
        ModelKind::Nbc | ModelKind::Ssestm => {
            let docs: Vec<TrainDoc<'_>> = train_rows
                .iter()
                .map(|(tokens, label, ret, _)| TrainDoc {
                    tokens,
                    label: *label,
                    ret: *ret,
                })
                .collect();
            let model = if kind == ModelKind::Nbc {
                TrainedModel::Nbc(nbc_train(&docs, params.nbc_alpha)?)
            } else {
                TrainedModel::Ssestm(ssestm_train(&docs, params.ssestm)?)
            };
            Ok((model, Vec::new()))
        }
        ModelKind::RnnStatic | ModelKind::RnnContextual => {
            let embedder = embedder.ok_or(WorkflowError::NoEmbedder(kind))?;
            let embed_all = |set: &[Example<'_>], rows: Vec<(Vec<String>, bool, f64, usize)>| {
                let mut out = Vec::with_capacity(rows.len());
                for (tokens, y, _, i) in rows {
                    if let Some(x) = embedder.embed(set[i].item, &tokens)? {
                        out.push((x, y));
                    }
                }
                Ok::<_, WorkflowError>(out)
            };
            let train_x = embed_all(train, train_rows)?;
            let dev_x = embed_all(dev, labeled(dev))?;
            let input_dim = match train_x.first() {
                Some((x, _)) => x.cols(),
                None => return Err(RnnError::EmptyBatch.into()),
            };
            let train_ref: Vec<(&HeadlineEmbedding, bool)> = train_x.iter().map(|(x, y)| (x, *y)).collect();
            let dev_ref: Vec<(&HeadlineEmbedding, bool)> = dev_x.iter().map(|(x, y)| (x, *y)).collect();
            let outcome = train_with_history(params.rnn.clone(), &train_ref, &dev_ref)?;
            debug_assert_eq!(outcome.model.input_dim(), input_dim);
            Ok((TrainedModel::Rnn(outcome.model), outcome.history))
        }
    }
}

impl TrainedModel {
    /// Probability that the headline moves its stock up.
    pub fn p_plus(&self, item: &NewsItem, embedder: Option<&Embedder>) -> Result<f64, WorkflowError> {
        let tokens = tokenize(&item.headline);
        match self {
            TrainedModel::Nbc(m) => Ok(nbc_score(m, &tokens)),
            TrainedModel::Ssestm(m) => Ok(ssestm_score(m, &tokens)),
            TrainedModel::Rnn(m) => {
                let embedder = embedder.ok_or(WorkflowError::NoEmbedder(ModelKind::RnnStatic))?;
                match embedder.embed(item, &tokens)? {
                    Some(x) => Ok(m.predict(&x)?),
                    None => Ok(0.5),
                }
            }
        }
    }

    pub fn write<W: Write>(&self, sink: W) -> Result<(), WorkflowError> {
        match self {
            TrainedModel::Nbc(m) => m.write_bundle(sink)?,
            TrainedModel::Ssestm(m) => m.write_bundle(sink)?,
            TrainedModel::Rnn(m) => write_checkpoint(m, sink)?,
        }
        Ok(())
    }

    pub fn read<R: Read>(kind: ModelKind, source: R) -> Result<Self, WorkflowError> {
        Ok(match kind {
            ModelKind::Nbc => TrainedModel::Nbc(NbcModel::read_bundle(source)?),
            ModelKind::Ssestm => TrainedModel::Ssestm(SsestmModel::read_bundle(source)?),
            ModelKind::RnnStatic | ModelKind::RnnContextual => TrainedModel::Rnn(read_checkpoint(source)?),
        })
    }
}

/// Joins scores with headline timestamps and tickers for the backtest.
/// Unknown ids are dropped.
pub fn timed_scores(news: &[NewsItem], scores: &[(u64, f64)]) -> Vec<TimedScore> {
    let by_id: HashMap<u64, &NewsItem> = news.iter().map(|n| (n.id, n)).collect();
    scores
        .iter()
        .filter_map(|&(id, score)| {
            by_id.get(&id).map(|n| TimedScore {
                timestamp: n.timestamp,
                ticker: n.ticker.clone(),
                score,
            })
        })
        .collect()
}
