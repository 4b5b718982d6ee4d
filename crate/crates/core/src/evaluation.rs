//! Signed scores, extreme-percentile evaluation sets and classification
//! metrics.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::sync::LazyLock;

use thiserror::Error;

use crate::fraction::ceil_fraction;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("percentile {0} outside (0, 50)")]
    InvalidPercentile(f64),
    #[error("prediction {index} is for news {predicted}, label for news {labeled}")]
    Alignment {
        index: usize,
        predicted: u64,
        labeled: u64,
    },
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("report row {row}: {reason}")]
    Report { row: usize, reason: String },
}

/// `(p - 0.5) * 2`, mapping a probability onto `[-1, 1]`.
pub fn to_score(p_plus: f64) -> Result<f64, EvalError> {
    if (0.0..=1.0).contains(&p_plus) {
        Ok((p_plus - 0.5) * 2.0)
    } else {
        Err(EvalError::InvalidProbability(p_plus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredNews {
    pub news_id: u64,
    pub p_plus: f64,
    pub score: f64,
}

impl ScoredNews {
    pub fn new(news_id: u64, p_plus: f64) -> Result<Self, EvalError> {
        Ok(Self {
            news_id,
            p_plus,
            score: to_score(p_plus)?,
        })
    }

    /// Predicted class: positive iff the score is strictly positive.
    pub fn predicted_positive(&self) -> bool {
        self.score > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeThresholds {
    /// Per-tail percentile.
    pub n: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ExtremeThresholds {
    pub fn is_extreme(&self, score: f64) -> bool {
        score < self.lower || score > self.upper
    }
}

/// Nearest-rank percentiles `P_n` and `P_{100-n}` of `scores`.
pub fn percentile_thresholds(scores: &[f64], n: f64) -> Result<ExtremeThresholds, EvalError> {
    if !(n > 0.0 && n < 50.0) {
        return Err(EvalError::InvalidPercentile(n));
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let at = |pct: f64| sorted[ceil_fraction(pct / 100.0, m).clamp(1, m) - 1];
    Ok(ExtremeThresholds {
        n,
        lower: at(n),
        upper: at(100.0 - n),
    })
}

/// Scores strictly below `lower` or strictly above `upper`, in input order.
pub fn select_extreme(test: &[ScoredNews], th: &ExtremeThresholds) -> Vec<ScoredNews> {
    test.iter().copied().filter(|s| th.is_extreme(s.score)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    /// The same counts with the class names exchanged.
    pub fn relabeled(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Tallies predictions against labels; both lists must share id order.
pub fn confusion(predictions: &[ScoredNews], labels: &[(u64, bool)]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (index, (p, &(id, y))) in predictions.iter().zip(labels).enumerate() {
        if p.news_id != id {
            return Err(EvalError::Alignment {
                index,
                predicted: p.news_id,
                labeled: id,
            });
        }
        cm.add(p.predicted_positive(), y);
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    match cm.total() {
        0 => Err(EvalError::EmptyDataset),
        total => Ok((cm.tp + cm.tn) as f64 / total as f64),
    }
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom.sqrt()
    }
}

static STOPWORDS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    include_str!("../data/stopwords_en.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

/// The bundled English stopword list.
pub fn english_stopwords() -> &'static HashSet<&'static str> {
    &STOPWORDS
}

/// Top-`k` non-stopword tokens by relative frequency within `docs`; ties go
/// to the lexicographically smaller word.
pub fn frequent_words<S: AsRef<str>>(
    docs: &[Vec<S>],
    k: usize,
    stopwords: &HashSet<&str>,
) -> Vec<(String, f64)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut total = 0u64;
    for doc in docs {
        for t in doc {
            let t = t.as_ref();
            if !stopwords.contains(t) {
                *counts.entry(t).or_default() += 1;
                total += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    // stable sort keeps the map's lexicographic order among equal counts
    ranked.sort_by_key(|e| std::cmp::Reverse(e.1));
    ranked
        .into_iter()
        .take(k)
        .map(|(w, c)| (w.to_string(), c as f64 / total as f64))
        .collect()
}

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    /// Per-tail percentile.
    pub n: f64,
    pub set_size: usize,
    /// Absent when the extreme set is empty.
    pub accuracy: Option<f64>,
    pub mcc: f64,
}

impl EvalRow {
    pub fn from_confusion(model: &str, n: f64, cm: &ConfusionMatrix) -> Self {
        Self {
            model: model.to_string(),
            n,
            set_size: cm.total() as usize,
            accuracy: accuracy(cm).ok(),
            mcc: mcc(cm),
        }
    }
}

/// Confusion matrix of each extreme set implied by the per-tail
/// percentiles in `grid`, with thresholds from `train_scores`. `test` must
/// be id-aligned with `labels`.
pub fn extreme_confusions(
    train_scores: &[f64],
    test: &[ScoredNews],
    labels: &[(u64, bool)],
    grid: &[f64],
) -> Result<Vec<(f64, ConfusionMatrix)>, EvalError> {
    // validates alignment once for the full set
    confusion(test, labels)?;
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let th = percentile_thresholds(train_scores, n)?;
        let mut cm = ConfusionMatrix::default();
        for (p, &(_, y)) in test.iter().zip(labels) {
            if th.is_extreme(p.score) {
                cm.add(p.predicted_positive(), y);
            }
        }
        out.push((n, cm));
    }
    Ok(out)
}

pub fn evaluate_extremes(
    model: &str,
    train_scores: &[f64],
    test: &[ScoredNews],
    labels: &[(u64, bool)],
    grid: &[f64],
) -> Result<Vec<EvalRow>, EvalError> {
    Ok(extreme_confusions(train_scores, test, labels, grid)?
        .iter()
        .map(|(n, cm)| EvalRow::from_confusion(model, *n, cm))
        .collect())
}

const REPORT_HEADER: [&str; 5] = ["model", "n", "set_size", "accuracy", "mcc"];

pub fn write_report<W: Write>(rows: &[EvalRow], sink: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e);
    w.write_record(REPORT_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.n.to_string(),
            r.set_size.to_string(),
            r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.mcc.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
}

pub fn read_report<R: Read>(source: R) -> Result<Vec<EvalRow>, EvalError> {
    let mut r = csv::Reader::from_reader(source);
    let err = |row: usize, reason: String| EvalError::Report { row, reason };
    let header = r.headers().map_err(|e| err(0, e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(err(0, "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(i, e.to_string()))?;
        let num = |j: usize| rec[j].parse::<f64>().map_err(|e| err(i, format!("{}: {e}", REPORT_HEADER[j])));
        rows.push(EvalRow {
            model: rec[0].to_string(),
            n: num(1)?,
            set_size: rec[2].parse().map_err(|e| err(i, format!("set_size: {e}")))?,
            accuracy: if rec[3].is_empty() { None } else { Some(num(3)?) },
            mcc: num(4)?,
        });
    }
    Ok(rows)
}
