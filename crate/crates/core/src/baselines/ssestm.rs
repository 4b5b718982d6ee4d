use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{bundle_rows, bundle_writer, csv_err, field, BaselineError, TrainDoc};

const BUNDLE_VERSION: &str = "ssestm-1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsestmParams {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    /// Minimum number of training headlines containing a word.
    pub kappa: u64,
    pub lambda: f64,
    pub grid_step: f64,
}

impl Default for SsestmParams {
    fn default() -> Self {
        Self {
            alpha_plus: 0.6,
            alpha_minus: 0.4,
            kappa: 20,
            lambda: 0.1,
            grid_step: 1e-3,
        }
    }
}

impl SsestmParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: String| Err(BaselineError::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.alpha_minus)
            || !(0.0..=1.0).contains(&self.alpha_plus)
            || self.alpha_minus >= self.alpha_plus
        {
            return bad(format!(
                "screening thresholds need 0 <= alpha- < alpha+ <= 1, got {} / {}",
                self.alpha_minus, self.alpha_plus
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("penalty {} must be non-negative", self.lambda));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.5) {
            return bad(format!("grid step {} outside (0, 0.5]", self.grid_step));
        }
        Ok(())
    }

    fn grid_len(&self) -> usize {
        (1.0 / self.grid_step).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenedWord {
    pub positive_share: f64,
    pub doc_count: u64,
    /// Positive-tone intensity (column O+).
    pub o_plus: f64,
    /// Negative-tone intensity (column O-).
    pub o_minus: f64,
}

/// Screened vocabulary with a two-column tone matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SsestmModel {
    params: SsestmParams,
    words: BTreeMap<String, ScreenedWord>,
}

impl SsestmModel {
    /// Builds a model directly from tone columns, normalizing each to 1.
    pub fn from_tones(
        params: SsestmParams,
        tones: &[(&str, f64, f64)],
    ) -> Result<Self, BaselineError> {
        params.validate()?;
        let (sp, sm) = tones
            .iter()
            .fold((0.0, 0.0), |(a, b), t| (a + t.1, b + t.2));
        if tones.iter().any(|t| t.1 < 0.0 || t.2 < 0.0) || sp <= 0.0 || sm <= 0.0 {
            return Err(BaselineError::InvalidParameter(
                "tone columns must be non-negative with positive mass".into(),
            ));
        }
        let words = tones
            .iter()
            .map(|&(w, p, m)| {
                let sw = ScreenedWord {
                    positive_share: f64::NAN,
                    doc_count: 0,
                    o_plus: p / sp,
                    o_minus: m / sm,
                };
                (w.to_string(), sw)
            })
            .collect();
        Ok(Self { params, words })
    }

    pub fn params(&self) -> &SsestmParams {
        &self.params
    }

    pub fn words(&self) -> &BTreeMap<String, ScreenedWord> {
        &self.words
    }

    /// Penalized log-likelihood of tone `p` for the given screened counts.
    pub fn objective(&self, counts: &[(f64, f64, f64)], p: f64) -> f64 {
        let ll: f64 = counts
            .iter()
            .map(|&(c, op, om)| c * (p * op + (1.0 - p) * om).ln())
            .sum();
        ll + self.params.lambda * (p * (1.0 - p)).ln()
    }

    /// `(count, O+, O-)` for each screened word present in `tokens`.
    pub fn screened_counts<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(f64, f64, f64)> {
        let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
        for t in tokens {
            if let Some((w, _)) = self.words.get_key_value(t.as_ref()) {
                *counts.entry(w.as_str()).or_default() += 1.0;
            }
        }
        counts
            .into_iter()
            .map(|(w, c)| {
                let sw = &self.words[w];
                (c, sw.o_plus, sw.o_minus)
            })
            .collect()
    }

    pub fn write_bundle<W: Write>(&self, sink: W) -> Result<(), BaselineError> {
        let p = &self.params;
        let mut w = bundle_writer(sink);
        let mut row = |k: &str, n: &str, a: String, b: String| {
            w.write_record([k, n, a.as_str(), b.as_str()]).map_err(csv_err)
        };
        row("kind", "name", "a".into(), "b".into())?;
        row("version", BUNDLE_VERSION, String::new(), String::new())?;
        row("screen", "", p.alpha_plus.to_string(), p.alpha_minus.to_string())?;
        row("kappa", "", p.kappa.to_string(), String::new())?;
        row("penalty", "", p.lambda.to_string(), p.grid_step.to_string())?;
        for (word, sw) in &self.words {
            row("stats", word, sw.positive_share.to_string(), sw.doc_count.to_string())?;
            row("tone", word, sw.o_plus.to_string(), sw.o_minus.to_string())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_bundle<R: Read>(source: R) -> Result<Self, BaselineError> {
        let mut params = SsestmParams::default();
        let mut words: BTreeMap<String, ScreenedWord> = BTreeMap::new();
        let blank = || ScreenedWord {
            positive_share: f64::NAN,
            doc_count: 0,
            o_plus: 0.0,
            o_minus: 0.0,
        };
        for (line, rec) in bundle_rows(source, BUNDLE_VERSION)?.into_iter().skip(1) {
            match &rec[0] {
                "screen" => {
                    params.alpha_plus = field(&rec, 2, line)?;
                    params.alpha_minus = field(&rec, 3, line)?;
                }
                "kappa" => params.kappa = field(&rec, 2, line)?,
                "penalty" => {
                    params.lambda = field(&rec, 2, line)?;
                    params.grid_step = field(&rec, 3, line)?;
                }
                "stats" => {
                    let sw = words.entry(rec[1].to_string()).or_insert_with(blank);
                    sw.positive_share = field(&rec, 2, line)?;
                    sw.doc_count = field(&rec, 3, line)?;
                }
                "tone" => {
                    let sw = words.entry(rec[1].to_string()).or_insert_with(blank);
                    sw.o_plus = field(&rec, 2, line)?;
                    sw.o_minus = field(&rec, 3, line)?;
                }
                other => {
                    return Err(BaselineError::Bundle {
                        line,
                        reason: format!("unknown row kind `{other}`"),
                    })
                }
            }
        }
        params.validate()?;
        if words.is_empty() {
            return Err(BaselineError::NoSentimentWords);
        }
        Ok(Self { params, words })
    }
}

/// Ranks scaled into (0, 1) as `rank / (n + 1)`, ties sharing their mean rank.
fn rank_normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            out[k] = rank / (n as f64 + 1.0);
        }
        i = j + 1;
    }
    out
}

pub fn ssestm_train(
    docs: &[TrainDoc<'_>],
    params: SsestmParams,
) -> Result<SsestmModel, BaselineError> {
    params.validate()?;
    if !docs.iter().any(|d| d.label) || !docs.iter().any(|d| !d.label) {
        return Err(BaselineError::DegenerateTraining);
    }

    // screening on document frequencies
    let mut freq: BTreeMap<&str, [u64; 2]> = BTreeMap::new();
    for d in docs {
        let mut seen: Vec<&str> = d.tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            freq.entry(t).or_default()[usize::from(d.label)] += 1;
        }
    }
    let screened: Vec<(&str, f64, u64)> = freq
        .iter()
        .filter_map(|(&w, c)| {
            let k = c[0] + c[1];
            let f = c[1] as f64 / k as f64;
            let charged = f >= params.alpha_plus || f <= params.alpha_minus;
            (charged && k >= params.kappa).then_some((w, f, k))
        })
        .collect();
    if screened.is_empty() {
        return Err(BaselineError::NoSentimentWords);
    }
    let slot: BTreeMap<&str, usize> = screened
        .iter()
        .enumerate()
        .map(|(i, s)| (s.0, i))
        .collect();

    // term-frequency profiles of headlines that contain screened words
    let mut profiles: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rets = Vec::new();
    for d in docs {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in d.tokens {
            if let Some(&j) = slot.get(t.as_str()) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let total: f64 = counts.values().sum();
        if total > 0.0 {
            profiles.push(counts.into_iter().map(|(j, c)| (j, c / total)).collect());
            rets.push(d.ret);
        }
    }
    let p_hat = rank_normalize(&rets);

    // O = D W^T (W W^T)^{-1} with W = [p; 1-p]
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for &p in &p_hat {
        a += p * p;
        b += p * (1.0 - p);
        c += (1.0 - p) * (1.0 - p);
    }
    let det = a * c - b * b;
    if !(det.abs() > 1e-12 * (a * c).max(1e-300)) {
        return Err(BaselineError::SingularRegression(format!(
            "{} headlines carry screened words",
            p_hat.len()
        )));
    }
    let mut dw = vec![[0.0f64; 2]; screened.len()];
    for (profile, &p) in profiles.iter().zip(&p_hat) {
        for &(j, x) in profile {
            dw[j][0] += x * p;
            dw[j][1] += x * (1.0 - p);
        }
    }
    let mut tone: Vec<[f64; 2]> = dw
        .iter()
        .map(|&[u, v]| {
            [
                ((u * c - v * b) / det).max(0.0),
                ((v * a - u * b) / det).max(0.0),
            ]
        })
        .collect();
    let sums = tone
        .iter()
        .fold([0.0, 0.0], |s, t| [s[0] + t[0], s[1] + t[1]]);
    if sums[0] <= 0.0 || sums[1] <= 0.0 {
        return Err(BaselineError::SingularRegression(
            "a tone column is zero after clipping".into(),
        ));
    }
    for t in &mut tone {
        t[0] /= sums[0];
        t[1] /= sums[1];
    }
    let words = screened
        .iter()
        .zip(tone)
        .filter(|(_, t)| t[0] > 0.0 || t[1] > 0.0)
        .map(|(&(w, f, k), t)| {
            let sw = ScreenedWord {
                positive_share: f,
                doc_count: k,
                o_plus: t[0],
                o_minus: t[1],
            };
            (w.to_string(), sw)
        })
        .collect();
    Ok(SsestmModel { params, words })
}

/// Grid maximizer of the penalized tone likelihood; 0.5 without evidence.
pub fn ssestm_score<S: AsRef<str>>(model: &SsestmModel, tokens: &[S]) -> f64 {
    let counts = model.screened_counts(tokens);
    if counts.is_empty() {
        return 0.5;
    }
    let m = model.params.grid_len();
    let mut best = (f64::NEG_INFINITY, 0.5);
    for i in 1..m {
        let p = i as f64 / m as f64;
        let v = model.objective(&counts, p);
        if v > best.0 {
            best = (v, p);
        }
    }
    best.1
}
