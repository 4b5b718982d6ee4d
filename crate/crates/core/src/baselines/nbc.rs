use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{bundle_rows, bundle_writer, csv_err, field, BaselineError, TrainDoc};

const BUNDLE_VERSION: &str = "nbc-1";

/// Multinomial naive Bayes over token counts, classes `[negative, positive]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NbcModel {
    alpha: f64,
    docs: [u64; 2],
    totals: [u64; 2],
    counts: BTreeMap<String, [u64; 2]>,
}

impl NbcModel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn priors(&self) -> [f64; 2] {
        let n = (self.docs[0] + self.docs[1]) as f64;
        [self.docs[0] as f64 / n, self.docs[1] as f64 / n]
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, token: &str) -> Option<[u64; 2]> {
        self.counts.get(token).copied()
    }

    /// Log-odds of the positive class; OOV tokens contribute nothing.
    pub fn log_odds<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let v = self.counts.len() as f64;
        let denom = [
            self.totals[0] as f64 + self.alpha * v,
            self.totals[1] as f64 + self.alpha * v,
        ];
        let mut z = (self.docs[1] as f64).ln() - (self.docs[0] as f64).ln();
        for t in tokens {
            if let Some(c) = self.counts.get(t.as_ref()) {
                z += ((c[1] as f64 + self.alpha) / denom[1]).ln()
                    - ((c[0] as f64 + self.alpha) / denom[0]).ln();
            }
        }
        z
    }

    pub fn write_bundle<W: Write>(&self, sink: W) -> Result<(), BaselineError> {
        let mut w = bundle_writer(sink);
        let mut row = |k: &str, n: &str, a: String, b: String| {
            w.write_record([k, n, a.as_str(), b.as_str()]).map_err(csv_err)
        };
        row("kind", "name", "a".into(), "b".into())?;
        row("version", BUNDLE_VERSION, String::new(), String::new())?;
        row("alpha", "", self.alpha.to_string(), String::new())?;
        row("docs", "", self.docs[0].to_string(), self.docs[1].to_string())?;
        for (token, c) in &self.counts {
            row("token", token, c[0].to_string(), c[1].to_string())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_bundle<R: Read>(source: R) -> Result<Self, BaselineError> {
        let mut alpha = None;
        let mut docs = None;
        let mut counts = BTreeMap::new();
        for (line, rec) in bundle_rows(source, BUNDLE_VERSION)?.into_iter().skip(1) {
            match &rec[0] {
                "alpha" => alpha = Some(field::<f64>(&rec, 2, line)?),
                "docs" => docs = Some([field(&rec, 2, line)?, field(&rec, 3, line)?]),
                "token" => {
                    let c = [field(&rec, 2, line)?, field(&rec, 3, line)?];
                    if counts.insert(rec[1].to_string(), c).is_some() {
                        return Err(BaselineError::Bundle {
                            line,
                            reason: format!("duplicate token `{}`", &rec[1]),
                        });
                    }
                }
                other => {
                    return Err(BaselineError::Bundle {
                        line,
                        reason: format!("unknown row kind `{other}`"),
                    })
                }
            }
        }
        let missing = |what: &str| BaselineError::Bundle {
            line: 0,
            reason: format!("missing {what} row"),
        };
        let alpha = alpha.ok_or_else(|| missing("alpha"))?;
        let docs: [u64; 2] = docs.ok_or_else(|| missing("docs"))?;
        if docs[0] == 0 || docs[1] == 0 || alpha <= 0.0 {
            return Err(BaselineError::DegenerateTraining);
        }
        let totals = counts.values().fold([0, 0], |acc: [u64; 2], c| {
            [acc[0] + c[0], acc[1] + c[1]]
        });
        Ok(Self {
            alpha,
            docs,
            totals,
            counts,
        })
    }
}

pub fn nbc_train(docs: &[TrainDoc<'_>], alpha: f64) -> Result<NbcModel, BaselineError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BaselineError::InvalidParameter(format!(
            "smoothing {alpha} must be positive"
        )));
    }
    let mut n_docs = [0u64; 2];
    let mut totals = [0u64; 2];
    let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    for d in docs {
        let c = usize::from(d.label);
        n_docs[c] += 1;
        for t in d.tokens {
            counts.entry(t.clone()).or_default()[c] += 1;
            totals[c] += 1;
        }
    }
    if n_docs[0] == 0 || n_docs[1] == 0 {
        return Err(BaselineError::DegenerateTraining);
    }
    Ok(NbcModel {
        alpha,
        docs: n_docs,
        totals,
        counts,
    })
}

/// Posterior probability of the positive class, kept strictly inside (0, 1).
pub fn nbc_score<S: AsRef<str>>(model: &NbcModel, tokens: &[S]) -> f64 {
    let z = model.log_odds(tokens);
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
