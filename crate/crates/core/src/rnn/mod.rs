//! Stacked recurrent classifier over headline embedding matrices.
//!
//! The network runs each recurrent layer over the whole sequence, feeds the
//! last layer's final state to a two-logit affine head and applies a softmax.
//! Gradients come from hand-written backpropagation through time and are
//! checked against central finite differences by [`gradient_check`].

mod cell;
mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::embedding::HeadlineEmbedding;
use crate::rng::SeededStream;
use cell::{LayerCache, LayerShape};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{gradient_check, train, train_with_history, EpochStats, TrainOutcome};

/// Probability clamp used by the cross-entropy loss.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training data has a single class")]
    DegenerateTraining,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Vanilla,
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Vanilla, CellKind::Lstm, CellKind::Gru];

    /// Number of stacked gate blocks.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Vanilla => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            CellKind::Vanilla => 0,
            CellKind::Lstm => 1,
            CellKind::Gru => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown cell kind `{s}` (vanilla, lstm, gru)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub cell: CellKind,
    /// Hidden width per layer, bottom to top; non-increasing.
    pub layer_widths: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev-loss improvement before stopping.
    pub patience: usize,
    /// Minimum dev-loss decrease that counts as an improvement.
    pub tolerance: f64,
}

impl RnnConfig {
    /// Widths of the full-size network.
    pub const FULL_WIDTHS: [usize; 4] = [256, 128, 64, 32];

    pub fn validate(&self) -> Result<(), RnnError> {
        let bad = |m: String| Err(RnnError::InvalidConfig(m));
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return bad("layer widths must be non-empty and positive".into());
        }
        if self.layer_widths.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("layer widths {:?} increase", self.layer_widths));
        }
        if self.layer_widths.iter().any(|&w| w > u16::MAX as usize / 4) {
            return bad("layer width too large".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch budget must be positive".into());
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be >= 0".into());
        }
        Ok(())
    }
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Lstm,
            layer_widths: vec![16, 8],
            dropout: 0.5,
            seed: 0,
            learning_rate: 0.1,
            batch_size: 1,
            max_epochs: 30,
            patience: 3,
            tolerance: 1e-4,
        }
    }
}

/// Dropout behaviour for one forward pass.
pub enum Mode<'a> {
    Inference,
    /// Inverted dropout between recurrent layers, masks drawn from the stream.
    Training(&'a mut SeededStream),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    config: RnnConfig,
    input_dim: usize,
    layers: Vec<LayerShape>,
    head_w: usize,
    head_b: usize,
    params: Vec<f64>,
}

pub(crate) struct Trace {
    caches: Vec<LayerCache>,
    masks: Vec<Vec<f64>>,
    p: [f64; 2],
}

impl RnnModel {
    /// All-zero parameters.
    pub fn zeros(config: RnnConfig, input_dim: usize) -> Result<Self, RnnError> {
        config.validate()?;
        if input_dim == 0 || input_dim > u16::MAX as usize {
            return Err(RnnError::Shape(format!("input dimension {input_dim}")));
        }
        let mut layers = Vec::with_capacity(config.layer_widths.len());
        let mut offset = 0;
        let mut input = input_dim;
        for &hidden in &config.layer_widths {
            let rows = config.cell.gates() * hidden;
            let shape = LayerShape {
                input,
                hidden,
                w: offset,
                u: offset + rows * input,
                b: offset + rows * input + rows * hidden,
            };
            offset = shape.end(config.cell);
            layers.push(shape);
            input = hidden;
        }
        let head_w = offset;
        let head_b = head_w + 2 * input;
        Ok(Self {
            config,
            input_dim,
            layers,
            head_w,
            head_b,
            params: vec![0.0; head_b + 2],
        })
    }

    /// Seeded uniform initialisation in `+-1/sqrt(fan_in)`.
    pub fn new(config: RnnConfig, input_dim: usize) -> Result<Self, RnnError> {
        let mut model = Self::zeros(config, input_dim)?;
        let mut rng = SeededStream::new(model.config.seed);
        model.initialize(&mut rng);
        Ok(model)
    }

    pub(crate) fn initialize(&mut self, rng: &mut SeededStream) {
        let kind = self.config.cell;
        let fill = |p: &mut [f64], fan_in: usize, rng: &mut SeededStream| {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in p {
                *v = rng.uniform_in(-a, a);
            }
        };
        for s in self.layers.clone() {
            let (rows, i, h) = (s.rows(kind), s.input, s.hidden);
            fill(&mut self.params[s.w..s.w + rows * i], i, rng);
            fill(&mut self.params[s.u..s.u + rows * h], h, rng);
            fill(&mut self.params[s.b..s.b + rows], h, rng);
        }
        let top = self.top_width();
        let (hw, hb) = (self.head_w, self.head_b);
        fill(&mut self.params[hw..hb], top, rng);
        fill(&mut self.params[hb..hb + 2], top, rng);
    }

    pub fn config(&self) -> &RnnConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn top_width(&self) -> usize {
        *self.config.layer_widths.last().expect("validated non-empty")
    }

    /// Named parameter blocks `(name, rows, cols, offset)` in storage order.
    pub fn blocks(&self) -> Vec<(String, usize, usize, usize)> {
        let kind = self.config.cell;
        let mut out = Vec::new();
        for (l, s) in self.layers.iter().enumerate() {
            let rows = s.rows(kind);
            out.push((format!("layer{l}.w"), rows, s.input, s.w));
            out.push((format!("layer{l}.u"), rows, s.hidden, s.u));
            out.push((format!("layer{l}.b"), rows, 1, s.b));
        }
        out.push(("head.w".into(), 2, self.top_width(), self.head_w));
        out.push(("head.b".into(), 2, 1, self.head_b));
        out
    }

    /// Mutable view of one parameter block, as listed by [`Self::blocks`].
    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let (_, r, c, off) = self.blocks().into_iter().find(|b| b.0 == name)?;
        Some(&mut self.params[off..off + r * c])
    }

    fn check_input(&self, x: &HeadlineEmbedding) -> Result<(), RnnError> {
        if x.cols() != self.input_dim {
            return Err(RnnError::Shape(format!(
                "headline {} has {} columns, model expects {}",
                x.news_id,
                x.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &HeadlineEmbedding, mut mode: Mode<'_>) -> Result<Trace, RnnError> {
        self.check_input(x)?;
        let kind = self.config.cell;
        let steps = x.rows();
        let mut input: Vec<f64> = x.as_slice().iter().map(|&v| f64::from(v)).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::new();
        for (l, &s) in self.layers.iter().enumerate() {
            let cache = cell::forward(kind, s, &self.params, input, steps);
            if l + 1 < self.layers.len() {
                let mut next = cache.output(s.hidden).to_vec();
                if let Mode::Training(rng) = &mut mode {
                    if self.config.dropout > 0.0 {
                        let keep = 1.0 - self.config.dropout;
                        let mask: Vec<f64> = (0..next.len())
                            .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        next.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        masks.push(mask);
                    }
                }
                input = next;
            } else {
                input = Vec::new();
            }
            caches.push(cache);
        }
        let top = self.top_width();
        let last = caches.last().expect("at least one layer").last(top);
        let mut logits = [self.params[self.head_b], self.params[self.head_b + 1]];
        cell::matvec_acc(&self.params[self.head_w..self.head_b], top, last, &mut logits);
        let d = logits[1] - logits[0];
        let p = [cell::sigmoid(-d), cell::sigmoid(d)];
        Ok(Trace { caches, masks, p })
    }

    /// Class probabilities `[P-, P+]`.
    pub fn forward(&self, x: &HeadlineEmbedding, mode: Mode<'_>) -> Result<[f64; 2], RnnError> {
        Ok(self.trace(x, mode)?.p)
    }

    /// Inference-mode `P+`.
    pub fn predict(&self, x: &HeadlineEmbedding) -> Result<f64, RnnError> {
        Ok(self.forward(x, Mode::Inference)?[1])
    }

    /// Mean clamped cross-entropy in inference mode.
    pub fn loss(&self, batch: &[(&HeadlineEmbedding, bool)]) -> Result<f64, RnnError> {
        if batch.is_empty() {
            return Err(RnnError::EmptyBatch);
        }
        let mut total = 0.0;
        for (x, y) in batch {
            total += example_loss(self.forward(x, Mode::Inference)?, *y);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss and its analytic gradient in inference mode.
    pub fn gradient(&self, batch: &[(&HeadlineEmbedding, bool)]) -> Result<(f64, Vec<f64>), RnnError> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(batch, &mut Mode::Inference, &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn accumulate_gradient(
        &self,
        batch: &[(&HeadlineEmbedding, bool)],
        mode: &mut Mode<'_>,
        grad: &mut [f64],
    ) -> Result<f64, RnnError> {
        if batch.is_empty() {
            return Err(RnnError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (x, y) in batch {
            let m = match mode {
                Mode::Inference => Mode::Inference,
                Mode::Training(rng) => Mode::Training(rng),
            };
            let trace = self.trace(x, m)?;
            total += example_loss(trace.p, *y);
            self.backward(&trace, *y, scale, grad);
        }
        Ok(total * scale)
    }

    fn backward(&self, trace: &Trace, y: bool, scale: f64, grad: &mut [f64]) {
        let p_y = trace.p[usize::from(y)];
        if !(LOSS_EPS..=1.0 - LOSS_EPS).contains(&p_y) {
            // clamped: zero gradient
            return;
        }
        // d loss / d (l1 - l0)
        let dd = scale * if y { -trace.p[0] } else { trace.p[1] };
        let dlogits = [-dd, dd];
        let kind = self.config.cell;
        let top = self.top_width();
        let last_cache = trace.caches.last().expect("at least one layer");
        cell::outer_acc(&mut grad[self.head_w..self.head_b], &dlogits, last_cache.last(top));
        grad[self.head_b] += dlogits[0];
        grad[self.head_b + 1] += dlogits[1];

        let steps = last_cache.steps;
        let mut d_out = vec![0.0; steps * top];
        cell::matvec_t_acc(
            &self.params[self.head_w..self.head_b],
            top,
            &dlogits,
            &mut d_out[(steps - 1) * top..],
        );
        for l in (0..self.layers.len()).rev() {
            let dx = cell::backward(kind, self.layers[l], &self.params, &trace.caches[l], &d_out, grad);
            if l == 0 {
                break;
            }
            d_out = dx;
            if let Some(mask) = trace.masks.get(l - 1) {
                d_out.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
        }
    }
}

pub(crate) fn example_loss(p: [f64; 2], y: bool) -> f64 {
    -p[usize::from(y)].clamp(LOSS_EPS, 1.0 - LOSS_EPS).ln()
}

#[cfg(test)]
mod tests;
