//! Per-layer recurrences and their backward passes over flat parameters.
//!
//! Each layer owns three blocks of the parameter vector: input weights `W`
//! (`G*H x I`), recurrent weights `U` (`G*H x H`) and bias `b` (`G*H`),
//! all row-major, where `G` is the number of gate blocks of the cell.
//! Gate blocks are stacked in the order i, f, g, o for the LSTM and
//! z, r, n for the GRU.

use super::CellKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub input: usize,
    pub hidden: usize,
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

impl LayerShape {
    pub fn rows(&self, kind: CellKind) -> usize {
        kind.gates() * self.hidden
    }

    pub fn end(&self, kind: CellKind) -> usize {
        self.b + self.rows(kind)
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub steps: usize,
    /// Inputs, `T x I`.
    pub xs: Vec<f64>,
    /// Hidden states, `(T+1) x H` with a zero initial row.
    pub hs: Vec<f64>,
    /// LSTM cell states, `(T+1) x H`.
    pub cs: Vec<f64>,
    /// Post-activation gates, `T x G*H`.
    pub gates: Vec<f64>,
    /// GRU reset-gated state `r * h_prev`, `T x H`.
    pub rh: Vec<f64>,
}

impl LayerCache {
    pub fn output(&self, hidden: usize) -> &[f64] {
        &self.hs[hidden..]
    }

    pub fn last(&self, hidden: usize) -> &[f64] {
        &self.hs[self.steps * hidden..]
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += M x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_acc(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T y`.
pub(crate) fn matvec_t_acc(m: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (&yr, row) in y.iter().zip(m.chunks_exact(cols)) {
        if yr != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }
}

/// `g += y x^T`.
pub(crate) fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yr, row) in y.iter().zip(g.chunks_exact_mut(cols)) {
        if yr != 0.0 {
            for (o, b) in row.iter_mut().zip(x) {
                *o += yr * b;
            }
        }
    }
}

pub(crate) fn forward(
    kind: CellKind,
    s: LayerShape,
    params: &[f64],
    xs: Vec<f64>,
    steps: usize,
) -> LayerCache {
    let (i_dim, h) = (s.input, s.hidden);
    let rows = s.rows(kind);
    let w = &params[s.w..s.w + rows * i_dim];
    let u = &params[s.u..s.u + rows * h];
    let b = &params[s.b..s.b + rows];
    let mut cache = LayerCache {
        steps,
        hs: vec![0.0; (steps + 1) * h],
        cs: if kind == CellKind::Lstm {
            vec![0.0; (steps + 1) * h]
        } else {
            Vec::new()
        },
        gates: vec![0.0; steps * rows],
        rh: if kind == CellKind::Gru {
            vec![0.0; steps * h]
        } else {
            Vec::new()
        },
        xs,
    };
    let mut pre = vec![0.0; rows];
    for t in 0..steps {
        let x = &cache.xs[t * i_dim..(t + 1) * i_dim];
        let (done, rest) = cache.hs.split_at_mut((t + 1) * h);
        let h_prev = &done[t * h..];
        let h_new = &mut rest[..h];
        let gates = &mut cache.gates[t * rows..(t + 1) * rows];
        pre.copy_from_slice(b);
        matvec_acc(w, i_dim, x, &mut pre);
        match kind {
            CellKind::Vanilla => {
                matvec_acc(u, h, h_prev, &mut pre);
                for k in 0..h {
                    gates[k] = pre[k].tanh();
                    h_new[k] = gates[k];
                }
            }
            CellKind::Lstm => {
                matvec_acc(u, h, h_prev, &mut pre);
                let (c_done, c_rest) = cache.cs.split_at_mut((t + 1) * h);
                let c_prev = &c_done[t * h..];
                let c_new = &mut c_rest[..h];
                for k in 0..h {
                    let ig = sigmoid(pre[k]);
                    let fg = sigmoid(pre[h + k]);
                    let gg = pre[2 * h + k].tanh();
                    let og = sigmoid(pre[3 * h + k]);
                    gates[k] = ig;
                    gates[h + k] = fg;
                    gates[2 * h + k] = gg;
                    gates[3 * h + k] = og;
                    c_new[k] = fg * c_prev[k] + ig * gg;
                    h_new[k] = og * c_new[k].tanh();
                }
            }
            CellKind::Gru => {
                matvec_acc(&u[..2 * h * h], h, h_prev, &mut pre[..2 * h]);
                let rh = &mut cache.rh[t * h..(t + 1) * h];
                for k in 0..2 * h {
                    gates[k] = sigmoid(pre[k]);
                }
                for k in 0..h {
                    rh[k] = gates[h + k] * h_prev[k];
                }
                matvec_acc(&u[2 * h * h..], h, rh, &mut pre[2 * h..]);
                for k in 0..h {
                    let z = gates[k];
                    let n = pre[2 * h + k].tanh();
                    gates[2 * h + k] = n;
                    h_new[k] = (1.0 - z) * n + z * h_prev[k];
                }
            }
        }
    }
    cache
}

/// Accumulates parameter gradients into `grad` given `d_out` (`T x H`, the
/// loss gradient w.r.t. each step's output) and returns the input gradient.
pub(crate) fn backward(
    kind: CellKind,
    s: LayerShape,
    params: &[f64],
    cache: &LayerCache,
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let (i_dim, h, steps) = (s.input, s.hidden, cache.steps);
    let rows = s.rows(kind);
    let w = &params[s.w..s.w + rows * i_dim];
    let u = &params[s.u..s.u + rows * h];
    let mut dxs = vec![0.0; steps * i_dim];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; rows];
    let mut dh = vec![0.0; h];
    for t in (0..steps).rev() {
        let x = &cache.xs[t * i_dim..(t + 1) * i_dim];
        let h_prev = &cache.hs[t * h..(t + 1) * h];
        let h_cur = &cache.hs[(t + 1) * h..(t + 2) * h];
        let gates = &cache.gates[t * rows..(t + 1) * rows];
        for k in 0..h {
            dh[k] = d_out[t * h + k] + dh_next[k];
        }
        dh_next.fill(0.0);
        match kind {
            CellKind::Vanilla => {
                for k in 0..h {
                    da[k] = dh[k] * (1.0 - h_cur[k] * h_cur[k]);
                }
                matvec_t_acc(u, h, &da, &mut dh_next);
                outer_acc(&mut grad[s.u..s.u + rows * h], &da, h_prev);
            }
            CellKind::Lstm => {
                let c_prev = &cache.cs[t * h..(t + 1) * h];
                let c_cur = &cache.cs[(t + 1) * h..(t + 2) * h];
                for k in 0..h {
                    let (ig, fg, gg, og) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                    let tc = c_cur[k].tanh();
                    let dc = dc_next[k] + dh[k] * og * (1.0 - tc * tc);
                    da[k] = dc * gg * ig * (1.0 - ig);
                    da[h + k] = dc * c_prev[k] * fg * (1.0 - fg);
                    da[2 * h + k] = dc * ig * (1.0 - gg * gg);
                    da[3 * h + k] = dh[k] * tc * og * (1.0 - og);
                    dc_next[k] = dc * fg;
                }
                matvec_t_acc(u, h, &da, &mut dh_next);
                outer_acc(&mut grad[s.u..s.u + rows * h], &da, h_prev);
            }
            CellKind::Gru => {
                let rh = &cache.rh[t * h..(t + 1) * h];
                for k in 0..h {
                    let (z, n) = (gates[k], gates[2 * h + k]);
                    da[k] = dh[k] * (h_prev[k] - n) * z * (1.0 - z);
                    da[2 * h + k] = dh[k] * (1.0 - z) * (1.0 - n * n);
                    dh_next[k] = dh[k] * z;
                }
                let mut d_rh = vec![0.0; h];
                matvec_t_acc(&u[2 * h * h..], h, &da[2 * h..], &mut d_rh);
                for k in 0..h {
                    let r = gates[h + k];
                    da[h + k] = d_rh[k] * h_prev[k] * r * (1.0 - r);
                    dh_next[k] += d_rh[k] * r;
                }
                matvec_t_acc(&u[..2 * h * h], h, &da[..2 * h], &mut dh_next);
                let gu = &mut grad[s.u..s.u + rows * h];
                outer_acc(&mut gu[..2 * h * h], &da[..2 * h], h_prev);
                outer_acc(&mut gu[2 * h * h..], &da[2 * h..], rh);
            }
        }
        outer_acc(&mut grad[s.w..s.w + rows * i_dim], &da, x);
        for (g, d) in grad[s.b..s.b + rows].iter_mut().zip(&da) {
            *g += d;
        }
        matvec_t_acc(w, i_dim, &da, &mut dxs[t * i_dim..(t + 1) * i_dim]);
    }
    dxs
}
