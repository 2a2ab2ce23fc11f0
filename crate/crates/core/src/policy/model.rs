//! Stacked GRU language model over a flat parameter vector.
//!
//! Layout of the flat vector, in order:
//!
//! ```text
//! embedding            V x E
//! per layer l (input width I = E for l = 0, H otherwise):
//!     W_z, W_r, W_n    H x I   (three blocks)
//!     U_z, U_r, U_n    H x H   (three blocks)
//!     b_z, b_r, b_n    H       (three blocks)
//! output projection    V x H
//! output bias          V
//! ```
//!
//! The cell is `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
//! `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`, `h' = (1 - z) ⊙ n + z ⊙ h`.
//! Logits are read from the top layer. The hidden state before any input is
//! zero, so the first token of a solution with an empty context is predicted
//! from the output bias alone.

use serde::{Deserialize, Serialize};

use super::vocab::TokenId;
use crate::error::{Error, Result};

/// Layer dimensions of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
}

impl ShapeMeta {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    fn layer_size(&self, layer: usize) -> usize {
        let h = self.hidden_dim;
        3 * h * self.layer_input(layer) + 3 * h * h + 3 * h
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = (0..self.layers).map(|l| self.layer_size(l)).sum();
        self.vocab_size * self.embed_dim + layers + self.vocab_size * self.hidden_dim + self.vocab_size
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    input: usize,
    wz: usize,
    wr: usize,
    wn: usize,
    uz: usize,
    ur: usize,
    un: usize,
    bz: usize,
    br: usize,
    bn: usize,
}

/// Offsets of every parameter block in the flat vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub shape: ShapeMeta,
    layers: Vec<LayerOffsets>,
    wo: usize,
    bo: usize,
}

impl Layout {
    pub fn new(shape: ShapeMeta) -> Self {
        let (e, h, v) = (shape.embed_dim, shape.hidden_dim, shape.vocab_size);
        let mut at = v * e;
        let mut layers = Vec::with_capacity(shape.layers);
        for l in 0..shape.layers {
            let i = shape.layer_input(l);
            let o = LayerOffsets {
                input: i,
                wz: at,
                wr: at + h * i,
                wn: at + 2 * h * i,
                uz: at + 3 * h * i,
                ur: at + 3 * h * i + h * h,
                un: at + 3 * h * i + 2 * h * h,
                bz: at + 3 * h * i + 3 * h * h,
                br: at + 3 * h * i + 3 * h * h + h,
                bn: at + 3 * h * i + 3 * h * h + 2 * h,
            };
            at += shape.layer_size(l);
            layers.push(o);
        }
        let wo = at;
        let bo = wo + v * h;
        debug_assert_eq!(bo + v, shape.param_count());
        Self { shape, layers, wo, bo }
    }

    /// Index of the output bias for `token`.
    pub fn output_bias(&self, token: TokenId) -> usize {
        self.bo + token as usize
    }

    pub fn output_weight(&self, token: TokenId, unit: usize) -> usize {
        self.wo + token as usize * self.shape.hidden_dim + unit
    }

    pub fn embedding(&self, token: TokenId, dim: usize) -> usize {
        token as usize * self.shape.embed_dim + dim
    }

    pub fn update_gate_bias(&self, layer: usize, unit: usize) -> usize {
        self.layers[layer].bz + unit
    }

    pub fn candidate_input_weight(&self, layer: usize, unit: usize, input: usize) -> usize {
        let o = &self.layers[layer];
        o.wn + unit * o.input + input
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += W x` where `W` is row-major `out.len() x x.len()`.
#[inline]
fn matvec_add(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ y` where `W` is row-major `y.len() x out.len()`.
#[inline]
fn matvec_t_add(out: &mut [f64], w: &[f64], y: &[f64]) {
    let cols = out.len();
    for (&yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if yi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

/// `dw += y xᵀ`.
#[inline]
fn outer_add(dw: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(dw.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            for (d, b) in row.iter_mut().zip(x) {
                *d += yi * b;
            }
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Gate activations of one layer at one time step.
struct CellOut {
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

fn cell_forward(p: &[f64], o: &LayerOffsets, hdim: usize, x: &[f64], h_prev: &[f64]) -> CellOut {
    let i = o.input;
    let mut z = p[o.bz..o.bz + hdim].to_vec();
    matvec_add(&mut z, &p[o.wz..o.wz + hdim * i], x);
    matvec_add(&mut z, &p[o.uz..o.uz + hdim * hdim], h_prev);
    let mut r = p[o.br..o.br + hdim].to_vec();
    matvec_add(&mut r, &p[o.wr..o.wr + hdim * i], x);
    matvec_add(&mut r, &p[o.ur..o.ur + hdim * hdim], h_prev);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut n = p[o.bn..o.bn + hdim].to_vec();
    matvec_add(&mut n, &p[o.wn..o.wn + hdim * i], x);
    matvec_add(&mut n, &p[o.un..o.un + hdim * hdim], &rh);
    n.iter_mut().for_each(|v| *v = v.tanh());
    let h = (0..hdim).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();
    CellOut { z, r, n, h }
}

/// Recurrent state after consuming some prefix. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    layers: Vec<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(shape: &ShapeMeta) -> Self {
        Self { layers: vec![vec![0.0; shape.hidden_dim]; shape.layers] }
    }

    fn top(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

/// Borrowed view pairing a parameter vector with its layout.
pub(crate) struct Net<'a> {
    pub p: &'a [f64],
    pub layout: &'a Layout,
}

impl<'a> Net<'a> {
    fn embed(&self, token: TokenId) -> &'a [f64] {
        let e = self.layout.shape.embed_dim;
        let at = token as usize * e;
        &self.p[at..at + e]
    }

    pub fn step(&self, state: &HiddenState, token: TokenId) -> HiddenState {
        let hdim = self.layout.shape.hidden_dim;
        let mut layers = Vec::with_capacity(state.layers.len());
        let mut x: Vec<f64> = self.embed(token).to_vec();
        for (o, h_prev) in self.layout.layers.iter().zip(&state.layers) {
            let out = cell_forward(self.p, o, hdim, &x, h_prev);
            x = out.h.clone();
            layers.push(out.h);
        }
        HiddenState { layers }
    }

    pub fn logits(&self, state: &HiddenState) -> Vec<f64> {
        let (v, h) = (self.layout.shape.vocab_size, self.layout.shape.hidden_dim);
        let mut logits = self.p[self.layout.bo..self.layout.bo + v].to_vec();
        matvec_add(&mut logits, &self.p[self.layout.wo..self.layout.wo + v * h], state.top());
        logits
    }

    /// Runs the context, then returns `Σ log p(tokens[j] | context, tokens[..j])`.
    pub fn seq_logprob(&self, context: &[TokenId], tokens: &[TokenId]) -> f64 {
        let mut state = HiddenState::zeros(&self.layout.shape);
        for &t in context {
            state = self.step(&state, t);
        }
        let mut total = 0.0;
        for (j, &t) in tokens.iter().enumerate() {
            if j > 0 {
                state = self.step(&state, tokens[j - 1]);
            }
            total += log_softmax(&self.logits(&state))[t as usize];
        }
        total
    }

    /// Log-probability and its gradient, accumulated as `grad += scale · ∇`.
    pub fn seq_logprob_grad(
        &self,
        context: &[TokenId],
        tokens: &[TokenId],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let shape = self.layout.shape;
        let (hd, v, n_layers) = (shape.hidden_dim, shape.vocab_size, shape.layers);
        let inputs: Vec<TokenId> =
            context.iter().chain(&tokens[..tokens.len().saturating_sub(1)]).copied().collect();
        let steps = inputs.len();

        // forward, caching gate activations per layer per step
        let mut caches: Vec<Vec<CellOut>> = (0..n_layers).map(|_| Vec::with_capacity(steps)).collect();
        let zero = vec![0.0; hd];
        for (t, &tok) in inputs.iter().enumerate() {
            let mut x: Vec<f64> = self.embed(tok).to_vec();
            for l in 0..n_layers {
                let h_prev = if t == 0 { &zero } else { &caches[l][t - 1].h };
                let out = cell_forward(self.p, &self.layout.layers[l], hd, &x, h_prev);
                x = out.h.clone();
                caches[l].push(out);
            }
        }

        // output layer; prediction j reads the state after `context.len() + j` inputs
        let top = n_layers - 1;
        let mut d_top = vec![0.0; steps * hd];
        let mut total = 0.0;
        let (wo, bo) = (self.layout.wo, self.layout.bo);
        for (j, &tok) in tokens.iter().enumerate() {
            let s = context.len() + j;
            let h: &[f64] = if s == 0 { &zero } else { &caches[top][s - 1].h };
            let mut logits = self.p[bo..bo + v].to_vec();
            matvec_add(&mut logits, &self.p[wo..wo + v * hd], h);
            let lp = log_softmax(&logits);
            total += lp[tok as usize];
            // d log p / d logits = onehot - softmax
            let dl: Vec<f64> = lp
                .iter()
                .enumerate()
                .map(|(k, l)| scale * (f64::from(k == tok as usize) - l.exp()))
                .collect();
            for (g, d) in grad[bo..bo + v].iter_mut().zip(&dl) {
                *g += d;
            }
            outer_add(&mut grad[wo..wo + v * hd], &dl, h);
            if s > 0 {
                matvec_t_add(&mut d_top[(s - 1) * hd..s * hd], &self.p[wo..wo + v * hd], &dl);
            }
        }

        // backprop through time
        let mut carry = vec![vec![0.0; hd]; n_layers];
        let mut dx_above: Vec<f64> = Vec::new();
        for t in (0..steps).rev() {
            for l in (0..n_layers).rev() {
                let o = &self.layout.layers[l];
                let i = o.input;
                let c = &caches[l][t];
                let h_prev: &[f64] = if t == 0 { &zero } else { &caches[l][t - 1].h };
                let x: &[f64] = if l == 0 { self.embed(inputs[t]) } else { &caches[l - 1][t].h };

                let mut dh = std::mem::take(&mut carry[l]);
                if l == top {
                    for (a, b) in dh.iter_mut().zip(&d_top[t * hd..(t + 1) * hd]) {
                        *a += b;
                    }
                } else {
                    for (a, b) in dh.iter_mut().zip(&dx_above) {
                        *a += b;
                    }
                }

                let mut dh_prev: Vec<f64> = (0..hd).map(|k| dh[k] * c.z[k]).collect();
                let dn_pre: Vec<f64> = (0..hd).map(|k| dh[k] * (1.0 - c.z[k]) * (1.0 - c.n[k] * c.n[k])).collect();
                let dz_pre: Vec<f64> =
                    (0..hd).map(|k| dh[k] * (h_prev[k] - c.n[k]) * c.z[k] * (1.0 - c.z[k])).collect();
                let rh: Vec<f64> = (0..hd).map(|k| c.r[k] * h_prev[k]).collect();
                let mut d_rh = vec![0.0; hd];
                matvec_t_add(&mut d_rh, &self.p[o.un..o.un + hd * hd], &dn_pre);
                let dr_pre: Vec<f64> = (0..hd).map(|k| d_rh[k] * h_prev[k] * c.r[k] * (1.0 - c.r[k])).collect();
                for k in 0..hd {
                    dh_prev[k] += d_rh[k] * c.r[k];
                }

                outer_add(&mut grad[o.wz..o.wz + hd * i], &dz_pre, x);
                outer_add(&mut grad[o.wr..o.wr + hd * i], &dr_pre, x);
                outer_add(&mut grad[o.wn..o.wn + hd * i], &dn_pre, x);
                if t > 0 {
                    outer_add(&mut grad[o.uz..o.uz + hd * hd], &dz_pre, h_prev);
                    outer_add(&mut grad[o.ur..o.ur + hd * hd], &dr_pre, h_prev);
                    outer_add(&mut grad[o.un..o.un + hd * hd], &dn_pre, &rh);
                }
                for (g, d) in grad[o.bz..o.bz + hd].iter_mut().zip(&dz_pre) {
                    *g += d;
                }
                for (g, d) in grad[o.br..o.br + hd].iter_mut().zip(&dr_pre) {
                    *g += d;
                }
                for (g, d) in grad[o.bn..o.bn + hd].iter_mut().zip(&dn_pre) {
                    *g += d;
                }
                matvec_t_add(&mut dh_prev, &self.p[o.uz..o.uz + hd * hd], &dz_pre);
                matvec_t_add(&mut dh_prev, &self.p[o.ur..o.ur + hd * hd], &dr_pre);

                let mut dx = vec![0.0; i];
                matvec_t_add(&mut dx, &self.p[o.wz..o.wz + hd * i], &dz_pre);
                matvec_t_add(&mut dx, &self.p[o.wr..o.wr + hd * i], &dr_pre);
                matvec_t_add(&mut dx, &self.p[o.wn..o.wn + hd * i], &dn_pre);

                carry[l] = dh_prev;
                if l == 0 {
                    let e = shape.embed_dim;
                    let at = inputs[t] as usize * e;
                    for (g, d) in grad[at..at + e].iter_mut().zip(&dx) {
                        *g += d;
                    }
                } else {
                    dx_above = dx;
                }
            }
        }
        total
    }
}
