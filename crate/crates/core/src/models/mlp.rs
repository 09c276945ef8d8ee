use crate::autodiff::{sigmoid, Bindings, NodeId, ParamStore, Tape, Tensor};
use crate::distributions::TapeDist;
use crate::rng::RngStream;

use super::traits::{AuxiliaryInference, TapeAuxiliary};
use super::ModelError;
use crate::distributions::sample_standard_gamma;

/// Lower bound added after softplus to every positive output.
pub const POSITIVE_FLOOR: f64 = 1e-6;
/// Initial bias of sigmoid gates; `sigmoid(-5) ≈ 0.0067`.
pub const GATE_INIT: f64 = -5.0;

fn softplus(x: f64) -> f64 {
    crate::autodiff::softplus(x)
}

/// Softplus MLP with an optional side input. The main input is projected
/// once and tiled when the side input carries several rows per main row
/// (row `r` of the side input pairs with main row `r mod rows(input)`), so
/// e.g. `K` draws of `ψ` per observation share a single pass over `x`.
///
/// Parameters live in a [`ParamStore`] as `{name}.w{l}`, `{name}.s{l}`
/// (side weights), `{name}.b{l}` and `{name}.g{l}` (side gate logits).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub name: String,
    pub input: usize,
    pub side: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    /// Concatenate the side input at every layer rather than only the first.
    pub side_every_layer: bool,
    /// Scale the side input by a learned sigmoid gate with this initial logit.
    pub side_gate: Option<f64>,
}

impl Mlp {
    pub fn new(name: impl Into<String>, input: usize, hidden: Vec<usize>, output: usize) -> Self {
        Self {
            name: name.into(),
            input,
            side: 0,
            hidden,
            output,
            side_every_layer: false,
            side_gate: None,
        }
    }

    pub fn with_side(mut self, side: usize, every_layer: bool, gate: Option<f64>) -> Self {
        self.side = side;
        self.side_every_layer = every_layer;
        self.side_gate = gate;
        self
    }

    fn layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn width(&self, l: usize) -> (usize, usize) {
        let fan_in = if l == 0 { self.input } else { self.hidden[l - 1] };
        let fan_out = if l == self.hidden.len() { self.output } else { self.hidden[l] };
        (fan_in, fan_out)
    }

    fn has_side(&self, l: usize) -> bool {
        self.side > 0 && (l == 0 || self.side_every_layer)
    }

    fn key(&self, kind: char, l: usize) -> String {
        format!("{}.{kind}{l}", self.name)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        for l in 0..self.layers() {
            let (fan_in, fan_out) = self.width(l);
            let side = if self.has_side(l) { self.side } else { 0 };
            let limit = (6.0 / (fan_in + side + fan_out) as f64).sqrt();
            let mut draw = |r, c| Tensor::from_fn(r, c, |_, _| limit * (2.0 * rng.uniform() - 1.0));
            store.insert(self.key('w', l), draw(fan_in, fan_out));
            if side > 0 {
                store.insert(self.key('s', l), draw(side, fan_out));
                if let Some(g) = self.side_gate {
                    store.insert(self.key('g', l), Tensor::scalar(g));
                }
            }
            store.insert(self.key('b', l), Tensor::zeros(1, fan_out));
        }
    }

    /// Output pre-activations (rows = rows of `side` if given, else of `input`).
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        input: NodeId,
        side: Option<NodeId>,
    ) -> Result<NodeId, ModelError> {
        let rows_in = tape.value(input).rows();
        let reps = match side {
            Some(s) => {
                let rs = tape.value(s).rows();
                if rs % rows_in != 0 {
                    return Err(ModelError::Shape {
                        what: "side rows (multiple of input rows)",
                        expected: rows_in,
                        got: rs,
                    });
                }
                rs / rows_in
            }
            None => 1,
        };
        let mut h = input;
        for l in 0..self.layers() {
            let mut a = tape.matmul(h, p.get(&self.key('w', l)))?;
            a = tape.add(a, p.get(&self.key('b', l)))?;
            if l == 0 && reps > 1 {
                a = tape.repeat_rows(a, reps)?;
            }
            if let (true, Some(s)) = (self.has_side(l), side) {
                let mut s = s;
                if self.side_gate.is_some() {
                    let g = tape.sigmoid(p.get(&self.key('g', l)))?;
                    s = tape.mul(s, g)?;
                }
                let sa = tape.matmul(s, p.get(&self.key('s', l)))?;
                a = tape.add(a, sa)?;
            }
            h = if l + 1 < self.layers() { tape.softplus(a)? } else { a };
        }
        Ok(h)
    }

    /// First-layer projection of the main input (weights and bias), reusable
    /// across many side inputs.
    pub fn project_input(&self, store: &ParamStore, input: &[f64]) -> Vec<f64> {
        let w = store.value(&self.key('w', 0));
        let mut out = store.value(&self.key('b', 0)).data().to_vec();
        affine_acc(&mut out, w, input);
        out
    }

    /// Plain forward pass from a [`project_input`](Self::project_input) result.
    pub fn forward_projected(&self, store: &ParamStore, projection: &[f64], side: &[f64]) -> Vec<f64> {
        let mut a = projection.to_vec();
        for l in 0..self.layers() {
            if l > 0 {
                let w = store.value(&self.key('w', l));
                let mut next = store.value(&self.key('b', l)).data().to_vec();
                affine_acc(&mut next, w, &a);
                a = next;
            }
            if self.has_side(l) {
                let gate = match self.side_gate {
                    Some(_) => sigmoid(store.value(&self.key('g', l)).item()),
                    None => 1.0,
                };
                let scaled: Vec<f64> = side.iter().map(|v| v * gate).collect();
                affine_acc(&mut a, store.value(&self.key('s', l)), &scaled);
            }
            if l + 1 < self.layers() {
                a.iter_mut().for_each(|v| *v = softplus(*v));
            }
        }
        a
    }

    pub fn forward(&self, store: &ParamStore, input: &[f64], side: &[f64]) -> Vec<f64> {
        self.forward_projected(store, &self.project_input(store, input), side)
    }
}

/// `out += xᵀ W` for a row vector `x` and `W` of shape (len x, len out).
fn affine_acc(out: &mut [f64], w: &Tensor, x: &[f64]) {
    let cols = w.cols();
    let data = w.data();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &data[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// Which factorized family an [`MlpCond`] outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Head {
    /// Mean by identity, standard deviation by softplus.
    Normal,
    /// Concentration and rate, both by softplus.
    Gamma,
}

/// A conditional distribution whose parameters come from an [`Mlp`]. With
/// `fallback = Some((a, b))` the network also emits a per-dimension sigmoid
/// gate `g` and the parameters become `(1 - g)·fallback + g·network`. The
/// output layer starts at the fallback's parameters and the gate logit at
/// `gate_init` (default [`GATE_INIT`]), so at initialisation the conditional
/// is the fallback distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCond {
    pub mlp: Mlp,
    pub head: Head,
    pub dim: usize,
    pub fallback: Option<(f64, f64)>,
    pub gate_init: f64,
}

impl MlpCond {
    pub fn new(name: &str, input: usize, hidden: Vec<usize>, head: Head, dim: usize, fallback: Option<(f64, f64)>) -> Self {
        let heads = if fallback.is_some() { 3 } else { 2 };
        Self {
            mlp: Mlp::new(name, input, hidden, heads * dim),
            head,
            dim,
            fallback,
            gate_init: GATE_INIT,
        }
    }

    /// Sets the initial gate logit (only meaningful with a fallback).
    pub fn with_gate_init(mut self, logit: f64) -> Self {
        self.gate_init = logit;
        self
    }

    pub fn with_side(mut self, side: usize, every_layer: bool, gate: Option<f64>) -> Self {
        self.mlp = self.mlp.with_side(side, every_layer, gate);
        self
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        self.mlp.init(store, rng);
        let Some((f0, f1)) = self.fallback else { return };
        // Output layer: zero weights, biases at the fallback's parameters and
        // the gate logit, so the conditional starts exactly at the fallback
        // whatever the gate.
        let last = self.mlp.hidden.len();
        for kind in ['w', 's'] {
            let key = format!("{}.{kind}{last}", self.mlp.name);
            if store.contains(&key) {
                let w = store.value(&key);
                store.set_value(&key, Tensor::zeros(w.rows(), w.cols()));
            }
        }
        let key = format!("{}.b{last}", self.mlp.name);
        let mut b = store.value(&key).clone();
        for j in 0..self.dim {
            b.set(0, j, self.inverse_transform(0, f0));
            b.set(0, self.dim + j, self.inverse_transform(1, f1));
            b.set(0, 2 * self.dim + j, self.gate_init);
        }
        store.set_value(&key, b);
    }

    fn inverse_transform(&self, which: usize, value: f64) -> f64 {
        match (self.head, which) {
            (Head::Normal, 0) => value,
            _ => {
                let y = value - POSITIVE_FLOOR;
                y + (-(-y).exp_m1()).ln()
            }
        }
    }

    fn transform(&self, which: usize, raw: f64) -> f64 {
        match (self.head, which) {
            (Head::Normal, 0) => raw,
            _ => softplus(raw) + POSITIVE_FLOOR,
        }
    }

    pub fn dist_tape(&self, tape: &mut Tape, p: &Bindings, input: NodeId, side: Option<NodeId>) -> Result<TapeDist, ModelError> {
        let out = self.mlp.forward_tape(tape, p, input, side)?;
        let mut params = [out; 2];
        for (which, slot) in params.iter_mut().enumerate() {
            let raw = tape.slice_cols(out, which * self.dim, self.dim)?;
            *slot = match (self.head, which) {
                (Head::Normal, 0) => raw,
                _ => {
                    let s = tape.softplus(raw)?;
                    tape.add_scalar(s, POSITIVE_FLOOR)?
                }
            };
        }
        if let Some(fb) = self.fallback {
            let logits = tape.slice_cols(out, 2 * self.dim, self.dim)?;
            let g = tape.sigmoid(logits)?;
            for (which, slot) in params.iter_mut().enumerate() {
                let f = if which == 0 { fb.0 } else { fb.1 };
                // (1 - g) f + g v = f + g (v - f)
                let d = tape.add_scalar(*slot, -f)?;
                let gd = tape.mul(g, d)?;
                *slot = tape.add_scalar(gd, f)?;
            }
        }
        Ok(match self.head {
            Head::Normal => TapeDist::Normal {
                mean: params[0],
                stddev: params[1],
            },
            Head::Gamma => TapeDist::Gamma {
                concentration: params[0],
                rate: params[1],
            },
        })
    }

    /// Distribution parameters `(first, second)` per dimension from raw
    /// network outputs.
    pub fn params_from_raw(&self, raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut first: Vec<f64> = (0..d).map(|j| self.transform(0, raw[j])).collect();
        let mut second: Vec<f64> = (0..d).map(|j| self.transform(1, raw[d + j])).collect();
        if let Some((f0, f1)) = self.fallback {
            for j in 0..d {
                let g = sigmoid(raw[2 * d + j]);
                first[j] = f0 + g * (first[j] - f0);
                second[j] = f1 + g * (second[j] - f1);
            }
        }
        (first, second)
    }

    pub fn params(&self, store: &ParamStore, input: &[f64], side: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.params_from_raw(&self.mlp.forward(store, input, side))
    }

    /// Gate values for one input (empty without a fallback).
    pub fn gates(&self, store: &ParamStore, input: &[f64], side: &[f64]) -> Vec<f64> {
        if self.fallback.is_none() {
            return Vec::new();
        }
        let raw = self.mlp.forward(store, input, side);
        raw[2 * self.dim..].iter().map(|&v| sigmoid(v)).collect()
    }
}

impl TapeAuxiliary for MlpCond {
    fn dist_tape(&self, tape: &mut Tape, params: &Bindings, z: NodeId) -> Result<TapeDist, ModelError> {
        MlpCond::dist_tape(self, tape, params, z, None)
    }
}

/// Plain-float view of an unconditioned-side [`MlpCond`] `τ(ψ | z)` at fixed
/// parameters.
pub struct CondAt<'a> {
    pub cond: &'a MlpCond,
    pub store: &'a ParamStore,
}

impl AuxiliaryInference for CondAt<'_> {
    fn log_prob(&self, psi: &[f64], z: &[f64]) -> f64 {
        let (a, b) = self.cond.params(self.store, z, &[]);
        let mut total = 0.0;
        for ((&x, a), b) in psi.iter().zip(a).zip(b) {
            total += match self.cond.head {
                Head::Normal => -0.5 * ((x - a) / b).powi(2) - b.ln() - 0.918_938_533_204_672_7,
                Head::Gamma if x > 0.0 => a * b.ln() - crate::special::ln_gamma(a) + (a - 1.0) * x.ln() - b * x,
                Head::Gamma => f64::NEG_INFINITY,
            };
        }
        total
    }

    fn sample(&self, z: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let (a, b) = self.cond.params(self.store, z, &[]);
        a.into_iter()
            .zip(b)
            .map(|(a, b)| match self.cond.head {
                Head::Normal => a + b * rng.normal(),
                Head::Gamma => (sample_standard_gamma(a, rng) / b).max(f64::MIN_POSITIVE),
            })
            .collect()
    }
}
