//! Forward pass: GRU channels, baseline embedding, squeeze, attention and
//! the risk head.
//!
//! GRU convention, with `σ` the logistic function:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! c  = tanh(W_c x + U_c (r ∘ h) + b_c)
//! h' = (1 − z) ∘ h + z ∘ c
//! ```

use serde::{Deserialize, Serialize};

use super::params::{ChannelParams, GruParams, ModelParams};
use crate::data::ModelInput;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Activation};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `b + W x` for row-major `W [b.len() × x.len()]`.
pub(crate) fn affine_into(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for ((o, bi), row) in out.iter_mut().zip(b).zip(w.chunks_exact(n)) {
        *o = bi + dot(row, x);
    }
}

/// Activations of a GRU run from a zero state, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct GruTrace {
    pub hidden: usize,
    pub input: usize,
    pub steps: usize,
    /// `(steps + 1) × h`; row 0 is the zero initial state.
    pub states: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    /// Reset-gated previous state `r ∘ h`.
    pub rh: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl GruTrace {
    pub fn reset(&mut self, hidden: usize, input: usize) {
        self.hidden = hidden;
        self.input = input;
        self.steps = 0;
        self.states.clear();
        self.states.resize(hidden, 0.0);
        self.z.clear();
        self.r.clear();
        self.c.clear();
        self.rh.clear();
        self.inputs.clear();
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s * self.hidden..(s + 1) * self.hidden]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.steps)
    }

    /// Appends one GRU step on input `x`.
    pub fn step(&mut self, p: &GruParams, x: &[f64]) {
        let h = self.hidden;
        let base = self.steps * h;
        self.inputs.extend_from_slice(x);
        self.z.resize(base + h, 0.0);
        self.r.resize(base + h, 0.0);
        self.c.resize(base + h, 0.0);
        self.rh.resize(base + h, 0.0);
        self.states.resize(base + 2 * h, 0.0);
        let (prev_states, next) = self.states.split_at_mut(base + h);
        let prev = &prev_states[base..];
        let d = x.len();
        for i in 0..h {
            let az = p.b_z[i] + dot(&p.w_z[i * d..(i + 1) * d], x) + dot(&p.u_z[i * h..(i + 1) * h], prev);
            let ar = p.b_r[i] + dot(&p.w_r[i * d..(i + 1) * d], x) + dot(&p.u_r[i * h..(i + 1) * h], prev);
            self.z[base + i] = sigmoid(az);
            self.r[base + i] = sigmoid(ar);
        }
        for ((rh, r), v) in self.rh[base..base + h].iter_mut().zip(&self.r[base..base + h]).zip(prev) {
            *rh = r * v;
        }
        let rh = &self.rh[base..base + h];
        for i in 0..h {
            let ac = p.b_c[i] + dot(&p.w_c[i * d..(i + 1) * d], x) + dot(&p.u_c[i * h..(i + 1) * h], rh);
            let c = ac.tanh();
            self.c[base + i] = c;
            let z = self.z[base + i];
            next[i] = (1.0 - z) * prev[i] + z * c;
        }
        self.steps += 1;
    }
}

/// One GRU step `h' = GRU(x, h_prev)`.
pub fn gru_cell(x: &[f64], h_prev: &[f64], params: &GruParams) -> Result<Vec<f64>> {
    params.validate()?;
    if x.len() != params.input {
        return Err(Error::dim("gru_cell input", &[params.input], &[x.len()]));
    }
    if h_prev.len() != params.hidden {
        return Err(Error::dim("gru_cell state", &[params.hidden], &[h_prev.len()]));
    }
    let mut trace = GruTrace::default();
    trace.reset(params.hidden, params.input);
    trace.states.copy_from_slice(h_prev);
    trace.step(params, x);
    Ok(trace.last().to_vec())
}

/// Forward GRU over `series` and backward GRU over its reverse, both from
/// zero states; returns `h→_T + h←_1`.
pub fn encode_channel(series: &[f64], params: &ChannelParams) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Domain("encode_channel of an empty series".into()));
    }
    params.forward.validate()?;
    params.backward.validate()?;
    let h = params.forward.hidden;
    let mut fwd = GruTrace::default();
    fwd.reset(h, 1);
    for x in series {
        fwd.step(&params.forward, std::slice::from_ref(x));
    }
    let mut bwd = GruTrace::default();
    bwd.reset(h, 1);
    for x in series.iter().rev() {
        bwd.step(&params.backward, std::slice::from_ref(x));
    }
    Ok(fwd.last().iter().zip(bwd.last()).map(|(a, b)| a + b).collect())
}

/// `f₀ = W r₀ + b`.
pub fn embed_baseline(r0: &[f64], weight: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if weight.len() != bias.len() * r0.len() {
        return Err(Error::dim("embed_baseline", &[bias.len(), r0.len()], &[weight.len()]));
    }
    let mut out = vec![0.0; bias.len()];
    affine_into(weight, bias, r0, &mut out);
    Ok(out)
}

/// Elementwise mean of the baseline and feature embeddings.
pub fn squeeze(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Domain("squeeze of zero vectors".into()))?;
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != acc.len() {
            return Err(Error::dim("squeeze", &[acc.len()], &[v.len()]));
        }
        acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += x);
    }
    let k = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// Intermediate values of the attention block and head for one prefix.
#[derive(Debug, Clone, Default)]
pub(crate) struct HeadTrace {
    pub f_sqz: Vec<f64>,
    pub query: Vec<f64>,
    /// `N × h` keys.
    pub keys: Vec<f64>,
    pub zeta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub risk: f64,
}

/// Runs squeeze → attention → head. `features` is `N × h` row-major.
pub(crate) fn head_forward(
    params: &ModelParams,
    f0: &[f64],
    features: &[f64],
    activation: Activation,
    out: &mut HeadTrace,
) -> Result<()> {
    let h = params.config().hidden;
    let n_feat = params.config().num_features;
    let o = params.offsets();
    out.f_sqz.clear();
    out.f_sqz.extend_from_slice(f0);
    for f in features.chunks_exact(h) {
        out.f_sqz.iter_mut().zip(f).for_each(|(a, x)| *a += x);
    }
    let k = (n_feat + 1) as f64;
    out.f_sqz.iter_mut().for_each(|a| *a /= k);

    out.query.resize(h, 0.0);
    affine_into(params.slice(o.query_w, h * h), params.slice(o.query_b, h), &out.f_sqz, &mut out.query);
    out.keys.resize(n_feat * h, 0.0);
    out.zeta.resize(n_feat, 0.0);
    for (n, (f, key)) in features.chunks_exact(h).zip(out.keys.chunks_exact_mut(h)).enumerate() {
        let c = &o.channels[n];
        affine_into(params.slice(c.key_w, h * h), params.slice(c.key_b, h), f, key);
        out.zeta[n] = dot(&out.query, key);
    }
    out.alpha = activation.apply(&out.zeta)?;
    out.context.clear();
    out.context.resize(h, 0.0);
    for (a, f) in out.alpha.iter().zip(features.chunks_exact(h)) {
        out.context.iter_mut().zip(f).for_each(|(s, x)| *s += a * x);
    }
    let w = params.slice(o.head_w, 2 * h);
    let logit = params.slice(o.head_b, 1)[0] + dot(&w[..h], &out.context) + dot(&w[h..], f0);
    out.risk = sigmoid(logit);
    Ok(())
}

fn stack_features(features: &[&[f64]], h: usize, n: usize) -> Result<Vec<f64>> {
    if features.len() != n {
        return Err(Error::dim("feature embeddings", &[n, h], &[features.len(), h]));
    }
    let mut flat = Vec::with_capacity(n * h);
    for f in features {
        if f.len() != h {
            return Err(Error::dim("feature embedding", &[h], &[f.len()]));
        }
        flat.extend_from_slice(f);
    }
    Ok(flat)
}

/// Query `q = W_sqz f_sqz + b`, keys `k_n = W_n f_n + b_n`, scores
/// `ζ_n = q · k_n` and weights `α = activation(ζ)`. Returns `(α, ζ)`.
pub fn attention_weights(
    params: &ModelParams,
    f_sqz: &[f64],
    features: &[&[f64]],
    activation: Activation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = params.config().hidden;
    let flat = stack_features(features, h, params.config().num_features)?;
    if f_sqz.len() != h {
        return Err(Error::dim("attention query", &[h], &[f_sqz.len()]));
    }
    let o = params.offsets();
    let mut q = vec![0.0; h];
    affine_into(params.slice(o.query_w, h * h), params.slice(o.query_b, h), f_sqz, &mut q);
    let mut key = vec![0.0; h];
    let zeta: Vec<f64> = flat
        .chunks_exact(h)
        .zip(&o.channels)
        .map(|(f, c)| {
            affine_into(params.slice(c.key_w, h * h), params.slice(c.key_b, h), f, &mut key);
            dot(&q, &key)
        })
        .collect();
    Ok((activation.apply(&zeta)?, zeta))
}

/// `ŷ = σ(W_final [Σ α_n f_n ; f₀] + b)`.
pub fn predict_head(params: &ModelParams, f0: &[f64], features: &[&[f64]], alpha: &[f64]) -> Result<f64> {
    let h = params.config().hidden;
    let n = params.config().num_features;
    let flat = stack_features(features, h, n)?;
    if alpha.len() != n || f0.len() != h {
        return Err(Error::dim("predict_head", &[n, h], &[alpha.len(), f0.len()]));
    }
    let mut context = vec![0.0; h];
    for (a, f) in alpha.iter().zip(flat.chunks_exact(h)) {
        context.iter_mut().zip(f).for_each(|(s, x)| *s += a * x);
    }
    let o = params.offsets();
    let w = params.slice(o.head_w, 2 * h);
    Ok(sigmoid(params.slice(o.head_b, 1)[0] + dot(&w[..h], &context) + dot(&w[h..], f0)))
}

/// Risk and attention at one visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitPrediction {
    pub risk: f64,
    pub attention: Vec<f64>,
    pub raw_scores: Vec<f64>,
}

pub(crate) fn check_input(params: &ModelParams, input: &ModelInput) -> Result<usize> {
    let cfg = params.config();
    if input.num_features() != cfg.num_features || input.baseline.len() != cfg.baseline_dim {
        return Err(Error::Config(format!(
            "input has {} features and {} baseline values, model expects {} and {}",
            input.num_features(),
            input.baseline.len(),
            cfg.num_features,
            cfg.baseline_dim
        )));
    }
    let t = input.num_visits();
    if t == 0 {
        return Err(Error::Domain("patient has no visits".into()));
    }
    if input.series.iter().any(|s| s.len() != t) {
        return Err(Error::Config("feature series have unequal lengths".into()));
    }
    Ok(t)
}

pub(crate) fn baseline_embedding(params: &ModelParams, input: &ModelInput) -> Vec<f64> {
    let h = params.config().hidden;
    let o = params.offsets();
    let mut f0 = vec![0.0; h];
    affine_into(
        params.slice(o.embed_w, h * params.config().baseline_dim),
        params.slice(o.embed_b, h),
        &input.baseline,
        &mut f0,
    );
    f0
}

/// Runs the backward GRU of channel `n` over visits `t-1, …, 0`.
pub(crate) fn backward_channel(params: &ModelParams, input: &ModelInput, n: usize, t: usize, trace: &mut GruTrace) {
    let ch = params.channel(n);
    trace.reset(params.config().hidden, 1);
    for x in input.series[n][..t].iter().rev() {
        trace.step(&ch.backward, std::slice::from_ref(x));
    }
}

pub(crate) fn forward_channels(params: &ModelParams, input: &ModelInput, steps: usize) -> Vec<GruTrace> {
    let h = params.config().hidden;
    (0..params.config().num_features)
        .map(|n| {
            let ch = params.channel(n);
            let mut tr = GruTrace::default();
            tr.reset(h, 1);
            for x in &input.series[n][..steps] {
                tr.step(&ch.forward, std::slice::from_ref(x));
            }
            tr
        })
        .collect()
}

/// Prediction at the visit closing prefix `t` (1-based), using only visits
/// `1..=t`.
pub fn forward_prefix(params: &ModelParams, input: &ModelInput, t: usize) -> Result<VisitPrediction> {
    forward_prefix_with(params, input, t, params.config().activation)
}

pub fn forward_prefix_with(
    params: &ModelParams,
    input: &ModelInput,
    t: usize,
    activation: Activation,
) -> Result<VisitPrediction> {
    let total = check_input(params, input)?;
    if t == 0 || t > total {
        return Err(Error::Usage(format!("prefix length {t} outside 1..={total}")));
    }
    let fwd = forward_channels(params, input, t);
    prefix_prediction(params, input, &fwd, t, activation)
}

fn prefix_prediction(
    params: &ModelParams,
    input: &ModelInput,
    fwd: &[GruTrace],
    t: usize,
    activation: Activation,
) -> Result<VisitPrediction> {
    let h = params.config().hidden;
    let f0 = baseline_embedding(params, input);
    let mut features = vec![0.0; params.config().num_features * h];
    let mut bwd = GruTrace::default();
    for (n, f) in features.chunks_exact_mut(h).enumerate() {
        backward_channel(params, input, n, t, &mut bwd);
        for ((o, a), b) in f.iter_mut().zip(fwd[n].state(t)).zip(bwd.last()) {
            *o = a + b;
        }
    }
    let mut head = HeadTrace::default();
    head_forward(params, &f0, &features, activation, &mut head)?;
    Ok(VisitPrediction {
        risk: head.risk,
        attention: head.alpha,
        raw_scores: head.zeta,
    })
}

/// Predictions at every visit. Equal to calling [`forward_prefix`] for
/// each `t`, with the forward recurrences shared.
pub fn predict_visits(params: &ModelParams, input: &ModelInput, activation: Activation) -> Result<Vec<VisitPrediction>> {
    let total = check_input(params, input)?;
    let fwd = forward_channels(params, input, total);
    (1..=total)
        .map(|t| prefix_prediction(params, input, &fwd, t, activation))
        .collect()
}
