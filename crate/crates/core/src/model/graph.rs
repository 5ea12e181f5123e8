//! The model expressed as a recorded graph on a [`Tape`].
//!
//! This is the reference implementation of the training objective: every
//! operation goes through the generic reverse-mode machinery, so its
//! gradient can be checked against finite differences and used to verify
//! the hand-derived pass in [`super::backprop`].

use super::params::{GruOffsets, ModelParams};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::numerics::{Activation, ParamSlot, Tape, Tensor, Var};

struct GruVars {
    w_z: Var,
    u_z: Var,
    b_z: Var,
    w_r: Var,
    u_r: Var,
    b_r: Var,
    w_c: Var,
    u_c: Var,
    b_c: Var,
}

fn param(tape: &mut Tape, params: &ModelParams, offset: usize, shape: &[usize]) -> Result<Var> {
    let len: usize = shape.iter().product();
    let value = Tensor::new(shape.to_vec(), params.values()[offset..offset + len].to_vec())?;
    tape.param(value, ParamSlot { offset, len })
}

fn gru_vars(tape: &mut Tape, params: &ModelParams, o: &GruOffsets) -> Result<GruVars> {
    let h = params.config().hidden;
    Ok(GruVars {
        w_z: param(tape, params, o.w_z, &[h, 1])?,
        u_z: param(tape, params, o.u_z, &[h, h])?,
        b_z: param(tape, params, o.b_z, &[h])?,
        w_r: param(tape, params, o.w_r, &[h, 1])?,
        u_r: param(tape, params, o.u_r, &[h, h])?,
        b_r: param(tape, params, o.b_r, &[h])?,
        w_c: param(tape, params, o.w_c, &[h, 1])?,
        u_c: param(tape, params, o.u_c, &[h, h])?,
        b_c: param(tape, params, o.b_c, &[h])?,
    })
}

fn gru_step(tape: &mut Tape, g: &GruVars, x: Var, h: Var) -> Result<Var> {
    let xz = tape.affine(g.w_z, g.b_z, x)?;
    let hz = tape.matvec(g.u_z, h)?;
    let az = tape.add(xz, hz)?;
    let z = tape.sigmoid(az)?;
    let xr = tape.affine(g.w_r, g.b_r, x)?;
    let hr = tape.matvec(g.u_r, h)?;
    let ar = tape.add(xr, hr)?;
    let r = tape.sigmoid(ar)?;
    let rh = tape.mul(r, h)?;
    let xc = tape.affine(g.w_c, g.b_c, x)?;
    let hc = tape.matvec(g.u_c, rh)?;
    let ac = tape.add(xc, hc)?;
    let c = tape.tanh(ac)?;
    let keep = tape.one_minus(z)?;
    let old = tape.mul(keep, h)?;
    let new = tape.mul(z, c)?;
    tape.add(old, new)
}

/// Records the summed masked BCE of one patient on `tape`. Returns the loss
/// node and the number of labeled visits, or `None` when every visit is
/// uncertain.
pub fn record_patient_loss(
    tape: &mut Tape,
    params: &ModelParams,
    sample: &Sample,
    activation: Activation,
) -> Result<Option<(Var, usize)>> {
    super::forward::check_input(params, &sample.input)?;
    let Some(last) = sample.labels.iter().rposition(|l| l.is_labeled()) else {
        return Ok(None);
    };
    let cfg = params.config();
    let h = cfg.hidden;
    let o = params.offsets();
    let steps = last + 1;

    let mut channels = Vec::with_capacity(cfg.num_features);
    for c in &o.channels {
        channels.push((
            gru_vars(tape, params, &c.forward)?,
            gru_vars(tape, params, &c.backward)?,
            param(tape, params, c.key_w, &[h, h])?,
            param(tape, params, c.key_b, &[h])?,
        ));
    }
    let embed_w = param(tape, params, o.embed_w, &[h, cfg.baseline_dim])?;
    let embed_b = param(tape, params, o.embed_b, &[h])?;
    let query_w = param(tape, params, o.query_w, &[h, h])?;
    let query_b = param(tape, params, o.query_b, &[h])?;
    let head_w = param(tape, params, o.head_w, &[1, 2 * h])?;
    let head_b = param(tape, params, o.head_b, &[1])?;

    let r0 = tape.constant(Tensor::vector(sample.input.baseline.to_vec()));
    let f0 = tape.affine(embed_w, embed_b, r0)?;
    let xs: Vec<Vec<Var>> = sample
        .input
        .series
        .iter()
        .map(|s| s[..steps].iter().map(|v| tape.constant(Tensor::scalar(*v))).collect())
        .collect();
    let zero = tape.constant(Tensor::zeros(&[h]));

    // forward states, shared across prefixes
    let mut fwd_states = Vec::with_capacity(cfg.num_features);
    for (n, (fwd, ..)) in channels.iter().enumerate() {
        let mut states = Vec::with_capacity(steps);
        let mut state = zero;
        for &x in &xs[n] {
            state = gru_step(tape, fwd, x, state)?;
            states.push(state);
        }
        fwd_states.push(states);
    }

    let mut losses = Vec::new();
    for (t, label) in sample.labels[..steps].iter().enumerate() {
        let Some(y) = label.target() else { continue };
        let mut feats = Vec::with_capacity(cfg.num_features);
        for (n, (_, bwd, ..)) in channels.iter().enumerate() {
            let mut state = zero;
            for &x in xs[n][..=t].iter().rev() {
                state = gru_step(tape, bwd, x, state)?;
            }
            feats.push(tape.add(fwd_states[n][t], state)?);
        }
        let mut pooled = vec![f0];
        pooled.extend_from_slice(&feats);
        let f_sqz = tape.mean(&pooled)?;
        let q = tape.affine(query_w, query_b, f_sqz)?;
        let mut scores = Vec::with_capacity(feats.len());
        for (f, (.., kw, kb)) in feats.iter().zip(&channels) {
            let k = tape.affine(*kw, *kb, *f)?;
            scores.push(tape.dot(q, k)?);
        }
        let zeta = tape.stack(&scores)?;
        let alpha = tape.activate(zeta, activation)?;
        let context = tape.weighted_sum(alpha, &feats)?;
        let s = tape.concat(&[context, f0])?;
        let logit = tape.affine(head_w, head_b, s)?;
        let p = tape.sigmoid(logit)?;
        losses.push(tape.bce(p, y)?);
    }
    let count = losses.len();
    Ok(Some((tape.sum(&losses)?, count)))
}

/// Loss sum, labeled count and flat gradient of one patient via the tape.
pub fn patient_loss_grad_tape(
    params: &ModelParams,
    sample: &Sample,
    activation: Activation,
) -> Result<(f64, usize, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let mut tape = Tape::new();
    let Some((loss, count)) = record_patient_loss(&mut tape, params, sample, activation)? else {
        return Ok((0.0, 0, grad));
    };
    let value = tape.value(loss)?.item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss for patient {}", sample.patient_id)));
    }
    tape.backward(loss)?.scatter_params(&tape, &mut grad)?;
    Ok((value, count, grad))
}
