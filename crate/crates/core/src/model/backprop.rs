//! Hand-derived reverse pass for one patient.
//!
//! Computes the same gradient as the tape-built graph in
//! [`super::graph`] without per-operation allocation. Forward recurrences
//! are shared across prefixes; each labeled prefix reruns its backward
//! channels, backpropagates through them immediately, and deposits its
//! gradient on the forward states, which are unrolled once at the end.

use super::forward::{backward_channel, baseline_embedding, check_input, forward_channels, head_forward, GruTrace, HeadTrace};
use super::params::{GruOffsets, GruParams, ModelParams};
use crate::data::Sample;
use crate::error::Result;
use crate::numerics::{Activation, BCE_EPS};

/// BCE value and `∂loss/∂p`, clamped like the tape's cross-entropy node.
pub(crate) fn bce_and_grad(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let g = if p > BCE_EPS && p < 1.0 - BCE_EPS { (p - y) / (p * (1.0 - p)) } else { 0.0 };
    (loss, g)
}

/// `grad[o..] += a ⊗ x` for a row-major `[a.len() × x.len()]` block.
fn outer_acc(grad: &mut [f64], offset: usize, a: &[f64], x: &[f64]) {
    let n = x.len();
    for (i, ai) in a.iter().enumerate() {
        if *ai == 0.0 {
            continue;
        }
        let row = &mut grad[offset + i * n..offset + (i + 1) * n];
        row.iter_mut().zip(x).for_each(|(g, xv)| *g += ai * xv);
    }
}

fn vec_acc(grad: &mut [f64], offset: usize, a: &[f64]) {
    grad[offset..offset + a.len()].iter_mut().zip(a).for_each(|(g, v)| *g += v);
}

/// `out += Wᵀ a` for row-major `W [a.len() × out.len()]`.
fn transpose_matvec_acc(w: &[f64], a: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (row, ai) in w.chunks_exact(n).zip(a) {
        out.iter_mut().zip(row).for_each(|(o, wv)| *o += ai * wv);
    }
}

#[derive(Default)]
struct GruScratch {
    gh: Vec<f64>,
    gz: Vec<f64>,
    gr: Vec<f64>,
    ac: Vec<f64>,
    grh: Vec<f64>,
    next: Vec<f64>,
}

/// Backpropagates through a GRU trace. `external` holds gradients arriving
/// at each state (`(steps + 1) × h`, row 0 unused) or only at the final
/// state when `final_only` is set.
fn gru_backprop(
    p: &GruParams,
    o: &GruOffsets,
    trace: &GruTrace,
    external: &[f64],
    final_only: bool,
    grad: &mut [f64],
    s: &mut GruScratch,
) {
    let h = trace.hidden;
    let d = trace.input;
    s.gh.clear();
    s.gh.resize(h, 0.0);
    for step in (0..trace.steps).rev() {
        let base = step * h;
        if final_only {
            if step + 1 == trace.steps {
                s.gh.copy_from_slice(external);
            }
        } else {
            let ext = &external[(step + 1) * h..(step + 2) * h];
            s.gh.iter_mut().zip(ext).for_each(|(g, e)| *g += e);
        }
        let hp = trace.state(step);
        let z = &trace.z[base..base + h];
        let r = &trace.r[base..base + h];
        let c = &trace.c[base..base + h];
        let rh = &trace.rh[base..base + h];
        let x = &trace.inputs[step * d..(step + 1) * d];

        s.gz.clear();
        s.ac.clear();
        s.next.clear();
        for i in 0..h {
            let g = s.gh[i];
            s.gz.push(g * (c[i] - hp[i]) * z[i] * (1.0 - z[i]));
            s.ac.push(g * z[i] * (1.0 - c[i] * c[i]));
            s.next.push(g * (1.0 - z[i]));
        }
        // candidate
        outer_acc(grad, o.w_c, &s.ac, x);
        vec_acc(grad, o.b_c, &s.ac);
        outer_acc(grad, o.u_c, &s.ac, rh);
        s.grh.clear();
        s.grh.resize(h, 0.0);
        transpose_matvec_acc(p.u_c, &s.ac, &mut s.grh);
        s.gr.clear();
        for j in 0..h {
            s.next[j] += s.grh[j] * r[j];
            s.gr.push(s.grh[j] * hp[j] * r[j] * (1.0 - r[j]));
        }
        // update gate
        outer_acc(grad, o.w_z, &s.gz, x);
        vec_acc(grad, o.b_z, &s.gz);
        outer_acc(grad, o.u_z, &s.gz, hp);
        transpose_matvec_acc(p.u_z, &s.gz, &mut s.next);
        // reset gate
        outer_acc(grad, o.w_r, &s.gr, x);
        vec_acc(grad, o.b_r, &s.gr);
        outer_acc(grad, o.u_r, &s.gr, hp);
        transpose_matvec_acc(p.u_r, &s.gr, &mut s.next);

        std::mem::swap(&mut s.gh, &mut s.next);
    }
}

/// Sum of masked BCE over the labeled visits of one patient; its gradient
/// is added into `grad`. Returns `(loss_sum, labeled_visits)`.
pub fn patient_loss_grad(
    params: &ModelParams,
    sample: &Sample,
    activation: Activation,
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    let input = &sample.input;
    check_input(params, input)?;
    let Some(last) = sample.labels.iter().rposition(|l| l.is_labeled()) else {
        return Ok((0.0, 0));
    };
    let cfg = params.config();
    let (h, n_feat) = (cfg.hidden, cfg.num_features);
    let o = params.offsets();
    let steps = last + 1;

    let f0 = baseline_embedding(params, input);
    let fwd = forward_channels(params, input, steps);
    let mut fwd_ext: Vec<Vec<f64>> = vec![vec![0.0; (steps + 1) * h]; n_feat];
    let mut g_f0 = vec![0.0; h];
    let mut bwd: Vec<GruTrace> = (0..n_feat).map(|_| GruTrace::default()).collect();
    let mut features = vec![0.0; n_feat * h];
    let mut g_feat = vec![0.0; n_feat * h];
    let mut head = HeadTrace::default();
    let mut scratch = GruScratch::default();
    let mut g_q = vec![0.0; h];
    let mut g_alpha = vec![0.0; n_feat];
    let mut g_zeta = vec![0.0; n_feat];
    let mut g_sqz = vec![0.0; h];
    let mut g_key = vec![0.0; h];
    let (mut loss, mut count) = (0.0, 0usize);

    for (t, label) in sample.labels[..steps].iter().enumerate() {
        let Some(y) = label.target() else { continue };
        let len = t + 1;
        for (n, f) in features.chunks_exact_mut(h).enumerate() {
            backward_channel(params, input, n, len, &mut bwd[n]);
            for ((out, a), b) in f.iter_mut().zip(fwd[n].state(len)).zip(bwd[n].last()) {
                *out = a + b;
            }
        }
        head_forward(params, &f0, &features, activation, &mut head)?;
        let (l, g_p) = bce_and_grad(head.risk, y);
        loss += l;
        count += 1;
        let g_logit = g_p * head.risk * (1.0 - head.risk);
        if g_logit == 0.0 {
            continue;
        }

        // head
        let w_head = params.slice(o.head_w, 2 * h);
        outer_acc(grad, o.head_w, &[g_logit], &head.context);
        outer_acc(grad, o.head_w + h, &[g_logit], &f0);
        grad[o.head_b] += g_logit;
        let g_ctx: Vec<f64> = w_head[..h].iter().map(|w| w * g_logit).collect();
        g_f0.iter_mut().zip(&w_head[h..]).for_each(|(g, w)| *g += w * g_logit);

        // weighted sum
        for (n, (f, gf)) in features.chunks_exact(h).zip(g_feat.chunks_exact_mut(h)).enumerate() {
            g_alpha[n] = g_ctx.iter().zip(f).map(|(a, b)| a * b).sum();
            let a = head.alpha[n];
            gf.iter_mut().zip(&g_ctx).for_each(|(g, c)| *g = a * c);
        }
        g_zeta.iter_mut().for_each(|g| *g = 0.0);
        match activation {
            Activation::Softmax => crate::numerics::activation::softmax_vjp(&head.alpha, &g_alpha, &mut g_zeta),
            Activation::Sparsemax => crate::numerics::activation::sparsemax_vjp(&head.alpha, &g_alpha, &mut g_zeta),
        }

        // scores and keys
        g_q.iter_mut().for_each(|g| *g = 0.0);
        for (n, (key, f)) in head.keys.chunks_exact(h).zip(features.chunks_exact(h)).enumerate() {
            let gz = g_zeta[n];
            g_q.iter_mut().zip(key).for_each(|(g, k)| *g += gz * k);
            g_key.iter_mut().zip(&head.query).for_each(|(g, q)| *g = gz * q);
            let c = &o.channels[n];
            outer_acc(grad, c.key_w, &g_key, f);
            vec_acc(grad, c.key_b, &g_key);
            transpose_matvec_acc(params.slice(c.key_w, h * h), &g_key, &mut g_feat[n * h..(n + 1) * h]);
        }

        // query and squeeze
        outer_acc(grad, o.query_w, &g_q, &head.f_sqz);
        vec_acc(grad, o.query_b, &g_q);
        g_sqz.iter_mut().for_each(|g| *g = 0.0);
        transpose_matvec_acc(params.slice(o.query_w, h * h), &g_q, &mut g_sqz);
        let k = (n_feat + 1) as f64;
        g_f0.iter_mut().zip(&g_sqz).for_each(|(g, s)| *g += s / k);

        for n in 0..n_feat {
            let gf = &mut g_feat[n * h..(n + 1) * h];
            gf.iter_mut().zip(&g_sqz).for_each(|(g, s)| *g += s / k);
            let ch = params.channel(n);
            gru_backprop(&ch.backward, &o.channels[n].backward, &bwd[n], gf, true, grad, &mut scratch);
            fwd_ext[n][len * h..(len + 1) * h]
                .iter_mut()
                .zip(gf.iter())
                .for_each(|(e, g)| *e += g);
        }
    }

    for n in 0..n_feat {
        let ch = params.channel(n);
        gru_backprop(&ch.forward, &o.channels[n].forward, &fwd[n], &fwd_ext[n], false, grad, &mut scratch);
    }
    outer_acc(grad, o.embed_w, &g_f0, &input.baseline);
    vec_acc(grad, o.embed_b, &g_f0);
    Ok((loss, count))
}
