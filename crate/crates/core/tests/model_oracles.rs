mod common;

use aicare::data::{ModelInput, VisitLabel};
use aicare::model::{
    attention_weights, embed_baseline, encode_channel, forward_prefix, forward_prefix_with, gru_cell, predict_head,
    predict_visits, squeeze, Checkpoint, GruParams, ModelConfig, ModelParams,
};
use aicare::numerics::{sigmoid, softmax, sparsemax, Activation, Tensor};
use aicare::Error;
use common::*;
use rand::Rng;

fn scalar_gru<'a>(w: &'a [f64; 9], b: &'a [f64; 3]) -> GruParams<'a> {
    GruParams {
        hidden: 1,
        input: 1,
        w_z: &w[0..1],
        u_z: &w[1..2],
        b_z: &b[0..1],
        w_r: &w[3..4],
        u_r: &w[4..5],
        b_r: &b[1..2],
        w_c: &w[6..7],
        u_c: &w[7..8],
        b_c: &b[2..3],
    }
}

/// Scalar GRU step written out by hand.
#[allow(clippy::too_many_arguments)]
fn hand_gru(x: f64, h: f64, wz: f64, uz: f64, wr: f64, ur: f64, wc: f64, uc: f64) -> f64 {
    let z = 1.0 / (1.0 + (-(wz * x + uz * h)).exp());
    let r = 1.0 / (1.0 + (-(wr * x + ur * h)).exp());
    let c = (wc * x + uc * (r * h)).tanh();
    (1.0 - z) * h + z * c
}

#[test]
fn gru_cell_zero_params() {
    let (w, b) = ([0.0; 9], [0.0; 3]);
    let p = scalar_gru(&w, &b);
    assert_eq!(gru_cell(&[3.0], &[1.0], &p).unwrap(), vec![0.5]);
    assert_eq!(gru_cell(&[3.0], &[0.0], &p).unwrap(), vec![0.0]);
}

#[test]
fn gru_cell_unit_weights_match_hand_recurrence() {
    let (w, b) = ([1.0; 9], [0.0; 3]);
    let p = scalar_gru(&w, &b);
    let got = gru_cell(&[1.0], &[0.0], &p).unwrap()[0];
    // z = σ(1), candidate = tanh(1), h = z·tanh(1)
    let expected = (1.0 / (1.0 + (-1.0f64).exp())) * 1.0f64.tanh();
    assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    assert!((got - 0.556_769_9).abs() < 1e-6);
}

#[test]
fn gru_cell_shape_mismatch() {
    let (w, b) = ([1.0; 9], [0.0; 3]);
    let p = scalar_gru(&w, &b);
    assert!(matches!(gru_cell(&[1.0], &[0.0, 0.0], &p), Err(Error::Dimension { .. })));
}

fn channel_params(values: &[f64]) -> (ModelParams, usize) {
    let cfg = ModelConfig { hidden: 1, ..ModelConfig::new(1) };
    let mut p = ModelParams::zeros(&cfg).unwrap();
    let len = p.values().len();
    p.values_mut()[..values.len().min(len)].copy_from_slice(&values[..values.len().min(len)]);
    (p, len)
}

#[test]
fn encode_channel_single_step_symmetry() {
    let mut r = rng(1);
    let cfg = ModelConfig { hidden: 4, seed: 9, ..ModelConfig::new(1) };
    let mut p = ModelParams::init(&cfg).unwrap();
    // copy forward GRU weights into the backward GRU
    for g in ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c"] {
        let v = p.get(&format!("channel.0.forward.{g}")).unwrap();
        let v = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x + r.random_range(0.0..0.1) * 0.0).collect()).unwrap();
        p.set(&format!("channel.0.backward.{g}"), &v).unwrap();
    }
    let x = 0.7;
    let f = encode_channel(&[x], &p.channel(0)).unwrap();
    let step = gru_cell(&[x], &[0.0; 4], &p.channel(0).forward).unwrap();
    for (a, b) in f.iter().zip(&step) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn encode_channel_zero_params() {
    let (p, _) = channel_params(&[]);
    assert_eq!(encode_channel(&[1.0, -3.0, 2.0], &p.channel(0)).unwrap(), vec![0.0]);
    assert!(matches!(encode_channel(&[], &p.channel(0)), Err(Error::Domain(_))));
}

#[test]
fn encode_channel_three_steps_hand_unrolled() {
    // forward: w_z, u_z, b_z, w_r, u_r, b_r, w_c, u_c, b_c; backward likewise
    let fw = [0.5, -0.3, 0.0, 0.8, 0.2, 0.0, 1.1, 0.7, 0.0];
    let bw = [-0.4, 0.6, 0.0, 0.3, -0.9, 0.0, 0.9, -0.5, 0.0];
    let mut values = fw.to_vec();
    values.extend_from_slice(&bw);
    let (p, _) = channel_params(&values);
    let xs = [0.2, -1.0, 1.5];
    let step_f = |x, h| hand_gru(x, h, fw[0], fw[1], fw[3], fw[4], fw[6], fw[7]);
    let step_b = |x, h| hand_gru(x, h, bw[0], bw[1], bw[3], bw[4], bw[6], bw[7]);
    let h1 = step_f(xs[0], 0.0);
    let h2 = step_f(xs[1], h1);
    let h3 = step_f(xs[2], h2);
    let g3 = step_b(xs[2], 0.0);
    let g2 = step_b(xs[1], g3);
    let g1 = step_b(xs[0], g2);
    let got = encode_channel(&xs, &p.channel(0)).unwrap()[0];
    assert!((got - (h3 + g1)).abs() < 1e-14, "{got} vs {}", h3 + g1);
}

#[test]
#[allow(clippy::neg_multiply)]
fn embed_baseline_cases() {
    let id = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    let r0 = [0.3, 1.0, -2.0, 0.0];
    assert_eq!(embed_baseline(&r0, &id, &[0.0; 4]).unwrap(), r0.to_vec());
    assert_eq!(embed_baseline(&r0, &[0.0; 8], &[0.5, -1.0]).unwrap(), vec![0.5, -1.0]);
    let w = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0];
    let got = embed_baseline(&r0, &w, &[0.1, 0.2]).unwrap();
    let hand = [
        0.1 + 1.0 * 0.3 + 2.0 * 1.0 + 3.0 * -2.0 + 4.0 * 0.0,
        0.2 + -1.0 * 0.3 + 0.5 * 1.0 + 0.0 * -2.0 + 2.0 * 0.0,
    ];
    assert!((got[0] - hand[0]).abs() < 1e-15 && (got[1] - hand[1]).abs() < 1e-15);
    assert!(embed_baseline(&r0, &[0.0; 3], &[0.0]).is_err());
}

#[test]
fn squeeze_cases() {
    let v = [1.5, -2.0];
    assert_eq!(squeeze(&[&v, &v, &v]).unwrap(), v.to_vec());
    assert_eq!(squeeze(&[&[2.0], &[0.0], &[1.0]]).unwrap(), vec![1.0]);
    let mut r = rng(17);
    let vs: Vec<Vec<f64>> = (0..17).map(|_| (0..5).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
    let got = squeeze(&refs).unwrap();
    for (j, g) in got.iter().enumerate() {
        let mut total = 0.0;
        for v in &vs {
            total += v[j];
        }
        assert!((g - total / 17.0).abs() < 1e-12);
    }
    assert!(squeeze(&[&[1.0], &[1.0, 2.0]]).is_err());
}

#[test]
fn attention_cases() {
    let h = 3;
    let mut p = random_model(2, 4, h, Activation::Softmax);
    // identical keys: same key projection and same embedding for every channel
    let kw = p.get("channel.0.key.weight").unwrap();
    let kb = p.get("channel.0.key.bias").unwrap();
    for n in 1..4 {
        p.set(&format!("channel.{n}.key.weight"), &kw).unwrap();
        p.set(&format!("channel.{n}.key.bias"), &kb).unwrap();
    }
    let f = [0.3, -0.2, 0.9];
    let (alpha, _) = attention_weights(&p, &[0.1, 0.2, 0.3], &[&f, &f, &f, &f], Activation::Softmax).unwrap();
    for a in alpha {
        assert!((a - 0.25).abs() < 1e-15);
    }
    // delegation: α equals the activation of ζ exactly
    let p = random_model(3, 4, h, Activation::Softmax);
    let fs: Vec<Vec<f64>> = (0..4).map(|n| vec![0.1 * n as f64, -0.5, 1.0]).collect();
    let refs: Vec<&[f64]> = fs.iter().map(Vec::as_slice).collect();
    for act in [Activation::Softmax, Activation::Sparsemax] {
        let (alpha, zeta) = attention_weights(&p, &[0.4, 0.0, -0.3], &refs, act).unwrap();
        let expected = match act {
            Activation::Softmax => softmax(&zeta).unwrap(),
            Activation::Sparsemax => sparsemax(&zeta).unwrap(),
        };
        assert_eq!(alpha, expected);
    }
    assert_eq!(sparsemax(&[10.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn predict_head_cases() {
    let h = 3;
    let mut p = random_model(4, 2, h, Activation::Softmax);
    let f0 = [0.2, -0.4, 1.0];
    let f1 = [1.0, 2.0, 3.0];
    let f2 = [-1.0, 0.5, 0.0];
    // composition oracle
    let w = p.get("head.weight").unwrap();
    let b = p.get("head.bias").unwrap().data()[0];
    let alpha = [0.3, 0.7];
    let s: Vec<f64> = (0..h).map(|j| alpha[0] * f1[j] + alpha[1] * f2[j]).chain(f0).collect();
    let logit = b + w.data().iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
    let got = predict_head(&p, &f0, &[&f1, &f2], &alpha).unwrap();
    assert!((got - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-12);
    // one-hot α selects f_n
    let one_hot = predict_head(&p, &f0, &[&f1, &f2], &[0.0, 1.0]).unwrap();
    let s: Vec<f64> = f2.iter().copied().chain(f0).collect();
    let logit = b + w.data().iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
    assert!((one_hot - sigmoid(logit)).abs() < 1e-15);
    // zero head weights
    p.set("head.weight", &Tensor::zeros(&[1, 2 * h])).unwrap();
    p.set("head.bias", &Tensor::zeros(&[1])).unwrap();
    assert_eq!(predict_head(&p, &f0, &[&f1, &f2], &alpha).unwrap(), 0.5);
}

/// Independent straight-line implementation of the full pipeline.
fn pipeline_oracle(p: &ModelParams, input: &ModelInput, t: usize, act: Activation) -> (f64, Vec<f64>) {
    let h = p.config().hidden;
    let get = |name: &str| p.get(name).unwrap().data().to_vec();
    let mv = |w: &[f64], x: &[f64]| -> Vec<f64> {
        (0..w.len() / x.len()).map(|i| (0..x.len()).map(|j| w[i * x.len() + j] * x[j]).sum()).collect()
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let cell = |prefix: &str, x: f64, hp: &[f64]| -> Vec<f64> {
        let g = |n: &str| get(&format!("{prefix}.{n}"));
        let uz = mv(&g("u_z"), hp);
        let ur = mv(&g("u_r"), hp);
        let z: Vec<f64> = (0..h).map(|i| sig(g("w_z")[i] * x + uz[i] + g("b_z")[i])).collect();
        let r: Vec<f64> = (0..h).map(|i| sig(g("w_r")[i] * x + ur[i] + g("b_r")[i])).collect();
        let rh: Vec<f64> = (0..h).map(|i| r[i] * hp[i]).collect();
        let uc = mv(&g("u_c"), &rh);
        (0..h)
            .map(|i| {
                let c = (g("w_c")[i] * x + uc[i] + g("b_c")[i]).tanh();
                (1.0 - z[i]) * hp[i] + z[i] * c
            })
            .collect()
    };
    let n_feat = input.series.len();
    let mut fs = Vec::new();
    for n in 0..n_feat {
        let mut hf = vec![0.0; h];
        for &x in &input.series[n][..t] {
            hf = cell(&format!("channel.{n}.forward"), x, &hf);
        }
        let mut hb = vec![0.0; h];
        for &x in input.series[n][..t].iter().rev() {
            hb = cell(&format!("channel.{n}.backward"), x, &hb);
        }
        fs.push((0..h).map(|i| hf[i] + hb[i]).collect::<Vec<f64>>());
    }
    let e = mv(&get("baseline.weight"), &input.baseline);
    let f0: Vec<f64> = (0..h).map(|i| e[i] + get("baseline.bias")[i]).collect();
    let sqz: Vec<f64> = (0..h).map(|i| (f0[i] + fs.iter().map(|f| f[i]).sum::<f64>()) / (n_feat + 1) as f64).collect();
    let qv = mv(&get("query.weight"), &sqz);
    let q: Vec<f64> = (0..h).map(|i| qv[i] + get("query.bias")[i]).collect();
    let zeta: Vec<f64> = (0..n_feat)
        .map(|n| {
            let kv = mv(&get(&format!("channel.{n}.key.weight")), &fs[n]);
            (0..h).map(|i| q[i] * (kv[i] + get(&format!("channel.{n}.key.bias"))[i])).sum()
        })
        .collect();
    let alpha = match act {
        Activation::Softmax => {
            let m = zeta.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = zeta.iter().map(|z| (z - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect::<Vec<f64>>()
        }
        Activation::Sparsemax => sparsemax(&zeta).unwrap(),
    };
    let ctx: Vec<f64> = (0..h).map(|i| (0..n_feat).map(|n| alpha[n] * fs[n][i]).sum()).collect();
    let w = get("head.weight");
    let logit = get("head.bias")[0] + (0..h).map(|i| w[i] * ctx[i] + w[h + i] * f0[i]).sum::<f64>();
    (sig(logit), alpha)
}

#[test]
fn forward_prefix_matches_pipeline_oracle() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let p = random_model(seed, 2, 3, Activation::Softmax);
        let input = random_input(&mut r, 2, 3);
        for t in 1..=3 {
            for act in [Activation::Softmax, Activation::Sparsemax] {
                let got = forward_prefix_with(&p, &input, t, act).unwrap();
                let (risk, alpha) = pipeline_oracle(&p, &input, t, act);
                assert!((got.risk - risk).abs() < 1e-12, "risk {} vs {risk}", got.risk);
                for (a, b) in got.attention.iter().zip(&alpha) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn forward_prefix_first_visit_equals_single_visit_record() {
    let mut r = rng(8);
    let p = random_model(8, 3, 4, Activation::Softmax);
    let input = random_input(&mut r, 3, 5);
    let single = ModelInput { baseline: input.baseline, series: input.series.iter().map(|s| vec![s[0]]).collect() };
    assert_eq!(forward_prefix(&p, &input, 1).unwrap(), forward_prefix(&p, &single, 1).unwrap());
    assert!(matches!(forward_prefix(&p, &input, 0), Err(Error::Usage(_))));
    assert!(matches!(forward_prefix(&p, &input, 6), Err(Error::Usage(_))));
}

#[test]
fn predict_visits_equals_per_prefix_calls() {
    let mut r = rng(21);
    let p = random_model(21, 3, 4, Activation::Sparsemax);
    let input = random_input(&mut r, 3, 6);
    let all = predict_visits(&p, &input, Activation::Sparsemax).unwrap();
    for (t, pred) in all.iter().enumerate() {
        assert_eq!(pred, &forward_prefix(&p, &input, t + 1).unwrap());
    }
}

#[test]
fn causality_under_future_perturbation() {
    let mut r = rng(100);
    for trial in 0..100 {
        let n = r.random_range(1..4);
        let t_total = r.random_range(2..7);
        let p = random_model(trial, n, 3, Activation::Softmax);
        let input = random_input(&mut r, n, t_total);
        let t = r.random_range(1..t_total);
        let before = forward_prefix(&p, &input, t).unwrap();
        let mut perturbed = input.clone();
        for s in &mut perturbed.series {
            for v in &mut s[t..] {
                *v += r.random_range(-5.0..5.0);
            }
        }
        let after = forward_prefix(&p, &perturbed, t).unwrap();
        assert_eq!(before.risk.to_bits(), after.risk.to_bits());
        assert_eq!(before, after);
    }
}

#[test]
fn simplex_and_range_over_random_models() {
    let mut r = rng(5);
    for trial in 0..30 {
        let n = r.random_range(1..6);
        let act = if trial % 2 == 0 { Activation::Softmax } else { Activation::Sparsemax };
        let p = random_model(trial, n, 4, act);
        let input = random_input(&mut r, n, 4);
        for pred in predict_visits(&p, &input, act).unwrap() {
            assert!(pred.risk > 0.0 && pred.risk < 1.0);
            assert!(pred.attention.iter().all(|a| *a >= 0.0));
            assert!((pred.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_permutation_equivariance() {
    let mut r = rng(31);
    let n = 3;
    let p = random_model(31, n, 4, Activation::Softmax);
    let input = random_input(&mut r, n, 4);
    let perm = [2, 0, 1];
    let mut q = p.clone();
    for (new, &old) in perm.iter().enumerate() {
        for e in p.entries().iter().filter(|e| e.name.starts_with(&format!("channel.{old}."))) {
            let suffix = &e.name[format!("channel.{old}.").len()..];
            q.set(&format!("channel.{new}.{suffix}"), &p.get(&e.name).unwrap()).unwrap();
        }
    }
    let permuted = ModelInput { baseline: input.baseline, series: perm.iter().map(|&o| input.series[o].clone()).collect() };
    for t in 1..=4 {
        let a = forward_prefix(&p, &input, t).unwrap();
        let b = forward_prefix(&q, &permuted, t).unwrap();
        assert!((a.risk - b.risk).abs() < 1e-12);
        for (new, &old) in perm.iter().enumerate() {
            assert!((b.attention[new] - a.attention[old]).abs() < 1e-12);
        }
    }
}

#[test]
fn sequence_reversal_duality() {
    let mut r = rng(41);
    let p = random_model(41, 1, 4, Activation::Softmax);
    let mut swapped = p.clone();
    for g in ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c"] {
        let f = p.get(&format!("channel.0.forward.{g}")).unwrap();
        let b = p.get(&format!("channel.0.backward.{g}")).unwrap();
        swapped.set(&format!("channel.0.forward.{g}"), &b).unwrap();
        swapped.set(&format!("channel.0.backward.{g}"), &f).unwrap();
    }
    let xs: Vec<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
    let rev: Vec<f64> = xs.iter().rev().copied().collect();
    let a = encode_channel(&xs, &p.channel(0)).unwrap();
    let b = encode_channel(&rev, &swapped.channel(0)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    use aicare::data::{generate_synthetic, CohortSpec, Preprocessor};
    let mut spec = CohortSpec::planted_demo();
    spec.num_patients = 5;
    let (cohort, _) = generate_synthetic(&spec, 2).unwrap();
    let prep = Preprocessor::fit(&cohort).unwrap();
    let p = random_model(7, cohort.num_features(), 5, Activation::Softmax);
    let ck = Checkpoint::new(&p, &prep).unwrap();
    let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
    let q = back.model_params().unwrap();
    assert!(p.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back.preprocessing, prep);

    let mut bad = ck.clone();
    bad.format_version = 99;
    assert!(matches!(bad.model_params(), Err(Error::Config(_))));
    let mut bad = ck.clone();
    bad.params[0].shape = vec![2, 2];
    assert!(matches!(bad.model_params(), Err(Error::Config(_))));
    let mut bad = ck;
    bad.config.hidden = 6;
    assert!(bad.model_params().is_err());
}

#[test]
fn labels_drive_sample_helpers() {
    let s = sample_from(random_input(&mut rng(1), 1, 2), vec![VisitLabel::High, VisitLabel::Uncertain]);
    assert_eq!(s.num_labeled(), 1);
}
