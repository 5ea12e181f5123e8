mod common;

use aicare::numerics::{softmax, sparsemax};
use rand::Rng;

/// Sort-and-threshold projection written out directly.
fn sparsemax_sort_oracle(z: &[f64]) -> Vec<f64> {
    let mut s = z.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, v) in s.iter().enumerate() {
        cum += v;
        let k = (k + 1) as f64;
        if 1.0 + k * v > cum {
            tau = (cum - 1.0) / k;
        }
    }
    z.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Threshold found by bisection on Σ max(z − τ, 0) = 1.
fn sparsemax_bisect_oracle(z: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| z.iter().map(|v| (v - tau).max(0.0)).sum::<f64>();
    let hi0 = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (hi0 - 1.0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    z.iter().map(|v| (v - 0.5 * (lo + hi)).max(0.0)).collect()
}

#[test]
fn two_point_example() {
    let p = sparsemax(&[1.2, 0.8]).unwrap();
    let o = sparsemax_sort_oracle(&[1.2, 0.8]);
    for (a, (b, want)) in p.iter().zip(o.iter().zip([0.7, 0.3])) {
        assert!((a - want).abs() < 1e-12 && (b - want).abs() < 1e-12);
    }
}

#[test]
fn ten_thousand_inputs_on_the_simplex() {
    let mut r = common::rng(42);
    for i in 0..10_000 {
        let n = r.random_range(1..=20);
        let spread = [0.01, 1.0, 30.0][i % 3];
        let z: Vec<f64> = (0..n).map(|_| r.random_range(-spread..spread)).collect();
        for p in [softmax(&z).unwrap(), sparsemax(&z).unwrap()] {
            let min = p.iter().copied().fold(f64::INFINITY, f64::min);
            let sum: f64 = p.iter().sum();
            assert!(min >= 0.0, "{z:?}");
            assert!((sum - 1.0).abs() < 1e-12, "{z:?}: {sum}");
        }
        let sp = sparsemax(&z).unwrap();
        for ((a, b), c) in sp.iter().zip(sparsemax_sort_oracle(&z)).zip(sparsemax_bisect_oracle(&z)) {
            assert!((a - b).abs() < 1e-12);
            assert!((a - c).abs() < 1e-9);
        }
    }
}
