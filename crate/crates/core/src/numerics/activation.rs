//! Simplex-valued activations used for feature attention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps attention scores onto the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softmax,
    Sparsemax,
}

impl Activation {
    pub fn apply(self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Activation::Softmax => softmax(z),
            Activation::Sparsemax => sparsemax(z),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax" => Ok(Activation::Softmax),
            "sparsemax" => Ok(Activation::Sparsemax),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Softmax => "softmax",
            Activation::Sparsemax => "sparsemax",
        })
    }
}

fn check_input(z: &[f64], op: &str) -> Result<()> {
    if z.is_empty() {
        return Err(Error::Domain(format!("{op} of an empty vector")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{op} input contains non-finite values")));
    }
    Ok(())
}

fn max_of(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    check_input(z, "softmax")?;
    let m = max_of(z);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Euclidean projection of `z` onto the probability simplex.
///
/// Sort-and-threshold: with `z` sorted descending, the support size is the
/// largest `k` with `1 + k·z_(k) > Σ_{j≤k} z_(j)`, the threshold is
/// `τ = (Σ_{j≤k} z_(j) − 1) / k` and the output is `max(z − τ, 0)`.
/// Inputs are shifted by their maximum first, so the result only depends on
/// the gaps between entries.
pub fn sparsemax(z: &[f64]) -> Result<Vec<f64>> {
    check_input(z, "sparsemax")?;
    let m = max_of(z);
    let shifted: Vec<f64> = z.iter().map(|v| v - m).collect();
    let tau = sparsemax_threshold(&shifted);
    let mut out: Vec<f64> = shifted.iter().map(|v| (v - tau).max(0.0)).collect();
    // Rounding in the threshold can leave the sum off by a few ulps.
    let total: f64 = out.iter().sum();
    if total != 1.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

fn sparsemax_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = sorted[0];
    let mut support = 1usize;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k = (i + 1) as f64;
        if 1.0 + k * v > cumsum {
            support = i + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - 1.0) / support as f64
}

/// Vector-Jacobian product of softmax given its output `p`.
pub(crate) fn softmax_vjp(p: &[f64], g: &[f64], out: &mut [f64]) {
    let inner: f64 = p.iter().zip(g).map(|(pi, gi)| pi * gi).sum();
    for ((o, pi), gi) in out.iter_mut().zip(p).zip(g) {
        *o += pi * (gi - inner);
    }
}

/// Vector-Jacobian product of sparsemax given its output `p`.
///
/// On the support set `S` the Jacobian is `I − 1·1ᵀ/|S|`; off the support it
/// is zero.
pub(crate) fn sparsemax_vjp(p: &[f64], g: &[f64], out: &mut [f64]) {
    let (count, total) = p
        .iter()
        .zip(g)
        .filter(|(pi, _)| **pi > 0.0)
        .fold((0usize, 0.0), |(c, s), (_, gi)| (c + 1, s + gi));
    if count == 0 {
        return;
    }
    let mean = total / count as f64;
    for ((o, pi), gi) in out.iter_mut().zip(p).zip(g) {
        if *pi > 0.0 {
            *o += gi - mean;
        }
    }
}
