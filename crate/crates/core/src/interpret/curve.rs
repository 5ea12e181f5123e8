//! Importance-versus-value curves, shape classification and
//! recommendations.
//!
//! Values are binned into equal-width bins over the central 99% of the
//! observed range (outliers fall into the edge bins). Per-bin attention is
//! smoothed with a count-weighted 3-bin moving average. With `m` the bin of
//! minimal smoothed attention, the rises from `m` to the first and last
//! populated bins decide the shape: both at least [`THETA_RISE`] gives V,
//! exactly one gives L, neither gives Irregular. A V turns at `m`; an L
//! turns at the knee of a hinge fit to the binned attention.

use serde::{Deserialize, Serialize};

use super::importance::ImportanceRecord;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 40;
/// Fraction of values kept inside the binned range.
pub const CENTRAL_MASS: f64 = 0.99;
pub const THETA_RISE: f64 = 0.05;
pub const MIN_POPULATED_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub feature: String,
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub mean_attention: Vec<Option<f64>>,
    pub mean_risk: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl Curve {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        (self.edges[bin] + self.edges[bin + 1]) / 2.0
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn populated(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

/// Values below this many thousandths, and above its complement, fall
/// outside the binned range; matches [`CENTRAL_MASS`].
const TAIL_PER_MILLE: usize = 5;

/// Inverse empirical CDF at `per_mille / 1000` of sorted values. Integer
/// ranks keep it unchanged when every value is repeated.
fn quantile(sorted: &[f64], per_mille: usize) -> f64 {
    sorted[(sorted.len() * per_mille).div_ceil(1000).max(1) - 1]
}

/// Bins `(value, attention, risk)` triples of one feature.
pub fn curve_from_points(feature: &str, points: &[(f64, f64, f64)], bin_count: usize) -> Result<Curve> {
    if points.is_empty() {
        return Err(Error::InsufficientData(format!("no records for feature {feature}")));
    }
    if bin_count == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    if points.iter().any(|(v, a, r)| !(v.is_finite() && a.is_finite() && r.is_finite())) {
        return Err(Error::Numeric(format!("non-finite record for feature {feature}")));
    }
    let bins = bin_count.min(points.len());
    let mut values: Vec<f64> = points.iter().map(|p| p.0).collect();
    values.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (quantile(&values, TAIL_PER_MILLE), quantile(&values, 1000 - TAIL_PER_MILLE));
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut att = vec![0.0; bins];
    let mut risk = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for (v, a, r) in points {
        let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        att[idx] += a;
        risk[idx] += r;
        counts[idx] += 1;
    }
    let mean = |sums: &[f64]| -> Vec<Option<f64>> {
        sums.iter().zip(&counts).map(|(s, c)| (*c > 0).then(|| s / *c as f64)).collect()
    };
    Ok(Curve {
        feature: feature.to_string(),
        edges,
        mean_attention: mean(&att),
        mean_risk: mean(&risk),
        counts,
    })
}

/// Binned curve for one feature out of a mixed record list.
pub fn importance_value_curve(records: &[ImportanceRecord], feature: &str, bin_count: usize) -> Result<Curve> {
    let points: Vec<(f64, f64, f64)> = records
        .iter()
        .filter(|r| r.feature == feature)
        .map(|r| (r.value, r.attention, r.risk))
        .collect();
    curve_from_points(feature, &points, bin_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    V,
    L,
    Irregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recommendation {
    /// Keep the value above the turning point; risk falls as it rises.
    Higher,
    /// Keep the value at or above the turning point.
    AtLeast,
    /// Keep the value at or below the turning point.
    NotExceed,
    Unknown,
}

impl Recommendation {
    /// Short textual form such as `> 32`.
    pub fn describe(self, turning_point: Option<f64>) -> String {
        match (self, turning_point) {
            (Recommendation::Higher | Recommendation::AtLeast, Some(t)) => format!("> {}", fmt_value(t)),
            (Recommendation::NotExceed, Some(t)) => format!("< {}", fmt_value(t)),
            _ => "-".into(),
        }
    }
}

pub(crate) fn fmt_value(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub shape: Shape,
    pub turning_point: Option<f64>,
    pub min_bin: usize,
    pub rise_left: f64,
    pub rise_right: f64,
    /// Smoothed attention per bin (absent for empty bins).
    pub smoothed: Vec<Option<f64>>,
}

/// Knee of a count-weighted hinge fit `a + b·max(0, t − v)` (attention
/// rising towards low values) or `a + b·max(0, v − t)` (towards high
/// values), scanned over populated bin midpoints.
pub fn hinge_knee(curve: &Curve, rising_left: bool) -> usize {
    let pts: Vec<(usize, f64, f64, f64)> = (0..curve.bins())
        .filter_map(|i| curve.mean_attention[i].map(|a| (i, curve.midpoint(i), a, curve.counts[i] as f64)))
        .collect();
    let mut best = (f64::INFINITY, pts[0].0);
    for &(knee, t, _, _) in &pts {
        let z = |x: f64| if rising_left { (t - x).max(0.0) } else { (x - t).max(0.0) };
        let (mut sw, mut sz, mut sy) = (0.0, 0.0, 0.0);
        for &(_, x, y, w) in &pts {
            sw += w;
            sz += w * z(x);
            sy += w * y;
        }
        let (mz, my) = (sz / sw, sy / sw);
        let (mut szz, mut szy) = (0.0, 0.0);
        for &(_, x, y, w) in &pts {
            szz += w * (z(x) - mz).powi(2);
            szy += w * (z(x) - mz) * (y - my);
        }
        let slope = if szz > 0.0 { (szy / szz).max(0.0) } else { 0.0 };
        let sse: f64 = pts
            .iter()
            .map(|&(_, x, y, w)| w * (y - my - slope * (z(x) - mz)).powi(2))
            .sum();
        if sse < best.0 {
            best = (sse, knee);
        }
    }
    best.1
}

/// Count-weighted 3-bin moving average over populated neighbours.
pub fn smooth(curve: &Curve) -> Vec<Option<f64>> {
    let n = curve.bins();
    (0..n)
        .map(|i| {
            curve.mean_attention[i]?;
            let (mut num, mut den) = (0.0, 0.0);
            for j in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                if let Some(a) = curve.mean_attention[j] {
                    num += a * curve.counts[j] as f64;
                    den += curve.counts[j] as f64;
                }
            }
            Some(num / den)
        })
        .collect()
}

pub fn classify_shape(curve: &Curve) -> Result<ShapeFit> {
    let populated = curve.populated();
    if populated < MIN_POPULATED_BINS {
        return Err(Error::InsufficientData(format!(
            "feature {} has {populated} populated bins, need {MIN_POPULATED_BINS}",
            curve.feature
        )));
    }
    let smoothed = smooth(curve);
    let present: Vec<(usize, f64)> = smoothed.iter().enumerate().filter_map(|(i, s)| s.map(|v| (i, v))).collect();
    let &(min_bin, min_val) = present
        .iter()
        .fold(&present[0], |best, p| if p.1 < best.1 { p } else { best });
    let (first, last) = (present[0], present[present.len() - 1]);
    let rise_left = first.1 - min_val;
    let rise_right = last.1 - min_val;
    let (left_up, right_up) = (rise_left >= THETA_RISE, rise_right >= THETA_RISE);

    let (shape, turning_point) = match (left_up, right_up) {
        (true, true) => (Shape::V, Some(curve.midpoint(min_bin))),
        (true, false) | (false, true) => (Shape::L, Some(curve.midpoint(hinge_knee(curve, left_up)))),
        (false, false) => (Shape::Irregular, None),
    };
    Ok(ShapeFit { shape, turning_point, min_bin, rise_left, rise_right, smoothed })
}

/// Pearson correlation of bin midpoints and mean risk over populated bins.
fn value_risk_correlation(curve: &Curve, bins: impl Iterator<Item = usize>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = bins
        .filter_map(|i| curve.mean_risk[i].map(|r| (curve.midpoint(i), r)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let cov: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let vy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Direction of the advice implied by a classified curve.
///
/// V curves follow the sign of the value/risk correlation: risk falling
/// with value gives `Higher`, rising gives `NotExceed`. L curves follow the
/// side carrying the attention: low values give `AtLeast`, high values
/// `NotExceed`.
pub fn recommend(curve: &Curve, fit: &ShapeFit) -> Recommendation {
    match fit.shape {
        Shape::Irregular => Recommendation::Unknown,
        Shape::L => {
            if fit.rise_left >= fit.rise_right {
                Recommendation::AtLeast
            } else {
                Recommendation::NotExceed
            }
        }
        Shape::V => match value_risk_correlation(curve, 0..curve.bins()) {
            Some(c) if c < 0.0 => Recommendation::Higher,
            Some(c) if c > 0.0 => Recommendation::NotExceed,
            _ => Recommendation::Unknown,
        },
    }
}
