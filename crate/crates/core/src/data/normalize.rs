//! Z-score normalization with statistics fitted on a training split.

use serde::{Deserialize, Serialize};

use super::record::{Cohort, BASELINE_BINARY, BASELINE_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    /// Zero-variance features are centred but not scaled.
    fn scale(&self) -> f64 {
        if self.std > 0.0 {
            self.std
        } else {
            1.0
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale()
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.scale() + self.mean
    }

    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum) = (0usize, 0.0);
        let vals: Vec<f64> = values.collect();
        for v in &vals {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Self { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Per-feature statistics. Binary baseline columns carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub dynamic: Vec<FeatureStats>,
    pub baseline: Vec<Option<FeatureStats>>,
}

impl NormStats {
    /// Population mean and standard deviation over every observed value.
    pub fn fit(cohort: &Cohort) -> Self {
        let dynamic = (0..cohort.num_features())
            .map(|n| FeatureStats::fit(cohort.patients.iter().flat_map(|p| p.series(n)).flatten()))
            .collect();
        let baseline = (0..BASELINE_DIM)
            .map(|k| {
                (!BASELINE_BINARY[k])
                    .then(|| FeatureStats::fit(cohort.patients.iter().map(|p| p.baseline[k])))
            })
            .collect();
        Self { dynamic, baseline }
    }

    fn check(&self, cohort: &Cohort) -> Result<()> {
        if self.dynamic.len() != cohort.num_features() || self.baseline.len() != BASELINE_DIM {
            return Err(Error::Config(format!(
                "normalization stats cover {} dynamic / {} baseline features, cohort has {} / {BASELINE_DIM}",
                self.dynamic.len(),
                self.baseline.len(),
                cohort.num_features()
            )));
        }
        Ok(())
    }

    pub fn normalize_baseline(&self, baseline: &[f64; BASELINE_DIM]) -> [f64; BASELINE_DIM] {
        let mut out = *baseline;
        for (v, s) in out.iter_mut().zip(&self.baseline) {
            if let Some(s) = s {
                *v = s.normalize(*v);
            }
        }
        out
    }

    fn map_cohort(&self, cohort: &Cohort, forward: bool) -> Result<Cohort> {
        self.check(cohort)?;
        let mut out = cohort.clone();
        for p in &mut out.patients {
            for (v, s) in p.baseline.iter_mut().zip(&self.baseline) {
                if let Some(s) = s {
                    *v = if forward { s.normalize(*v) } else { s.denormalize(*v) };
                }
            }
            for visit in &mut p.visits {
                for (v, s) in visit.values.iter_mut().zip(&self.dynamic) {
                    if let Some(x) = v {
                        *x = if forward { s.normalize(*x) } else { s.denormalize(*x) };
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Replaces every dynamic and continuous baseline value `v` with
/// `(v − mean) / std`; missing markers and binary baselines are untouched.
pub fn zscore_normalize(cohort: &Cohort, stats: &NormStats) -> Result<Cohort> {
    stats.map_cohort(cohort, true)
}

pub fn denormalize(cohort: &Cohort, stats: &NormStats) -> Result<Cohort> {
    stats.map_cohort(cohort, false)
}
