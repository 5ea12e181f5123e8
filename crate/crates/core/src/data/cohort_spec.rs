//! Parameters of the synthetic cohort generator.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::record::CauseOfDeath;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Moments {
    pub const fn new(mean: f64, std: f64, median: f64) -> Self {
        Self { mean, std, median }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRange {
    pub lower: f64,
    pub upper: f64,
}

/// How a dynamic feature enters the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureRole {
    /// Tracks latent frailty: values move from the low-risk towards the
    /// high-risk moments as frailty rises. No direct hazard effect.
    Frailty,
    /// Log-hazard `strength_below·(τ − v)/σ` below τ and
    /// `−strength_above·(v − τ)/σ` above: risk falls as the value rises,
    /// with a kink at τ.
    VShape {
        turning_point: f64,
        strength_below: f64,
        strength_above: f64,
        cause: CauseOfDeath,
    },
    /// Log-hazard `strength·(τ − v)/σ` below τ, flat above.
    LShape {
        turning_point: f64,
        strength: f64,
        cause: CauseOfDeath,
    },
    /// Independent of outcome.
    Noise,
}

impl FeatureRole {
    pub fn turning_point(&self) -> Option<f64> {
        match self {
            FeatureRole::VShape { turning_point, .. } | FeatureRole::LShape { turning_point, .. } => {
                Some(*turning_point)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    /// Moments over high-risk visits.
    pub high: Moments,
    /// Moments over low-risk visits.
    pub low: Moments,
    pub missing_rate: f64,
    pub reference: Option<ReferenceRange>,
    pub role: FeatureRole,
    /// Lag-one autocorrelation of the within-patient deviation.
    #[serde(default = "default_autocorrelation")]
    pub autocorrelation: f64,
    /// Share of variance that is between patients (for planted and noise
    /// features).
    #[serde(default = "default_between_share")]
    pub between_share: f64,
}

fn default_autocorrelation() -> f64 {
    0.8
}

fn default_between_share() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub age_mean: f64,
    pub age_std: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub male_fraction: f64,
    pub height_mean: f64,
    pub height_std: f64,
    pub diabetes_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSpec {
    /// Mean days between visits (gamma distributed).
    pub mean_interval_days: f64,
    /// Gamma shape; larger means more regular follow-up.
    pub interval_shape: f64,
    pub min_interval_days: i64,
    pub study_start: NaiveDate,
    /// Enrollment is uniform over this many days from `study_start`.
    pub enrollment_days: i64,
    /// Data collection ends this many days after `study_start`.
    pub study_days: i64,
    /// Daily probability of leaving follow-up for reasons other than death.
    pub dropout_daily: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    pub base_daily: f64,
    /// Weight on the latent frailty logit.
    pub frailty_weight: f64,
    /// Log-hazard per standard deviation of age.
    pub age_weight: f64,
    pub diabetes_weight: f64,
    /// Latent health at enrollment ~ N(mean, std).
    pub health_mean: f64,
    pub health_std: f64,
    /// Expected decline in latent health per year.
    pub health_drift: f64,
    /// Random-walk volatility per square-root year.
    pub health_volatility: f64,
    /// Latent health is clamped to ±bound.
    pub health_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauseWeight {
    pub cause: CauseOfDeath,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub mortality: f64,
    pub positive_prevalence: f64,
    pub visits_per_patient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub name: String,
    pub num_patients: usize,
    pub features: Vec<FeatureSpec>,
    pub baseline: BaselineSpec,
    pub visits: VisitSpec,
    pub hazard: HazardSpec,
    /// Causes attributed to the frailty-driven part of the hazard.
    pub base_causes: Vec<CauseWeight>,
    pub targets: CalibrationTargets,
}

fn finite_positive(name: &str, v: f64, errs: &mut Vec<String>) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(format!("{name} must be positive and finite, got {v}"));
    }
}

fn unit_interval(name: &str, v: f64, errs: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&v) {
        errs.push(format!("{name} must lie in [0, 1], got {v}"));
    }
}

impl CohortSpec {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.num_patients == 0 {
            errs.push("num_patients must be at least 1".into());
        }
        if self.features.is_empty() {
            errs.push("at least one dynamic feature is required".into());
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                errs.push(format!("duplicate feature {}", f.name));
            }
            finite_positive(&format!("{}.high.std", f.name), f.high.std, &mut errs);
            finite_positive(&format!("{}.low.std", f.name), f.low.std, &mut errs);
            unit_interval(&format!("{}.missing_rate", f.name), f.missing_rate, &mut errs);
            unit_interval(&format!("{}.between_share", f.name), f.between_share, &mut errs);
            if !(0.0..1.0).contains(&f.autocorrelation) {
                errs.push(format!("{}.autocorrelation must lie in [0, 1)", f.name));
            }
            if let Some(r) = f.reference {
                if r.lower > r.upper {
                    errs.push(format!("{} reference range is inverted", f.name));
                }
            }
        }
        let b = &self.baseline;
        finite_positive("baseline.age_std", b.age_std, &mut errs);
        finite_positive("baseline.height_std", b.height_std, &mut errs);
        unit_interval("baseline.male_fraction", b.male_fraction, &mut errs);
        unit_interval("baseline.diabetes_rate", b.diabetes_rate, &mut errs);
        if b.age_min >= b.age_max {
            errs.push("baseline.age_min must be below age_max".into());
        }
        let v = &self.visits;
        finite_positive("visits.mean_interval_days", v.mean_interval_days, &mut errs);
        finite_positive("visits.interval_shape", v.interval_shape, &mut errs);
        if v.min_interval_days < 1 {
            errs.push("visits.min_interval_days must be at least 1".into());
        }
        if v.enrollment_days < 0 || v.study_days <= v.enrollment_days {
            errs.push("visits.study_days must exceed enrollment_days ≥ 0".into());
        }
        unit_interval("visits.dropout_daily", v.dropout_daily, &mut errs);
        let h = &self.hazard;
        if !(h.base_daily.is_finite() && h.base_daily >= 0.0) {
            errs.push("hazard.base_daily must be non-negative".into());
        }
        finite_positive("hazard.health_bound", h.health_bound, &mut errs);
        if h.health_std < 0.0 || h.health_volatility < 0.0 {
            errs.push("hazard spreads must be non-negative".into());
        }
        if self.base_causes.is_empty() || self.base_causes.iter().any(|c| c.weight.is_nan() || c.weight < 0.0) {
            errs.push("base_causes must be non-empty with non-negative weights".into());
        } else if self.base_causes.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
            errs.push("base_causes weights must not all be zero".into());
        }
        let t = &self.targets;
        unit_interval("targets.mortality", t.mortality, &mut errs);
        unit_interval("targets.positive_prevalence", t.positive_prevalence, &mut errs);
        if t.mortality > 0.0 && t.positive_prevalence <= 0.0 {
            errs.push("targets: mortality requires a positive high-risk visit prevalence".into());
        }
        if t.positive_prevalence > 0.0 && t.mortality <= 0.0 {
            errs.push("targets: high-risk visits require mortality".into());
        }
        let planted_hazard = self
            .features
            .iter()
            .any(|f| matches!(f.role, FeatureRole::VShape { .. } | FeatureRole::LShape { .. }));
        if t.mortality > 0.0 && h.base_daily == 0.0 && !planted_hazard {
            errs.push("targets: mortality required but every hazard term is zero".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid cohort spec: {}", errs.join("; "))))
        }
    }

    /// Peritoneal-dialysis-like cohort: 16 dynamic features with
    /// label-conditional moments, missing rates and outpatient reference
    /// ranges of a 656-patient PD cohort. Albumin is planted as a V-shaped
    /// risk factor at 32 g/L, SBP as an L-shaped one at 130 mmHg and WBC is
    /// pure noise.
    pub fn pd_default() -> Self {
        use FeatureRole::*;
        let f = |name: &str,
                 unit: &str,
                 high: (f64, f64, f64),
                 low: (f64, f64, f64),
                 missing: f64,
                 reference: Option<(f64, f64)>,
                 role: FeatureRole| FeatureSpec {
            name: name.into(),
            unit: unit.into(),
            high: Moments::new(high.0, high.1, high.2),
            low: Moments::new(low.0, low.1, low.2),
            missing_rate: missing,
            reference: reference.map(|(lower, upper)| ReferenceRange { lower, upper }),
            role,
            autocorrelation: default_autocorrelation(),
            between_share: default_between_share(),
        };
        let features = vec![
            f("Albumin", "g/L", (33.81, 4.437, 34.3), (37.87, 4.337, 38.0), 0.25, Some((40.0, 55.0)),
                VShape { turning_point: 32.0, strength_below: 1.2, strength_above: 0.4, cause: CauseOfDeath::Cachexia }),
            f("DBP", "mmHg", (70.28, 14.71, 70.0), (78.59, 13.79, 80.0), 0.18, Some((60.0, 80.0)), Frailty),
            f("SBP", "mmHg", (125.3, 25.19, 127.0), (134.4, 21.61, 135.0), 0.14, Some((100.0, 120.0)),
                LShape { turning_point: 130.0, strength: 0.8, cause: CauseOfDeath::Cvd }),
            f("Cl", "mmol/L", (96.02, 4.155, 96.0), (98.21, 4.923, 98.0), 0.17, Some((96.0, 106.0)), Frailty),
            f("Cr", "umol/L", (779.6, 250.3, 741.0), (868.9, 270.3, 853.0), 0.10, Some((62.0, 115.0)), Frailty),
            f("Urea", "mmol/L", (18.12, 5.545, 17.8), (20.09, 5.363, 19.8), 0.11, Some((3.1, 9.0)), Frailty),
            f("Ca", "mmol/L", (2.358, 0.277, 2.345), (2.406, 0.341, 2.39), 0.12, Some((2.25, 2.75)), Frailty),
            f("Na", "mmol/L", (137.1, 4.262, 137.9), (138.5, 4.617, 139.0), 0.21, Some((135.0, 145.0)), Frailty),
            f("K", "mmol/L", (4.240, 0.783, 4.17), (4.320, 0.718, 4.25), 0.11, Some((3.5, 5.5)), Frailty),
            f("P", "mmol/L", (1.549, 0.450, 1.5), (1.606, 0.430, 1.57), 0.13, Some((1.1, 1.3)), Frailty),
            f("CO2CP", "mmol/L", (27.45, 3.562, 27.5), (27.38, 3.630, 27.4), 0.08, Some((20.0, 29.0)), Frailty),
            f("Hb", "g/L", (111.4, 19.54, 113.0), (114.6, 17.05, 115.0), 0.12, Some((115.0, 150.0)), Frailty),
            f("Weight", "kg", (59.98, 11.05, 59.59), (62.26, 11.07, 62.0), 0.41, None, Frailty),
            f("Glucose", "mmol/L", (7.758, 3.665, 6.7), (6.689, 3.089, 5.7), 0.30, Some((3.9, 6.1)), Frailty),
            f("hs-CRP", "mg/L", (17.57, 28.07, 8.49), (7.954, 13.96, 3.19), 0.29, Some((0.5, 10.0)), Frailty),
            f("WBC", "x10^9/L", (8.238, 2.767, 7.895), (7.773, 2.754, 7.43), 0.10, Some((3.5, 9.5)), Noise),
        ];
        Self {
            name: "pd-default".into(),
            num_patients: 656,
            features,
            baseline: BaselineSpec {
                age_mean: 58.55,
                age_std: 15.81,
                age_min: 16.79,
                age_max: 97.45,
                male_fraction: 0.502,
                height_mean: 1.633,
                height_std: 0.106,
                diabetes_rate: 0.372,
            },
            visits: VisitSpec {
                mean_interval_days: 83.0,
                interval_shape: 3.0,
                min_interval_days: 7,
                study_start: NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid date"),
                enrollment_days: 3650,
                study_days: 4383,
                dropout_daily: 1.0e-4,
            },
            hazard: HazardSpec {
                base_daily: 2.6e-4,
                frailty_weight: 1.0,
                age_weight: 0.6,
                diabetes_weight: 0.3,
                health_mean: 1.0,
                health_std: 1.0,
                health_drift: 0.25,
                health_volatility: 0.4,
                health_bound: 3.0,
            },
            base_causes: pd_cause_mix(),
            targets: CalibrationTargets {
                mortality: 0.398,
                positive_prevalence: 0.091,
                visits_per_patient: 19.95,
            },
        }
    }

    /// Small four-feature cohort with a strong planted V-feature, L-feature
    /// and a noise feature centred on their turning points. Sized for fast
    /// end-to-end runs.
    pub fn planted_demo() -> Self {
        use FeatureRole::*;
        let planted = |name: &str, unit: &str, mean: f64, std: f64, reference: Option<(f64, f64)>, role| FeatureSpec {
            name: name.into(),
            unit: unit.into(),
            high: Moments::new(mean, std, mean),
            low: Moments::new(mean, std, mean),
            missing_rate: 0.1,
            reference: reference.map(|(lower, upper)| ReferenceRange { lower, upper }),
            role,
            autocorrelation: 0.8,
            between_share: 0.6,
        };
        let mut spec = Self::pd_default();
        spec.name = "planted-demo".into();
        spec.num_patients = 400;
        spec.features = vec![
            planted("Albumin", "g/L", 34.0, 5.0, Some((40.0, 55.0)),
                VShape { turning_point: 34.0, strength_below: 2.5, strength_above: 1.5, cause: CauseOfDeath::Cachexia }),
            planted("SBP", "mmHg", 130.0, 22.0, Some((100.0, 120.0)),
                LShape { turning_point: 130.0, strength: 2.5, cause: CauseOfDeath::Cvd }),
            planted("WBC", "x10^9/L", 7.8, 2.7, Some((3.5, 9.5)), Noise),
            spec.features[11].clone(),
        ];
        spec.hazard.base_daily = 1.0e-4;
        spec.hazard.frailty_weight = 0.3;
        spec
    }
}

fn pd_cause_mix() -> Vec<CauseWeight> {
    [
        (CauseOfDeath::Cve, 0.2),
        (CauseOfDeath::Cvd, 0.2),
        (CauseOfDeath::Infection, 0.15),
        (CauseOfDeath::Gi, 0.05),
        (CauseOfDeath::Pdap, 0.08),
        (CauseOfDeath::Cancer, 0.06),
        (CauseOfDeath::Other, 0.12),
        (CauseOfDeath::Pvd, 0.04),
        (CauseOfDeath::Cachexia, 0.1),
    ]
    .into_iter()
    .map(|(cause, weight)| CauseWeight { cause, weight })
    .collect()
}
