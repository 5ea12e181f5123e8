//! Synthetic longitudinal cohorts with planted risk structure.
//!
//! Each patient carries a latent health level that follows a bounded
//! random walk between visits. Frailty `φ = σ(−H)` pulls frailty-driven
//! features from their low-risk towards their high-risk moments and raises
//! the death hazard. Planted V/L features follow an AR(1) around a personal
//! mean and add piecewise-linear terms to the log-hazard, so their turning
//! points are known exactly. Death is simulated as a piecewise-constant
//! hazard between visits; the cause is attributed in proportion to each
//! hazard component.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cohort_spec::{CohortSpec, FeatureRole, FeatureSpec, HazardSpec};
use super::record::{CauseOfDeath, Cohort, Outcome, PatientRecord, Visit};
use crate::error::{Error, Result};
use crate::numerics::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub feature: String,
    pub unit: String,
    /// `"V"` or `"L"`.
    pub shape: String,
    pub turning_point: f64,
    pub cause: CauseOfDeath,
    /// Log-hazard slope per standard deviation below the turning point.
    pub strength_below: f64,
    /// Log-hazard slope per standard deviation above (negative: protective).
    pub strength_above: f64,
}

/// Generator parameters needed to score recovered structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec_name: String,
    pub seed: u64,
    pub planted: Vec<PlantedFeature>,
    pub noise_features: Vec<String>,
    pub hazard: HazardSpec,
    pub data_end: Option<NaiveDate>,
}

impl GroundTruth {
    pub fn planted(&self, shape: &str) -> Option<&PlantedFeature> {
        self.planted.iter().find(|p| p.shape == shape)
    }
}

/// Per-feature sampling state for one patient.
struct Track {
    personal: f64,
    deviation: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Log-normal parameters when the moments indicate right skew.
fn log_params(mean: f64, median: f64) -> Option<(f64, f64)> {
    (median > 0.0 && mean > median * 1.25).then(|| (median.ln(), (2.0 * (mean / median).ln()).sqrt()))
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn hazard_term(spec: &FeatureSpec, v: f64) -> f64 {
    let sigma = spec.low.std;
    match spec.role {
        FeatureRole::VShape { turning_point, strength_below, strength_above, .. } => {
            if v < turning_point {
                strength_below * (turning_point - v) / sigma
            } else {
                -strength_above * (v - turning_point) / sigma
            }
        }
        FeatureRole::LShape { turning_point, strength, .. } => {
            strength * (turning_point - v).max(0.0) / sigma
        }
        FeatureRole::Frailty | FeatureRole::Noise => 0.0,
    }
}

fn planted_cause(spec: &FeatureSpec) -> Option<CauseOfDeath> {
    match spec.role {
        FeatureRole::VShape { cause, .. } | FeatureRole::LShape { cause, .. } => Some(cause),
        _ => None,
    }
}

struct Generator<'a> {
    spec: &'a CohortSpec,
    rng: ChaCha8Rng,
    interval: Gamma<f64>,
}

impl<'a> Generator<'a> {
    fn feature_value(&mut self, f: &FeatureSpec, track: &Track, frailty: f64) -> f64 {
        let v = match f.role {
            FeatureRole::Frailty => match (log_params(f.low.mean, f.low.median), log_params(f.high.mean, f.high.median)) {
                (Some((mu_lo, s_lo)), Some((mu_hi, s_hi))) => {
                    let mu = mu_lo + (mu_hi - mu_lo) * frailty;
                    let s = s_lo + (s_hi - s_lo) * frailty;
                    (mu + s * (track.personal + track.deviation)).exp()
                }
                _ => {
                    let mean = f.low.mean + (f.high.mean - f.low.mean) * frailty;
                    let std = f.low.std + (f.high.std - f.low.std) * frailty;
                    mean + std * (track.personal + track.deviation)
                }
            },
            _ => f.low.mean + f.low.std * (track.personal + track.deviation),
        };
        v.max(0.0)
    }

    fn next_interval(&mut self) -> i64 {
        let days = self.interval.sample(&mut self.rng).round() as i64;
        days.max(self.spec.visits.min_interval_days)
    }

    fn patient(&mut self, index: usize) -> Result<PatientRecord> {
        let spec = self.spec;
        let b = &spec.baseline;
        let h = &spec.hazard;
        let age = (b.age_mean + b.age_std * normal(&mut self.rng)).clamp(b.age_min, b.age_max);
        let male = f64::from(u8::from(self.rng.random_bool(b.male_fraction)));
        let height = b.height_mean + b.height_std * normal(&mut self.rng);
        let diabetes = f64::from(u8::from(self.rng.random_bool(b.diabetes_rate)));
        let baseline = [round3(age), male, round3(height), diabetes];

        let mut health = (h.health_mean + h.health_std * normal(&mut self.rng))
            .clamp(-h.health_bound, h.health_bound);
        let static_log_hazard =
            h.age_weight * (age - b.age_mean) / b.age_std + h.diabetes_weight * diabetes;
        let mut tracks: Vec<Track> = spec
            .features
            .iter()
            .map(|f| Track {
                personal: f.between_share.sqrt() * normal(&mut self.rng),
                deviation: (1.0 - f.between_share).sqrt() * normal(&mut self.rng),
            })
            .collect();

        let start = spec.visits.study_start;
        let mut day = self.rng.random_range(0..=spec.visits.enrollment_days);
        let mut visits = Vec::new();
        let mut outcome = Outcome::Alive;
        loop {
            let frailty = sigmoid(-health);
            let mut values = Vec::with_capacity(spec.features.len());
            let mut planted_terms = Vec::new();
            for (f, track) in spec.features.iter().zip(&tracks) {
                let v = self.feature_value(f, track, frailty);
                if let Some(cause) = planted_cause(f) {
                    planted_terms.push((cause, hazard_term(f, v)));
                }
                let observed = !self.rng.random_bool(f.missing_rate);
                values.push(observed.then_some(round3(v)));
            }
            visits.push(Visit { date: date_at(start, day)?, values });

            let base_log = h.base_daily.ln() + h.frailty_weight * (-health) + static_log_hazard;
            let planted_sum: f64 = planted_terms.iter().map(|(_, g)| g).sum();
            let hazard = if h.base_daily > 0.0 { (base_log + planted_sum).exp() } else { 0.0 };
            let gap = self.next_interval();
            let wait: f64 = self.rng.sample::<f64, _>(Exp1) / hazard;
            if wait < gap as f64 && day + (wait as i64) <= spec.visits.study_days {
                let cause = self.draw_cause(&planted_terms);
                outcome = Outcome::Died { date: date_at(start, day + wait as i64)?, cause: Some(cause) };
                break;
            }
            let stay = (1.0 - spec.visits.dropout_daily).powf(gap as f64);
            if !self.rng.random_bool(stay.clamp(0.0, 1.0)) {
                break;
            }
            day += gap;
            if day > spec.visits.study_days {
                break;
            }
            let years = gap as f64 / 365.0;
            health = (health - h.health_drift * years + h.health_volatility * years.sqrt() * normal(&mut self.rng))
                .clamp(-h.health_bound, h.health_bound);
            for (f, track) in spec.features.iter().zip(tracks.iter_mut()) {
                let rho = f.autocorrelation;
                let within = (1.0 - f.between_share).sqrt();
                track.deviation =
                    rho * track.deviation + (1.0 - rho * rho).sqrt() * within * normal(&mut self.rng);
            }
        }
        Ok(PatientRecord {
            patient_id: format!("P{:05}", index + 1),
            baseline,
            visits,
            outcome,
        })
    }

    /// Base causes share weight 1; each planted feature contributes its
    /// excess relative hazard `exp(g) − 1` when positive.
    fn draw_cause(&mut self, planted: &[(CauseOfDeath, f64)]) -> CauseOfDeath {
        let excess: Vec<f64> = planted.iter().map(|(_, g)| (g.exp() - 1.0).max(0.0)).collect();
        let total = 1.0 + excess.iter().sum::<f64>();
        let mut u = self.rng.random::<f64>() * total;
        for ((cause, _), e) in planted.iter().zip(&excess) {
            if u < *e {
                return *cause;
            }
            u -= e;
        }
        let weights = &self.spec.base_causes;
        let wsum: f64 = weights.iter().map(|c| c.weight).sum();
        let mut u = self.rng.random::<f64>() * wsum;
        for c in weights {
            if u < c.weight {
                return c.cause;
            }
            u -= c.weight;
        }
        weights[weights.len() - 1].cause
    }
}

fn date_at(start: NaiveDate, day: i64) -> Result<NaiveDate> {
    start
        .checked_add_days(Days::new(day as u64))
        .ok_or_else(|| Error::Config(format!("study day {day} overflows the calendar")))
}

/// Draws a cohort from `spec`. Identical `(spec, seed)` pairs give identical
/// cohorts.
pub fn generate_synthetic(spec: &CohortSpec, seed: u64) -> Result<(Cohort, GroundTruth)> {
    spec.validate()?;
    let interval = Gamma::new(
        spec.visits.interval_shape,
        spec.visits.mean_interval_days / spec.visits.interval_shape,
    )
    .map_err(|e| Error::Config(format!("visit interval distribution: {e}")))?;
    let mut gen = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(seed),
        interval,
    };
    let patients = (0..spec.num_patients)
        .map(|i| gen.patient(i))
        .collect::<Result<Vec<_>>>()?;
    let cohort = Cohort::new(spec.feature_names(), patients)?;
    let planted = spec
        .features
        .iter()
        .filter_map(|f| match f.role {
            FeatureRole::VShape { turning_point, strength_below, strength_above, cause } => Some(PlantedFeature {
                feature: f.name.clone(),
                unit: f.unit.clone(),
                shape: "V".into(),
                turning_point,
                cause,
                strength_below,
                strength_above: -strength_above,
            }),
            FeatureRole::LShape { turning_point, strength, cause } => Some(PlantedFeature {
                feature: f.name.clone(),
                unit: f.unit.clone(),
                shape: "L".into(),
                turning_point,
                cause,
                strength_below: strength,
                strength_above: 0.0,
            }),
            _ => None,
        })
        .collect();
    let truth = GroundTruth {
        spec_name: spec.name.clone(),
        seed,
        planted,
        noise_features: spec
            .features
            .iter()
            .filter(|f| f.role == FeatureRole::Noise)
            .map(|f| f.name.clone())
            .collect(),
        hazard: spec.hazard.clone(),
        data_end: cohort.data_end_date(),
    };
    Ok((cohort, truth))
}

/// Two-feature cohort whose first feature, `marker`, equals 1 exactly at
/// visits within a year of death and 0 elsewhere; `noise` carries no signal.
/// Half the patients die.
pub fn separable_cohort(num_patients: usize, seed: u64) -> Result<Cohort> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let horizon = super::labels::LabelConfig::default().horizon_days;
    let mut patients = Vec::with_capacity(num_patients);
    for i in 0..num_patients {
        let visits_n = rng.random_range(4..=12usize);
        let first = rng.random_range(0..200i64);
        let days: Vec<i64> = (0..visits_n as i64).map(|t| first + 90 * t).collect();
        let died = i % 2 == 0;
        let death_day = days[visits_n - 1] + rng.random_range(10..300i64);
        let mut visits = Vec::with_capacity(visits_n);
        for &d in &days {
            let marker = if died && death_day - d <= horizon { 1.0 } else { 0.0 };
            let noise = round3(normal(&mut rng));
            visits.push(Visit { date: date_at(start, d)?, values: vec![Some(marker), Some(noise)] });
        }
        let baseline = [
            round3(60.0 + 10.0 * normal(&mut rng)),
            f64::from(u8::from(rng.random_bool(0.5))),
            round3(1.65 + 0.1 * normal(&mut rng)),
            f64::from(u8::from(rng.random_bool(0.3))),
        ];
        let outcome = if died {
            Outcome::Died { date: date_at(start, death_day)?, cause: Some(CauseOfDeath::Other) }
        } else {
            Outcome::Alive
        };
        patients.push(PatientRecord { patient_id: format!("S{:05}", i + 1), baseline, visits, outcome });
    }
    Cohort::new(vec!["marker".into(), "noise".into()], patients)
}

/// Summary statistics used to check a spec against its calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub patients: usize,
    pub visits: usize,
    pub mortality: f64,
    pub visits_per_patient: f64,
    /// High-risk visits over all visits.
    pub positive_prevalence: f64,
    pub uncertain_fraction: f64,
    pub mean_interval_days: f64,
}

pub fn cohort_stats(cohort: &Cohort, labels: &super::labels::LabelConfig) -> Result<CohortStats> {
    use super::labels::{assign_labels, VisitLabel};
    let data_end = cohort
        .data_end_date()
        .ok_or_else(|| Error::InsufficientData("cohort has no visits".into()))?;
    let (mut high, mut uncertain, mut deaths) = (0usize, 0usize, 0usize);
    let (mut gaps, mut gap_days) = (0usize, 0i64);
    for p in &cohort.patients {
        if matches!(p.outcome, Outcome::Died { .. }) {
            deaths += 1;
        }
        for l in assign_labels(p, labels, data_end)? {
            match l {
                VisitLabel::High => high += 1,
                VisitLabel::Uncertain => uncertain += 1,
                VisitLabel::Low => {}
            }
        }
        for w in p.visits.windows(2) {
            gaps += 1;
            gap_days += (w[1].date - w[0].date).num_days();
        }
    }
    let visits = cohort.num_visits();
    let n = cohort.len();
    Ok(CohortStats {
        patients: n,
        visits,
        mortality: deaths as f64 / n as f64,
        visits_per_patient: visits as f64 / n as f64,
        positive_prevalence: high as f64 / visits as f64,
        uncertain_fraction: uncertain as f64 / visits as f64,
        mean_interval_days: if gaps > 0 { gap_days as f64 / gaps as f64 } else { 0.0 },
    })
}
