//! Immutable snapshot loaded before serving: cohort, model and exports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use aicare::data::{anonymize_dates, read_cohort_dir, Cohort, Outcome, BASELINE_NAMES};
use aicare::model::{Checkpoint, Predictor, VisitPrediction};
use aicare::{Error, Result};

use crate::config::ServiceConfig;

pub const CURVES_FILE: &str = "curves.json";
pub const HEATMAP_FILE: &str = "heatmap.json";

#[derive(Debug, Clone, Serialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub outcome_group: Option<String>,
    pub visits: usize,
    pub latest_risk: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryVisit {
    pub date: chrono::NaiveDate,
    pub values: Vec<Option<f64>>,
    pub risk: f64,
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryResponse {
    pub patient_id: String,
    pub features: Vec<String>,
    pub baseline: BTreeMap<&'static str, f64>,
    pub visits: Vec<TrajectoryVisit>,
    /// `None` unless outcome disclosure is enabled.
    pub outcome: Option<Outcome>,
}

#[derive(Debug)]
pub struct AppState {
    pub checkpoint_id: String,
    pub predictor: Predictor,
    pub patients: Vec<PatientSummary>,
    /// Serialized trajectories keyed by patient id.
    pub trajectories: BTreeMap<String, Vec<u8>>,
    /// Serialized `{curves, heatmap}` when exports were found.
    pub statistics: Option<Vec<u8>>,
    pub bearer_token: Option<String>,
}

/// Short content hash of the checkpoint JSON.
pub fn checkpoint_id(json: &str) -> String {
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Rejects non-finite risks and attention vectors off the simplex.
pub fn check_prediction(p: &VisitPrediction) -> Result<()> {
    let sum: f64 = p.attention.iter().sum();
    if !p.risk.is_finite() || p.attention.iter().any(|a| !a.is_finite() || *a < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!("invalid prediction: risk {} attention sum {sum}", p.risk)));
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl AppState {
    pub fn load(config: &ServiceConfig) -> Result<Self> {
        let text = std::fs::read_to_string(&config.checkpoint).map_err(|e| Error::io(&config.checkpoint, e))?;
        let checkpoint = Checkpoint::from_json(&text)?;
        let cohort = read_cohort_dir(&config.cohort_dir, Some(&checkpoint.preprocessing.feature_names))?;
        let statistics = match &config.exports_dir {
            Some(dir) if dir.join(CURVES_FILE).is_file() && dir.join(HEATMAP_FILE).is_file() => {
                Some((read_json(&dir.join(CURVES_FILE))?, read_json(&dir.join(HEATMAP_FILE))?))
            }
            _ => None,
        };
        Self::build(&cohort, &checkpoint, checkpoint_id(&text), statistics, config)
    }

    pub fn build(
        cohort: &Cohort,
        checkpoint: &Checkpoint,
        checkpoint_id: String,
        statistics: Option<(serde_json::Value, serde_json::Value)>,
        config: &ServiceConfig,
    ) -> Result<Self> {
        let predictor = Predictor::new(checkpoint)?;
        if predictor.feature_names() != cohort.feature_names.as_slice() {
            return Err(Error::Config(format!(
                "checkpoint features {:?} do not match cohort features {:?}",
                predictor.feature_names(),
                cohort.feature_names
            )));
        }
        let mut records: Vec<_> = cohort.patients.iter().collect();
        records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

        let mut patients = Vec::with_capacity(records.len());
        let mut trajectories = BTreeMap::new();
        for record in records {
            let preds = predictor.predict_record(record)?;
            preds.iter().try_for_each(check_prediction)?;
            let shown = if config.anonymize_dates { anonymize_dates(record)? } else { record.clone() };
            let response = TrajectoryResponse {
                patient_id: record.patient_id.clone(),
                features: cohort.feature_names.clone(),
                baseline: BASELINE_NAMES.iter().copied().zip(record.baseline).collect(),
                visits: shown
                    .visits
                    .iter()
                    .zip(&preds)
                    .map(|(v, p)| TrajectoryVisit {
                        date: v.date,
                        values: v.values.clone(),
                        risk: p.risk,
                        attention: p.attention.clone(),
                    })
                    .collect(),
                outcome: config.disclose_outcomes.then_some(shown.outcome),
            };
            patients.push(PatientSummary {
                patient_id: record.patient_id.clone(),
                outcome_group: config.disclose_outcomes.then(|| record.outcome.group().label().to_string()),
                visits: record.visits.len(),
                latest_risk: preds.last().map_or(f64::NAN, |p| p.risk),
            });
            trajectories.insert(record.patient_id.clone(), serde_json::to_vec(&response)?);
        }
        let statistics = statistics
            .map(|(curves, heatmap)| serde_json::to_vec(&serde_json::json!({ "curves": curves, "heatmap": heatmap })))
            .transpose()?;
        Ok(Self {
            checkpoint_id,
            predictor,
            patients,
            trajectories,
            statistics,
            bearer_token: config.bearer_token.clone(),
        })
    }
}
