//! Training-split preprocessing: imputation, normalization and labelling.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::impute::{feature_medians, forward_fill, forward_fill_cohort};
use super::labels::{assign_labels, LabelConfig, VisitLabel};
use super::normalize::NormStats;
use super::record::{Cohort, OutcomeGroup, PatientRecord, BASELINE_DIM};
use crate::error::{Error, Result};

/// Model-ready view of one patient: normalized baseline and one normalized
/// series per dynamic feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub baseline: [f64; BASELINE_DIM],
    /// `series[n][t]`.
    pub series: Vec<Vec<f64>>,
}

impl ModelInput {
    pub fn num_features(&self) -> usize {
        self.series.len()
    }

    pub fn num_visits(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }
}

/// A patient prepared for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub patient_id: String,
    pub input: ModelInput,
    pub labels: Vec<VisitLabel>,
    pub group: OutcomeGroup,
    /// Imputed values in original units, `raw[n][t]`.
    pub raw: Vec<Vec<f64>>,
    pub dates: Vec<NaiveDate>,
}

impl Sample {
    pub fn num_labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_labeled()).count()
    }
}

/// Imputation fallbacks and normalization statistics fitted on one training
/// split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub feature_names: Vec<String>,
    /// Per-feature training medians used for leading gaps.
    pub fallback: Vec<f64>,
    pub stats: NormStats,
}

impl Preprocessor {
    /// Medians come from observed training values; normalization statistics
    /// from the imputed training split.
    pub fn fit(train: &Cohort) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("cannot fit preprocessing on an empty split".into()));
        }
        let fallback = feature_medians(train);
        let imputed = forward_fill_cohort(train, &fallback)?;
        Ok(Self {
            feature_names: train.feature_names.clone(),
            fallback,
            stats: NormStats::fit(&imputed),
        })
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check(&self, record: &PatientRecord) -> Result<()> {
        if let Some(v) = record
            .visits
            .iter()
            .find(|v| v.values.len() != self.num_features())
        {
            return Err(Error::Schema(vec![format!(
                "visit {} of patient {} has {} feature values, model expects {}",
                v.date,
                record.patient_id,
                v.values.len(),
                self.num_features()
            )]));
        }
        if record.visits.is_empty() {
            return Err(Error::Domain(format!("patient {} has no visits", record.patient_id)));
        }
        Ok(())
    }

    /// Imputed raw series and the normalized model input.
    pub fn encode(&self, record: &PatientRecord) -> Result<(ModelInput, Vec<Vec<f64>>)> {
        self.check(record)?;
        let filled = forward_fill(record, &self.fallback)?;
        let raw: Vec<Vec<f64>> = (0..self.num_features())
            .map(|n| filled.series(n).map(|v| v.unwrap_or(self.fallback[n])).collect())
            .collect();
        let series = raw
            .iter()
            .zip(&self.stats.dynamic)
            .map(|(s, st)| s.iter().map(|v| st.normalize(*v)).collect())
            .collect();
        Ok((
            ModelInput {
                baseline: self.stats.normalize_baseline(&record.baseline),
                series,
            },
            raw,
        ))
    }

    pub fn sample(&self, record: &PatientRecord, labels: &LabelConfig, data_end: NaiveDate) -> Result<Sample> {
        let (input, raw) = self.encode(record)?;
        Ok(Sample {
            patient_id: record.patient_id.clone(),
            input,
            labels: assign_labels(record, labels, data_end)?,
            group: record.outcome.group(),
            raw,
            dates: record.visits.iter().map(|v| v.date).collect(),
        })
    }

    pub fn samples(&self, cohort: &Cohort, labels: &LabelConfig, data_end: NaiveDate) -> Result<Vec<Sample>> {
        cohort
            .patients
            .iter()
            .map(|p| self.sample(p, labels, data_end))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{Outcome, Visit};
    use chrono::Days;

    fn cohort() -> Cohort {
        let start = NaiveDate::from_ymd_opt(2012, 1, 1).unwrap();
        let mk = |id: &str, vals: &[[Option<f64>; 2]]| PatientRecord {
            patient_id: id.into(),
            baseline: [60.0, 1.0, 1.7, 0.0],
            visits: vals
                .iter()
                .enumerate()
                .map(|(t, v)| Visit { date: start + Days::new(90 * t as u64), values: v.to_vec() })
                .collect(),
            outcome: Outcome::Alive,
        };
        Cohort::new(
            vec!["a".into(), "b".into()],
            vec![
                mk("x", &[[None, Some(1.0)], [Some(4.0), None]]),
                mk("y", &[[Some(2.0), Some(3.0)], [Some(6.0), Some(5.0)]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn encode_imputes_then_normalizes() {
        let c = cohort();
        let prep = Preprocessor::fit(&c).unwrap();
        assert_eq!(prep.fallback, vec![4.0, 3.0]);
        let (input, raw) = prep.encode(&c.patients[0]).unwrap();
        assert_eq!(raw, vec![vec![4.0, 4.0], vec![1.0, 1.0]]);
        let st = prep.stats.dynamic[0];
        assert_eq!(input.series[0][0], st.normalize(4.0));
        assert_eq!(input.num_visits(), 2);
    }

    #[test]
    fn feature_count_mismatch_is_schema_error() {
        let c = cohort();
        let prep = Preprocessor::fit(&c).unwrap();
        let mut rec = c.patients[0].clone();
        rec.visits[0].values.push(None);
        assert!(matches!(prep.encode(&rec), Err(Error::Schema(_))));
    }
}
