//! One-year mortality labels with an uncertain phase.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::record::{Outcome, PatientRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitLabel {
    Low,
    High,
    Uncertain,
}

impl VisitLabel {
    /// Training target, or `None` for visits excluded from loss and metrics.
    pub fn target(self) -> Option<f64> {
        match self {
            VisitLabel::Low => Some(0.0),
            VisitLabel::High => Some(1.0),
            VisitLabel::Uncertain => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != VisitLabel::Uncertain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub horizon_days: i64,
    pub uncertain_days: i64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            horizon_days: 365,
            uncertain_days: 365,
        }
    }
}

/// Labels every visit of `record`.
///
/// Deaths: `High` when the death falls within `horizon_days` of the visit
/// (inclusive), `Uncertain` within the following `uncertain_days`
/// (inclusive), `Low` before that. Survivors: `Uncertain` when the visit is
/// within `uncertain_days` of `data_end`, `Low` otherwise.
pub fn assign_labels(
    record: &PatientRecord,
    config: &LabelConfig,
    data_end: NaiveDate,
) -> Result<Vec<VisitLabel>> {
    record
        .visits
        .iter()
        .map(|visit| match record.outcome {
            Outcome::Died { date, .. } => {
                let gap = (date - visit.date).num_days();
                if gap < 0 {
                    Err(Error::Integrity(format!(
                        "patient {} has a visit on {} after death on {date}",
                        record.patient_id, visit.date
                    )))
                } else if gap <= config.horizon_days {
                    Ok(VisitLabel::High)
                } else if gap <= config.horizon_days + config.uncertain_days {
                    Ok(VisitLabel::Uncertain)
                } else {
                    Ok(VisitLabel::Low)
                }
            }
            Outcome::Alive => {
                let gap = (data_end - visit.date).num_days();
                Ok(if gap <= config.uncertain_days {
                    VisitLabel::Uncertain
                } else {
                    VisitLabel::Low
                })
            }
        })
        .collect()
}
