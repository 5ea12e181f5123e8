use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age, gender, height (or BMI), diabetes.
pub const BASELINE_DIM: usize = 4;
pub const BASELINE_NAMES: [&str; BASELINE_DIM] = ["age", "gender", "height", "diabetes"];
/// Baseline columns holding 0/1 indicators; these are never rescaled.
pub const BASELINE_BINARY: [bool; BASELINE_DIM] = [false, true, false, true];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CauseOfDeath {
    #[serde(rename = "CVE")]
    Cve,
    #[serde(rename = "CVD")]
    Cvd,
    #[serde(rename = "GI")]
    Gi,
    #[serde(rename = "PDAP")]
    Pdap,
    Cancer,
    Other,
    Infection,
    #[serde(rename = "PVD")]
    Pvd,
    Cachexia,
}

impl CauseOfDeath {
    pub const ALL: [CauseOfDeath; 9] = [
        CauseOfDeath::Cve,
        CauseOfDeath::Cvd,
        CauseOfDeath::Gi,
        CauseOfDeath::Pdap,
        CauseOfDeath::Cancer,
        CauseOfDeath::Other,
        CauseOfDeath::Infection,
        CauseOfDeath::Pvd,
        CauseOfDeath::Cachexia,
    ];

    pub fn code(self) -> &'static str {
        match self {
            CauseOfDeath::Cve => "CVE",
            CauseOfDeath::Cvd => "CVD",
            CauseOfDeath::Gi => "GI",
            CauseOfDeath::Pdap => "PDAP",
            CauseOfDeath::Cancer => "Cancer",
            CauseOfDeath::Other => "Other",
            CauseOfDeath::Infection => "Infection",
            CauseOfDeath::Pvd => "PVD",
            CauseOfDeath::Cachexia => "Cachexia",
        }
    }
}

impl fmt::Display for CauseOfDeath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CauseOfDeath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CauseOfDeath::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown cause-of-death code {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Alive,
    Died {
        date: NaiveDate,
        cause: Option<CauseOfDeath>,
    },
}

impl Outcome {
    pub fn group(&self) -> OutcomeGroup {
        match self {
            Outcome::Alive => OutcomeGroup::Alive,
            Outcome::Died { cause, .. } => OutcomeGroup::Died(*cause),
        }
    }
}

/// Heatmap/report row key: survivors, or deaths by cause (possibly unknown).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeGroup {
    Alive,
    Died(Option<CauseOfDeath>),
}

impl OutcomeGroup {
    pub fn label(&self) -> &'static str {
        match self {
            OutcomeGroup::Alive => "Alive",
            OutcomeGroup::Died(Some(c)) => c.code(),
            OutcomeGroup::Died(None) => "Unknown",
        }
    }
}

impl fmt::Display for OutcomeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub date: NaiveDate,
    /// One entry per dynamic feature; `None` marks a missing measurement.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub baseline: [f64; BASELINE_DIM],
    pub visits: Vec<Visit>,
    pub outcome: Outcome,
}

impl PatientRecord {
    pub fn num_visits(&self) -> usize {
        self.visits.len()
    }

    /// Values of feature `n` across visits.
    pub fn series(&self, n: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.visits.iter().map(move |v| v.values[n])
    }

    pub fn last_visit_date(&self) -> Option<NaiveDate> {
        self.visits.last().map(|v| v.date)
    }

    /// Checks date ordering, feature width and death-after-visits.
    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.visits.is_empty() {
            return Err(Error::Integrity(format!(
                "patient {} has no visits",
                self.patient_id
            )));
        }
        for v in &self.visits {
            if v.values.len() != num_features {
                return Err(Error::Integrity(format!(
                    "patient {} visit {} has {} values, expected {num_features}",
                    self.patient_id,
                    v.date,
                    v.values.len()
                )));
            }
            if v.values.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Integrity(format!(
                    "patient {} visit {} has a non-finite value",
                    self.patient_id, v.date
                )));
            }
        }
        for pair in self.visits.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(Error::Integrity(format!(
                    "visit dates for patient {} are not strictly increasing: ({}, {}) follows ({}, {})",
                    self.patient_id, self.patient_id, pair[1].date, self.patient_id, pair[0].date
                )));
            }
        }
        if let (Outcome::Died { date, .. }, Some(last)) = (&self.outcome, self.last_visit_date()) {
            if *date < last {
                return Err(Error::Integrity(format!(
                    "patient {} has a visit on {last} after death on {date}",
                    self.patient_id
                )));
            }
        }
        Ok(())
    }
}

/// Patients sharing one dynamic feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub feature_names: Vec<String>,
    pub patients: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(feature_names: Vec<String>, patients: Vec<PatientRecord>) -> Result<Self> {
        let cohort = Self {
            feature_names,
            patients,
        };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.patients {
            if !seen.insert(p.patient_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate patient id {}",
                    p.patient_id
                )));
            }
            p.validate(self.feature_names.len())?;
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn num_visits(&self) -> usize {
        self.patients.iter().map(|p| p.visits.len()).sum()
    }

    /// Latest visit date in the cohort; the default anchor for survivors'
    /// uncertain phase.
    pub fn data_end_date(&self) -> Option<NaiveDate> {
        self.patients.iter().filter_map(|p| p.last_visit_date()).max()
    }

    pub fn find(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.patients.iter().find(|p| p.patient_id == patient_id)
    }

    /// Sub-cohort with the given patients, in the order given.
    pub fn subset(&self, ids: &[String]) -> Result<Cohort> {
        let index: std::collections::HashMap<&str, &PatientRecord> = self
            .patients
            .iter()
            .map(|p| (p.patient_id.as_str(), p))
            .collect();
        let patients = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|p| (*p).clone())
                    .ok_or_else(|| Error::Usage(format!("unknown patient {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cohort {
            feature_names: self.feature_names.clone(),
            patients,
        })
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.patients.iter().map(|p| p.patient_id.clone()).collect()
    }
}
