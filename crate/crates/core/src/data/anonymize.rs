//! Date shifting for public exports.

use chrono::NaiveDate;

use super::record::{Cohort, Outcome, PatientRecord};
use crate::error::{Error, Result};

/// First visit of every anonymized patient lands on 1000-01-01.
pub fn anonymized_origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(1000, 1, 1).expect("valid date")
}

/// Shifts all of a patient's dates by one offset so the first visit falls
/// on [`anonymized_origin`]. Intervals between dates are preserved.
pub fn anonymize_dates(record: &PatientRecord) -> Result<PatientRecord> {
    let first = record
        .visits
        .first()
        .ok_or_else(|| Error::Integrity(format!("patient {} has no visits", record.patient_id)))?
        .date;
    let offset = first - anonymized_origin();
    let mut out = record.clone();
    for v in &mut out.visits {
        v.date -= offset;
    }
    if let Outcome::Died { date, .. } = &mut out.outcome {
        *date -= offset;
    }
    Ok(out)
}

pub fn anonymize_cohort(cohort: &Cohort) -> Result<Cohort> {
    let patients = cohort
        .patients
        .iter()
        .map(anonymize_dates)
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        feature_names: cohort.feature_names.clone(),
        patients,
    })
}
