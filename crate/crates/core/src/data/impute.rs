//! Last-observation-carried-forward imputation.

use super::record::{Cohort, PatientRecord};
use crate::error::{Error, Result};

/// Replaces each missing value with the latest earlier observation of the
/// same feature; leading gaps take `fallback[n]`. Observed values are kept.
pub fn forward_fill(record: &PatientRecord, fallback: &[f64]) -> Result<PatientRecord> {
    let mut out = record.clone();
    let width = out.visits.first().map(|v| v.values.len()).unwrap_or(fallback.len());
    if fallback.len() != width {
        return Err(Error::dim("forward_fill", &[width], &[fallback.len()]));
    }
    let mut last: Vec<f64> = fallback.to_vec();
    for visit in &mut out.visits {
        for (slot, carry) in visit.values.iter_mut().zip(last.iter_mut()) {
            match slot {
                Some(v) => *carry = *v,
                None => *slot = Some(*carry),
            }
        }
    }
    Ok(out)
}

pub fn forward_fill_cohort(cohort: &Cohort, fallback: &[f64]) -> Result<Cohort> {
    let patients = cohort
        .patients
        .iter()
        .map(|p| forward_fill(p, fallback))
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        feature_names: cohort.feature_names.clone(),
        patients,
    })
}

/// Per-feature median of observed values; features never observed get 0.
pub fn feature_medians(cohort: &Cohort) -> Vec<f64> {
    (0..cohort.num_features())
        .map(|n| {
            let mut vals: Vec<f64> = cohort
                .patients
                .iter()
                .flat_map(|p| p.series(n))
                .flatten()
                .collect();
            median(&mut vals).unwrap_or(0.0)
        })
        .collect()
}

pub(crate) fn median(vals: &mut [f64]) -> Option<f64> {
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    Some(if vals.len().is_multiple_of(2) {
        0.5 * (vals[mid - 1] + vals[mid])
    } else {
        vals[mid]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{Outcome, Visit};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn record(series: &[Option<f64>]) -> PatientRecord {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        PatientRecord {
            patient_id: "p".into(),
            baseline: [50.0, 0.0, 1.6, 0.0],
            visits: series
                .iter()
                .enumerate()
                .map(|(i, v)| Visit {
                    date: start + chrono::Days::new(90 * i as u64),
                    values: vec![*v],
                })
                .collect(),
            outcome: Outcome::Alive,
        }
    }

    fn values(r: &PatientRecord) -> Vec<Option<f64>> {
        r.series(0).collect()
    }

    #[test]
    fn carries_last_observation() {
        let r = forward_fill(&record(&[Some(5.0), None, Some(7.0)]), &[0.0]).unwrap();
        assert_eq!(values(&r), vec![Some(5.0), Some(5.0), Some(7.0)]);
    }

    #[test]
    fn complete_series_unchanged() {
        let src = record(&[Some(1.0), Some(2.0)]);
        assert_eq!(forward_fill(&src, &[9.0]).unwrap(), src);
    }

    #[test]
    fn leading_gap_uses_fallback() {
        let r = forward_fill(&record(&[None, Some(4.0)]), &[38.0]).unwrap();
        assert_eq!(values(&r), vec![Some(38.0), Some(4.0)]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    proptest! {
        #[test]
        fn forward_fill_is_idempotent(
            series in prop::collection::vec(prop::option::of(-100.0f64..100.0), 1..20),
            fallback in -10.0f64..10.0,
        ) {
            let once = forward_fill(&record(&series), &[fallback]).unwrap();
            let twice = forward_fill(&once, &[fallback]).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(values(&once).iter().all(Option::is_some));
        }
    }
}
