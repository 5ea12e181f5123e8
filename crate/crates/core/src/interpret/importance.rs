//! Per-visit attention records and cause-of-death heatmaps.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{CauseOfDeath, Cohort, LabelConfig, OutcomeGroup};
use crate::error::{Error, Result};
use crate::model::{predict_visits, Checkpoint};
use crate::numerics::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub patient_id: String,
    pub visit_index: usize,
    pub feature: String,
    /// Imputed value in original units.
    pub value: f64,
    pub attention: f64,
    pub risk: f64,
}

/// Attention of every feature at every labeled visit, with values in
/// original units.
pub fn collect_importance(
    checkpoint: &Checkpoint,
    cohort: &Cohort,
    labels: &LabelConfig,
    data_end: NaiveDate,
    activation: Activation,
) -> Result<Vec<ImportanceRecord>> {
    let params = checkpoint.model_params()?;
    let prep = &checkpoint.preprocessing;
    if prep.feature_names != cohort.feature_names {
        return Err(Error::Config(format!(
            "checkpoint features {:?} do not match cohort features {:?}",
            prep.feature_names, cohort.feature_names
        )));
    }
    let mut out = Vec::new();
    for record in &cohort.patients {
        let sample = prep.sample(record, labels, data_end)?;
        let preds = predict_visits(&params, &sample.input, activation)?;
        for (t, (label, pred)) in sample.labels.iter().zip(&preds).enumerate() {
            if !label.is_labeled() {
                continue;
            }
            for (n, name) in cohort.feature_names.iter().enumerate() {
                out.push(ImportanceRecord {
                    patient_id: sample.patient_id.clone(),
                    visit_index: t,
                    feature: name.clone(),
                    value: sample.raw[n][t],
                    attention: pred.attention[n],
                    risk: pred.risk,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub group: String,
    pub visits: usize,
    /// Mean attention per feature, in column order.
    pub cells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodHeatmap {
    pub features: Vec<String>,
    pub rows: Vec<HeatmapRow>,
    pub notices: Vec<String>,
}

/// Mean attention per (outcome group, feature): survivors first, then the
/// causes of death in their canonical order. Groups without records are
/// omitted with a notice.
pub fn cod_heatmap(records: &[ImportanceRecord], cohort: &Cohort) -> Result<CodHeatmap> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no importance records".into()));
    }
    let features = cohort.feature_names.clone();
    let column: BTreeMap<&str, usize> = features.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
    let group_of: BTreeMap<&str, OutcomeGroup> = cohort
        .patients
        .iter()
        .map(|p| (p.patient_id.as_str(), p.outcome.group()))
        .collect();

    // (sum per feature, visit keys seen)
    let mut acc: BTreeMap<OutcomeGroup, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for r in records {
        let group = *group_of
            .get(r.patient_id.as_str())
            .ok_or_else(|| Error::Config(format!("record for unknown patient {}", r.patient_id)))?;
        let col = *column
            .get(r.feature.as_str())
            .ok_or_else(|| Error::Config(format!("record for unknown feature {}", r.feature)))?;
        let entry = acc
            .entry(group)
            .or_insert_with(|| (vec![0.0; features.len()], vec![0; features.len()]));
        entry.0[col] += r.attention;
        entry.1[col] += 1;
    }

    let order = std::iter::once(OutcomeGroup::Alive)
        .chain(CauseOfDeath::ALL.into_iter().map(|c| OutcomeGroup::Died(Some(c))));
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    for group in order {
        match acc.get(&group) {
            Some((sums, counts)) => rows.push(HeatmapRow {
                group: group.label().to_string(),
                visits: counts.iter().copied().max().unwrap_or(0),
                cells: sums
                    .iter()
                    .zip(counts)
                    .map(|(s, c)| if *c == 0 { 0.0 } else { s / *c as f64 })
                    .collect(),
            }),
            None => notices.push(format!("{}: no labeled visits, row omitted", group.label())),
        }
    }
    if acc.contains_key(&OutcomeGroup::Died(None)) {
        notices.push("deaths with unknown cause are not shown".into());
    }
    Ok(CodHeatmap { features, rows, notices })
}
