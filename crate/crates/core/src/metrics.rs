//! Ranking metrics over labeled visits and per-cause subgroup evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CauseOfDeath, OutcomeGroup};
use crate::error::{Error, Result};

/// One labeled visit with its predicted risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVisit {
    pub patient_id: String,
    pub visit_index: usize,
    pub score: f64,
    pub label: bool,
    #[serde(with = "group_serde")]
    pub group: OutcomeGroup,
}

mod group_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &OutcomeGroup, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(g.label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<OutcomeGroup, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "Alive" => Ok(OutcomeGroup::Alive),
            "Unknown" => Ok(OutcomeGroup::Died(None)),
            code => code
                .parse::<CauseOfDeath>()
                .map(|c| OutcomeGroup::Died(Some(c)))
                .map_err(serde::de::Error::custom),
        }
    }
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dim("metric", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("metric scores must be finite".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by ascending score; ties keep input order.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    idx
}

/// Area under the ROC curve via Mann–Whitney midranks; ties count ½.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateInput(format!(
            "AUROC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    let idx = ascending(scores);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let group_pos = idx[i..=j].iter().filter(|k| labels[**k]).count();
        rank_sum += mid * group_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision; equal scores form one threshold.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::DegenerateInput("AUPRC needs at least one positive".into()));
    }
    let mut idx = ascending(scores);
    idx.reverse();
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let group_pos = idx[i..=j].iter().filter(|k| labels[**k]).count();
        tp += group_pos;
        seen += j - i + 1;
        if group_pos > 0 {
            ap += group_pos as f64 * (tp as f64 / seen as f64);
        }
        i = j + 1;
    }
    Ok(ap / pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[bool]) -> Result<Self> {
        let (positives, negatives) = check(scores, labels)?;
        Ok(Self {
            auroc: auroc(scores, labels)?,
            auprc: auprc(scores, labels)?,
            positives,
            negatives,
        })
    }

    pub fn from_visits(visits: &[ScoredVisit]) -> Result<Self> {
        let scores: Vec<f64> = visits.iter().map(|v| v.score).collect();
        let labels: Vec<bool> = visits.iter().map(|v| v.label).collect();
        Self::compute(&scores, &labels)
    }
}

/// Per-cause AUROC/AUPRC, each cause's visits against all survivors' visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodReport {
    pub comparison: String,
    pub causes: BTreeMap<String, MetricsReport>,
    pub notices: Vec<String>,
}

pub const COD_COMPARISON: &str =
    "each cause: all labeled visits of patients who died of that cause vs all labeled visits of surviving patients; \
     predictions pooled across held-out folds";

pub fn evaluate_by_cod(visits: &[ScoredVisit]) -> Result<CodReport> {
    let alive: Vec<&ScoredVisit> = visits.iter().filter(|v| v.group == OutcomeGroup::Alive).collect();
    let mut causes = BTreeMap::new();
    let mut notices = Vec::new();
    for cause in CauseOfDeath::ALL {
        let own: Vec<&ScoredVisit> = visits
            .iter()
            .filter(|v| v.group == OutcomeGroup::Died(Some(cause)))
            .collect();
        if own.is_empty() {
            notices.push(format!("{cause}: no patients, skipped"));
            continue;
        }
        if !own.iter().any(|v| v.label) {
            notices.push(format!("{cause}: no high-risk visits, skipped"));
            continue;
        }
        let subset: Vec<&ScoredVisit> = own.iter().chain(&alive).copied().collect();
        let scores: Vec<f64> = subset.iter().map(|v| v.score).collect();
        let labels: Vec<bool> = subset.iter().map(|v| v.label).collect();
        match MetricsReport::compute(&scores, &labels) {
            Ok(r) => {
                causes.insert(cause.code().to_string(), r);
            }
            Err(Error::DegenerateInput(msg)) => notices.push(format!("{cause}: {msg}, skipped")),
            Err(e) => return Err(e),
        }
    }
    let unknown = visits
        .iter()
        .filter(|v| v.group == OutcomeGroup::Died(None))
        .count();
    if unknown > 0 {
        notices.push(format!("{unknown} visits of deaths with unknown cause excluded"));
    }
    Ok(CodReport {
        comparison: COD_COMPARISON.to_string(),
        causes,
        notices,
    })
}

/// Mean and sample standard deviation, presented as `mean (std)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("mean of no values".into()));
        }
        let n = values.len() as f64;
        // shifted by the first value so identical inputs give an exact mean
        let mean = values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ({:.3})", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.2, 0.3], &[true, true]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[0.2, 0.7, 0.1], &[true, true, true]).unwrap(), 1.0);
        assert!(matches!(auprc(&[0.2], &[false]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn mean_std_identical_values() {
        let m = MeanStd::of(&[0.8, 0.8, 0.8]).unwrap();
        assert_eq!((m.mean, m.std), (0.8, 0.0));
        assert_eq!(m.to_string(), "0.800 (0.000)");
    }

    fn visit(id: &str, score: f64, label: bool, group: OutcomeGroup) -> ScoredVisit {
        ScoredVisit { patient_id: id.into(), visit_index: 0, score, label, group }
    }

    #[test]
    fn cod_skips_causes_without_positives() {
        let v = vec![
            visit("a", 0.1, false, OutcomeGroup::Alive),
            visit("b", 0.9, true, OutcomeGroup::Died(Some(CauseOfDeath::Cvd))),
            visit("c", 0.4, false, OutcomeGroup::Died(Some(CauseOfDeath::Gi))),
        ];
        let r = evaluate_by_cod(&v).unwrap();
        assert_eq!(r.causes.len(), 1);
        assert_eq!(r.causes["CVD"].auroc, 1.0);
        assert!(r.notices.iter().any(|n| n.starts_with("GI: no high-risk")));
    }

    #[test]
    fn scored_visit_serializes_group_code() {
        let v = visit("a", 0.5, true, OutcomeGroup::Died(Some(CauseOfDeath::Pdap)));
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"group\":\"PDAP\""));
        assert_eq!(serde_json::from_str::<ScoredVisit>(&json).unwrap(), v);
    }
}
