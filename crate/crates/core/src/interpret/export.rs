//! Serializations of interpretation results: importance.csv, curves.json,
//! heatmap.json and a Markdown summary table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::{
    classify_shape, importance_value_curve, recommend, Recommendation, Shape, CENTRAL_MASS, DEFAULT_BINS,
    THETA_RISE,
};
use super::importance::{CodHeatmap, ImportanceRecord};
use crate::data::cohort_spec::ReferenceRange;
use crate::data::CohortSpec;
use crate::error::{Error, Result};
use crate::numerics::Activation;

/// Display metadata for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub unit: String,
    pub reference: Option<ReferenceRange>,
}

pub fn feature_meta(spec: &CohortSpec) -> BTreeMap<String, FeatureMeta> {
    spec.features
        .iter()
        .map(|f| (f.name.clone(), FeatureMeta { unit: f.unit.clone(), reference: f.reference }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub feature: String,
    pub unit: Option<String>,
    pub reference: Option<ReferenceRange>,
    pub edges: Vec<f64>,
    pub mean_attention: Vec<Option<f64>>,
    pub mean_risk: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub shape: Shape,
    pub turning_point: Option<f64>,
    pub recommendation: Recommendation,
    pub advice: String,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMethod {
    pub activation: Activation,
    pub bins: usize,
    pub central_mass: f64,
    pub smoothing: String,
    pub theta_rise: f64,
    pub knee: String,
}

impl CurveMethod {
    pub fn new(activation: Activation) -> Self {
        Self {
            activation,
            bins: DEFAULT_BINS,
            central_mass: CENTRAL_MASS,
            smoothing: "count-weighted 3-bin moving average".into(),
            theta_rise: THETA_RISE,
            knee: "count-weighted hinge fit over populated bin midpoints".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvesExport {
    pub method: CurveMethod,
    pub features: Vec<CurveSummary>,
}

/// One summary per feature, in the given order.
pub fn summarize_curves(
    records: &[ImportanceRecord],
    features: &[String],
    meta: &BTreeMap<String, FeatureMeta>,
    activation: Activation,
) -> Result<CurvesExport> {
    let summaries = features
        .iter()
        .map(|name| {
            let curve = match importance_value_curve(records, name, DEFAULT_BINS) {
                Ok(c) => c,
                Err(Error::InsufficientData(msg)) => {
                    return Ok(CurveSummary {
                        feature: name.clone(),
                        unit: meta.get(name).map(|m| m.unit.clone()),
                        reference: meta.get(name).and_then(|m| m.reference),
                        edges: vec![],
                        mean_attention: vec![],
                        mean_risk: vec![],
                        counts: vec![],
                        shape: Shape::Irregular,
                        turning_point: None,
                        recommendation: Recommendation::Unknown,
                        advice: Recommendation::Unknown.describe(None),
                        notice: Some(msg),
                    })
                }
                Err(e) => return Err(e),
            };
            let (shape, turning_point, recommendation, notice) = match classify_shape(&curve) {
                Ok(fit) => {
                    let rec = recommend(&curve, &fit);
                    (fit.shape, fit.turning_point, rec, None)
                }
                Err(Error::InsufficientData(msg)) => (Shape::Irregular, None, Recommendation::Unknown, Some(msg)),
                Err(e) => return Err(e),
            };
            let m = meta.get(name);
            Ok(CurveSummary {
                feature: name.clone(),
                unit: m.map(|m| m.unit.clone()),
                reference: m.and_then(|m| m.reference),
                advice: recommendation.describe(turning_point),
                edges: curve.edges,
                mean_attention: curve.mean_attention,
                mean_risk: curve.mean_risk,
                counts: curve.counts,
                shape,
                turning_point,
                recommendation,
                notice,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurvesExport { method: CurveMethod::new(activation), features: summaries })
}

pub fn write_importance_csv(path: &Path, records: &[ImportanceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), super::curve::fmt_value)
}

/// Markdown table with one row per feature plus the heatmap.
pub fn render_report(curves: &CurvesExport, heatmap: &CodHeatmap) -> String {
    let m = &curves.method;
    let mut s = String::from("# Feature importance report\n\n");
    s.push_str(&format!(
        "Attention collected with {} at labeled visits. Curves use {} equal-width bins over the central {}% \
         of values, a {}, rise threshold {}; L-shaped turning points come from a {}.\n\n",
        m.activation,
        m.bins,
        m.central_mass * 100.0,
        m.smoothing,
        m.theta_rise,
        m.knee
    ));
    s.push_str("| Feature | Unit | Shape | Recommendation | Turning point | Lower limit | Upper limit |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for c in &curves.features {
        s.push_str(&format!(
            "| {} | {} | {:?} | {:?} {} | {} | {} | {} |\n",
            c.feature,
            c.unit.as_deref().unwrap_or("-"),
            c.shape,
            c.recommendation,
            c.advice,
            fmt_opt(c.turning_point),
            fmt_opt(c.reference.map(|r| r.lower)),
            fmt_opt(c.reference.map(|r| r.upper)),
        ));
    }
    s.push_str("\n## Mean attention by outcome\n\n| Group | Visits |");
    for f in &heatmap.features {
        s.push_str(&format!(" {f} |"));
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(heatmap.features.len()));
    s.push('\n');
    for row in &heatmap.rows {
        s.push_str(&format!("| {} | {} |", row.group, row.visits));
        for c in &row.cells {
            s.push_str(&format!(" {c:.3} |"));
        }
        s.push('\n');
    }
    for n in curves.features.iter().filter_map(|c| c.notice.as_ref()).chain(&heatmap.notices) {
        s.push_str(&format!("\n- {n}"));
    }
    s.push('\n');
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes importance.csv, curves.json, heatmap.json and report.md into `dir`.
pub fn write_exports(dir: &Path, records: &[ImportanceRecord], curves: &CurvesExport, heatmap: &CodHeatmap) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_importance_csv(&dir.join("importance.csv"), records)?;
    write_json(&dir.join("curves.json"), curves)?;
    write_json(&dir.join("heatmap.json"), heatmap)?;
    let report = dir.join("report.md");
    std::fs::write(&report, render_report(curves, heatmap)).map_err(|e| Error::io(&report, e))
}
