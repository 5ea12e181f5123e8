//! Attention analytics: per-visit importance records, outcome heatmaps and
//! importance-versus-value curves with turning points.

pub mod curve;
pub mod export;
pub mod importance;

pub use curve::{
    classify_shape, curve_from_points, hinge_knee, importance_value_curve, recommend, smooth, Curve, Recommendation, Shape,
    ShapeFit, DEFAULT_BINS, THETA_RISE,
};
pub use export::{
    feature_meta, render_report, summarize_curves, write_exports, write_importance_csv, CurveMethod, CurveSummary,
    CurvesExport, FeatureMeta,
};
pub use importance::{cod_heatmap, collect_importance, CodHeatmap, HeatmapRow, ImportanceRecord};
