//! Validation of uploaded records for on-demand prediction.
//!
//! Requests are checked field by field against the raw JSON so that every
//! violation is reported at once, before any model call.

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::Value;

use aicare::data::{Outcome, PatientRecord, Visit, BASELINE_DIM, BASELINE_NAMES};

/// A list of offending field paths with one message each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldErrors {
    pub fields: Vec<String>,
    pub messages: Vec<String>,
}

impl FieldErrors {
    fn new() -> Self {
        Self { fields: Vec::new(), messages: Vec::new() }
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        let field = field.into();
        self.messages.push(format!("{field}: {}", message.into()));
        self.fields.push(field);
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

fn number(v: &Value, field: &str, errs: &mut FieldErrors) -> Option<f64> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Some(x),
        _ => {
            errs.push(field, "expected a finite number");
            None
        }
    }
}

fn baseline(v: Option<&Value>, errs: &mut FieldErrors) -> [f64; BASELINE_DIM] {
    let mut out = [0.0; BASELINE_DIM];
    match v {
        Some(Value::Array(items)) if items.len() == BASELINE_DIM => {
            for (i, item) in items.iter().enumerate() {
                out[i] = number(item, &format!("baseline[{i}]"), errs).unwrap_or(0.0);
            }
        }
        Some(Value::Array(items)) => {
            errs.push("baseline", format!("expected {BASELINE_DIM} values, got {}", items.len()));
        }
        Some(Value::Object(map)) => {
            for (i, name) in BASELINE_NAMES.iter().enumerate() {
                let field = format!("baseline.{name}");
                match map.get(*name) {
                    Some(item) => out[i] = number(item, &field, errs).unwrap_or(0.0),
                    None => errs.push(field, "missing"),
                }
            }
            for key in map.keys().filter(|k| !BASELINE_NAMES.contains(&k.as_str())) {
                errs.push(format!("baseline.{key}"), "unknown field");
            }
        }
        Some(_) => errs.push("baseline", format!("expected an array or object of {BASELINE_DIM} values")),
        None => errs.push("baseline", "missing"),
    }
    out
}

fn visit(v: &Value, i: usize, num_features: usize, errs: &mut FieldErrors) -> Option<Visit> {
    let Value::Object(map) = v else {
        errs.push(format!("visits[{i}]"), "expected an object");
        return None;
    };
    for key in map.keys().filter(|k| !matches!(k.as_str(), "date" | "values")) {
        errs.push(format!("visits[{i}].{key}"), "unknown field");
    }
    let date = match map.get("date") {
        Some(Value::String(s)) => match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            Ok(d) => Some(d),
            Err(_) => {
                errs.push(format!("visits[{i}].date"), format!("expected YYYY-MM-DD, got {s:?}"));
                None
            }
        },
        Some(_) => {
            errs.push(format!("visits[{i}].date"), "expected a date string");
            None
        }
        None => {
            errs.push(format!("visits[{i}].date"), "missing");
            None
        }
    };
    let values = match map.get("values") {
        Some(Value::Array(items)) if items.len() == num_features => items
            .iter()
            .enumerate()
            .map(|(n, item)| match item {
                Value::Null => Some(None),
                other => number(other, &format!("visits[{i}].values[{n}]"), errs).map(Some),
            })
            .collect::<Option<Vec<_>>>(),
        Some(Value::Array(items)) => {
            errs.push(
                format!("visits[{i}].values"),
                format!("expected {num_features} feature values, got {}", items.len()),
            );
            None
        }
        Some(_) => {
            errs.push(format!("visits[{i}].values"), "expected an array");
            None
        }
        None => {
            errs.push(format!("visits[{i}].values"), "missing");
            None
        }
    };
    Some(Visit { date: date?, values: values? })
}

/// Parses a prediction request into an anonymous patient record.
///
/// Shape: `{"baseline": [age, gender, height, diabetes] | {age, ...},
/// "visits": [{"date": "YYYY-MM-DD", "values": [number | null, ...]}]}`.
pub fn parse_predict_request(body: &Value, num_features: usize) -> Result<PatientRecord, FieldErrors> {
    let mut errs = FieldErrors::new();
    let Value::Object(map) = body else {
        errs.push("body", "expected a JSON object");
        return Err(errs);
    };
    for key in map.keys().filter(|k| !matches!(k.as_str(), "baseline" | "visits")) {
        errs.push(key.clone(), "unknown field");
    }
    let baseline = baseline(map.get("baseline"), &mut errs);
    let mut visits = Vec::new();
    match map.get("visits") {
        Some(Value::Array(items)) if items.is_empty() => errs.push("visits", "at least one visit is required"),
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if let Some(v) = visit(item, i, num_features, &mut errs) {
                    visits.push((i, v));
                }
            }
        }
        Some(_) => errs.push("visits", "expected an array"),
        None => errs.push("visits", "missing"),
    }
    for pair in visits.windows(2) {
        if pair[1].1.date <= pair[0].1.date {
            errs.push(
                format!("visits[{}].date", pair[1].0),
                format!("dates must be strictly increasing ({} follows {})", pair[1].1.date, pair[0].1.date),
            );
        }
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(PatientRecord {
        patient_id: "upload".into(),
        baseline,
        visits: visits.into_iter().map(|(_, v)| v).collect(),
        outcome: Outcome::Alive,
    })
}
