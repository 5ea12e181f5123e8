//! CSV ingestion and export for `visits.csv`, `baseline.csv` and `outcomes.csv`.
//!
//! Dates are `YYYY-MM-DD`; an empty cell marks a missing value.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::record::{
    CauseOfDeath, Cohort, Outcome, PatientRecord, Visit, BASELINE_DIM, BASELINE_NAMES,
};
use crate::error::{Error, Result};

pub const VISITS_FILE: &str = "visits.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const DATE_FORMAT: &str = "%Y-%m-%d";

fn parse_err(file: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line: line as usize,
        message: message.into(),
    }
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(src)
}

fn parse_date(file: &str, line: u64, raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw, DATE_FORMAT)
        .map_err(|e| parse_err(file, line, format!("bad date {raw:?}: {e}")))
}

fn parse_f64(file: &str, line: u64, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(file, line, format!("bad number {raw:?} in column {column}")))?;
    if !v.is_finite() {
        return Err(parse_err(file, line, format!("non-finite value in column {column}")));
    }
    Ok(v)
}

fn csv_err(file: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_err(file, line, e.to_string())
}

/// Reads a cohort from the three CSV files in `dir`.
pub fn read_cohort_dir(dir: &Path, expected_features: Option<&[String]>) -> Result<Cohort> {
    let open = |name: &str| File::open(dir.join(name)).map_err(|e| Error::io(dir.join(name), e));
    parse_cohort(
        open(VISITS_FILE)?,
        open(BASELINE_FILE)?,
        open(OUTCOMES_FILE)?,
        expected_features,
    )
}

/// Parses and validates a cohort. When `expected_features` is given the
/// visits header must list exactly those features in that order.
pub fn parse_cohort<V: Read, B: Read, O: Read>(
    visits: V,
    baseline: B,
    outcomes: O,
    expected_features: Option<&[String]>,
) -> Result<Cohort> {
    let baselines = parse_baseline(baseline)?;
    let outcome_map = parse_outcomes(outcomes)?;
    let (feature_names, visit_map) = parse_visits(visits)?;

    if let Some(expected) = expected_features {
        let unknown: Vec<String> = feature_names
            .iter()
            .filter(|f| !expected.contains(f))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Schema(vec![format!(
                "unknown feature columns: {}",
                unknown.join(", ")
            )]));
        }
        if feature_names.as_slice() != expected {
            return Err(Error::Schema(vec![format!(
                "feature columns {:?} do not match expected {:?}",
                feature_names, expected
            )]));
        }
    }

    for id in visit_map.keys() {
        if !baselines.iter().any(|(b, _)| b == id) {
            return Err(Error::Integrity(format!(
                "visits reference unknown patient {id}"
            )));
        }
    }
    for id in outcome_map.keys() {
        if !baselines.iter().any(|(b, _)| b == id) {
            return Err(Error::Integrity(format!(
                "outcomes reference unknown patient {id}"
            )));
        }
    }

    let mut visit_map = visit_map;
    let mut patients = Vec::with_capacity(baselines.len());
    for (id, baseline) in baselines {
        let outcome = *outcome_map
            .get(&id)
            .ok_or_else(|| Error::Integrity(format!("patient {id} has no outcome row")))?;
        let visits = visit_map.remove(&id).unwrap_or_default();
        patients.push(PatientRecord {
            patient_id: id,
            baseline,
            visits,
            outcome,
        });
    }
    Cohort::new(feature_names, patients)
}

type VisitMap = HashMap<String, Vec<Visit>>;

fn parse_visits<R: Read>(src: R) -> Result<(Vec<String>, VisitMap)> {
    const FILE: &str = VISITS_FILE;
    let mut rdr = reader(src);
    let header = rdr.headers().map_err(|e| csv_err(FILE, e))?.clone();
    if header.len() < 2 || &header[0] != "patient_id" || &header[1] != "date" {
        return Err(parse_err(
            FILE,
            1,
            "header must start with patient_id,date",
        ));
    }
    let features: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut uniq = std::collections::HashSet::new();
    for f in &features {
        if f.is_empty() || !uniq.insert(f) {
            return Err(parse_err(FILE, 1, format!("empty or duplicate feature column {f:?}")));
        }
    }
    let mut map: VisitMap = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(FILE, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(parse_err(
                FILE,
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(parse_err(FILE, line, "empty patient_id"));
        }
        let date = parse_date(FILE, line, &row[1])?;
        let values = features
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let raw = &row[i + 2];
                if raw.is_empty() {
                    Ok(None)
                } else {
                    parse_f64(FILE, line, name, raw).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let visits = map.entry(id.clone()).or_default();
        if let Some(prev) = visits.last() {
            if date <= prev.date {
                return Err(Error::Integrity(format!(
                    "{FILE} line {line}: visit ({id}, {date}) does not follow ({id}, {}) in time",
                    prev.date
                )));
            }
        }
        visits.push(Visit { date, values });
    }
    Ok((features, map))
}

fn parse_baseline<R: Read>(src: R) -> Result<Vec<(String, [f64; BASELINE_DIM])>> {
    const FILE: &str = BASELINE_FILE;
    let mut rdr = reader(src);
    let header = rdr.headers().map_err(|e| csv_err(FILE, e))?.clone();
    let expected: Vec<&str> = std::iter::once("patient_id").chain(BASELINE_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            FILE,
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(FILE, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(parse_err(FILE, line, "empty patient_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Integrity(format!("duplicate baseline row for patient {id}")));
        }
        let mut values = [0.0; BASELINE_DIM];
        for (k, name) in BASELINE_NAMES.iter().enumerate() {
            values[k] = parse_f64(FILE, line, name, &row[k + 1])?;
        }
        out.push((id, values));
    }
    Ok(out)
}

fn parse_outcomes<R: Read>(src: R) -> Result<HashMap<String, Outcome>> {
    const FILE: &str = OUTCOMES_FILE;
    let mut rdr = reader(src);
    let header = rdr.headers().map_err(|e| csv_err(FILE, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["patient_id", "status", "death_date", "cause_of_death"] {
        return Err(parse_err(
            FILE,
            1,
            "header must be patient_id,status,death_date,cause_of_death",
        ));
    }
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(FILE, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row[0].to_string();
        let outcome = match row[1].to_ascii_lowercase().as_str() {
            "alive" => {
                if !row[2].is_empty() || !row[3].is_empty() {
                    return Err(parse_err(FILE, line, "alive patient with death fields"));
                }
                Outcome::Alive
            }
            "died" => {
                let date = parse_date(FILE, line, &row[2])?;
                let cause = if row[3].is_empty() {
                    None
                } else {
                    Some(
                        row[3]
                            .parse::<CauseOfDeath>()
                            .map_err(|e| parse_err(FILE, line, e.to_string()))?,
                    )
                };
                Outcome::Died { date, cause }
            }
            other => {
                return Err(parse_err(FILE, line, format!("unknown status {other:?}")));
            }
        };
        if out.insert(id.clone(), outcome).is_some() {
            return Err(Error::Integrity(format!("duplicate outcome row for patient {id}")));
        }
    }
    Ok(out)
}

/// Writes the three CSV files for `cohort` into `dir`.
pub fn write_cohort_dir(cohort: &Cohort, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| File::create(dir.join(name)).map_err(|e| Error::io(dir.join(name), e));
    write_visits(cohort, create(VISITS_FILE)?)?;
    write_baseline(cohort, create(BASELINE_FILE)?)?;
    write_outcomes(cohort, create(OUTCOMES_FILE)?)?;
    Ok(())
}

fn io_err(file: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(file, e)
}

pub fn write_visits<W: Write>(cohort: &Cohort, mut out: W) -> Result<()> {
    let mut buf = String::from("patient_id,date");
    for f in &cohort.feature_names {
        buf.push(',');
        buf.push_str(f);
    }
    buf.push('\n');
    for p in &cohort.patients {
        for v in &p.visits {
            buf.push_str(&p.patient_id);
            buf.push(',');
            buf.push_str(&v.date.format(DATE_FORMAT).to_string());
            for x in &v.values {
                buf.push(',');
                if let Some(x) = x {
                    buf.push_str(&x.to_string());
                }
            }
            buf.push('\n');
        }
    }
    out.write_all(buf.as_bytes()).map_err(io_err(VISITS_FILE))
}

pub fn write_baseline<W: Write>(cohort: &Cohort, mut out: W) -> Result<()> {
    let mut buf = format!("patient_id,{}\n", BASELINE_NAMES.join(","));
    for p in &cohort.patients {
        buf.push_str(&p.patient_id);
        for x in p.baseline {
            buf.push(',');
            buf.push_str(&x.to_string());
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes()).map_err(io_err(BASELINE_FILE))
}

pub fn write_outcomes<W: Write>(cohort: &Cohort, mut out: W) -> Result<()> {
    let mut buf = String::from("patient_id,status,death_date,cause_of_death\n");
    for p in &cohort.patients {
        match p.outcome {
            Outcome::Alive => buf.push_str(&format!("{},alive,,\n", p.patient_id)),
            Outcome::Died { date, cause } => buf.push_str(&format!(
                "{},died,{},{}\n",
                p.patient_id,
                date.format(DATE_FORMAT),
                cause.map(|c| c.code()).unwrap_or("")
            )),
        }
    }
    out.write_all(buf.as_bytes()).map_err(io_err(OUTCOMES_FILE))
}
