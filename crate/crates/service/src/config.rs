use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use aicare::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Directory holding visits.csv, baseline.csv and outcomes.csv.
    pub cohort_dir: PathBuf,
    pub checkpoint: PathBuf,
    /// Directory with curves.json and heatmap.json from `interpret`.
    #[serde(default)]
    pub exports_dir: Option<PathBuf>,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default)]
    pub anonymize_dates: bool,
    #[serde(default)]
    pub disclose_outcomes: bool,
    /// When set, `/api/*` requires `Authorization: Bearer <token>`.
    #[serde(default)]
    pub bearer_token: Option<String>,
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

impl ServiceConfig {
    pub fn new(cohort_dir: impl Into<PathBuf>, checkpoint: impl Into<PathBuf>) -> Self {
        Self {
            cohort_dir: cohort_dir.into(),
            checkpoint: checkpoint.into(),
            exports_dir: None,
            host: default_host(),
            port: default_port(),
            anonymize_dates: false,
            disclose_outcomes: false,
            bearer_token: None,
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ServiceConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.cohort_dir);
        resolve(&mut cfg.checkpoint);
        if let Some(p) = cfg.exports_dir.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }
}
