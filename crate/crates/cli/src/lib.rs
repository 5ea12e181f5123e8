//! Pipeline commands behind the `aicare` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use aicare::data::{
    cohort_stats, generate_synthetic, read_cohort_dir, separable_cohort, write_cohort_dir, Cohort, CohortSpec,
    LabelConfig,
};
use aicare::interpret::{cod_heatmap, collect_importance, feature_meta, summarize_curves, write_exports};
use aicare::metrics::{evaluate_by_cod, MetricsReport, ScoredVisit};
use aicare::model::{Checkpoint, Predictor};
use aicare::numerics::Activation;
use aicare::train::{cross_validate, CvResult, TrainConfig};
use aicare_service::{parse_predict_request, ServiceConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const COD_FILE: &str = "cod_metrics.json";
pub const SPEC_FILE: &str = "spec.json";
pub const TRUTH_FILE: &str = "truth.json";

const EXIT_CODES: &str = "Exit codes: 0 success, 2 usage, 3 parse, 4 schema or configuration, 5 I/O, \
                          6 numeric, 7 data integrity.";

#[derive(Debug, Parser)]
#[command(name = "aicare", version, about = "Dynamic mortality-risk prediction with feature-level attention", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (CSV), its spec and generator ground truth.
    Generate(GenerateArgs),
    /// Cross-validate and write per-fold checkpoints, metrics and logs.
    Train(TrainArgs),
    /// Score every visit with the deployment checkpoint.
    Evaluate(EvaluateArgs),
    /// Export attention records, importance curves, heatmap and report.
    Interpret(InterpretArgs),
    /// Predict risk and attention for one patient given as JSON.
    Predict(PredictArgs),
    /// Run the HTTP API until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// PD-like cohort: 16 features, about 9% high-risk visits.
    PdDefault,
    /// Small cohort with planted V/L features and a noise feature.
    PlantedDemo,
    /// One fully informative feature and one noise feature.
    Separable,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Cohort spec JSON; overrides --preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pd-default")]
    pub preset: Preset,
    #[arg(long, env = "AICARE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of patients.
    #[arg(long)]
    pub patients: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; unspecified fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Folds trained concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the config seed; AICARE_SEED applies when neither is set.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "sparsemax")]
    pub activation: Activation,
    /// Cohort spec for units and reference ranges; defaults to DATA/spec.json.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model directory or checkpoint file.
    #[arg(long)]
    pub model: PathBuf,
    /// `{"baseline": [...], "visits": [{"date", "values"}]}`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(aicare::Error),
}

impl From<aicare::Error> for CliError {
    fn from(e: aicare::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use aicare::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Usage(_) => 2,
                E::Parse { .. } | E::Json(_) => 3,
                E::Schema(_)
                | E::Config(_)
                | E::Dimension { .. }
                | E::Domain(_)
                | E::EmptyMask
                | E::DegenerateInput(_)
                | E::InsufficientData(_) => 4,
                E::Io { .. } => 5,
                E::Numeric(_) => 6,
                E::Integrity(_) => 7,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    aicare::Error::io(path, e).into()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(aicare::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_json_value(path: &Path) -> CliResult<Value> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        aicare::Error::Parse { file: path.display().to_string(), line: e.line(), message: e.to_string() }.into()
    })
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Interpret(a) => interpret(&a),
        Command::Predict(a) => predict(&a, &mut std::io::stdout().lock()),
        Command::Serve(a) => serve(&a),
    }
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let spec = match (&a.spec, a.preset) {
        (Some(path), _) => Some(
            serde_json::from_value::<CohortSpec>(read_json_value(path)?)
                .map_err(|e| aicare::Error::Config(format!("{}: {e}", path.display())))?,
        ),
        (None, Preset::PdDefault) => Some(CohortSpec::pd_default()),
        (None, Preset::PlantedDemo) => Some(CohortSpec::planted_demo()),
        (None, Preset::Separable) => None,
    };
    create_dir(&a.out)?;
    match spec {
        Some(mut spec) => {
            if let Some(n) = a.patients {
                spec.num_patients = n;
            }
            let (cohort, truth) = generate_synthetic(&spec, a.seed)?;
            write_cohort_dir(&cohort, &a.out)?;
            write_json(&a.out.join(SPEC_FILE), &spec)?;
            write_json(&a.out.join(TRUTH_FILE), &truth)?;
            let stats = cohort_stats(&cohort, &LabelConfig::default())?;
            eprintln!(
                "{} patients, {} visits, {:.1}% high-risk visits, mortality {:.1}%",
                stats.patients,
                stats.visits,
                100.0 * stats.positive_prevalence,
                100.0 * stats.mortality
            );
        }
        None => {
            let cohort = separable_cohort(a.patients.unwrap_or(200), a.seed)?;
            write_cohort_dir(&cohort, &a.out)?;
            let truth = json!({
                "spec_name": "separable",
                "seed": a.seed,
                "informative_features": ["marker"],
                "noise_features": ["noise"],
            });
            write_json(&a.out.join(TRUTH_FILE), &truth)?;
        }
    }
    Ok(())
}

/// Config file, then flag overrides; AICARE_SEED only when no seed was given.
pub fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let (mut cfg, file_seed) = match &a.config {
        Some(path) => {
            let v = read_json_value(path)?;
            let has_seed = v.get("seed").is_some();
            let cfg: TrainConfig = serde_json::from_value(v)
                .map_err(|e| aicare::Error::Config(format!("{}: {e}", path.display())))?;
            (cfg, has_seed)
        }
        None => (TrainConfig::default(), false),
    };
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(e) = a.max_epochs {
        cfg.max_epochs = e;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    match (a.seed, file_seed, std::env::var("AICARE_SEED")) {
        (Some(s), _, _) => cfg.seed = s,
        (None, false, Ok(raw)) => {
            cfg.seed = raw
                .parse()
                .map_err(|_| aicare::Error::Config(format!("AICARE_SEED must be an integer, got {raw:?}")))?
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct FoldEntry<'a> {
    fold: usize,
    best_epoch: Option<usize>,
    epochs_run: usize,
    valid_score: f64,
    train_patients: usize,
    valid_patients: usize,
    test_patients: usize,
    test: &'a Option<MetricsReport>,
}

fn metrics_json(cv: &CvResult, cfg: &TrainConfig) -> Value {
    let folds: Vec<FoldEntry> = cv
        .folds
        .iter()
        .map(|f| FoldEntry {
            fold: f.fold,
            best_epoch: f.best_epoch,
            epochs_run: f.history.len(),
            valid_score: f.valid_score,
            train_patients: f.train_ids.len(),
            valid_patients: f.valid_ids.len(),
            test_patients: f.test_ids.len(),
            test: &f.test,
        })
        .collect();
    let s = &cv.summary;
    json!({
        "summary": {
            "auroc": s.auroc.to_string(),
            "auprc": s.auprc.to_string(),
            "auroc_mean": s.auroc.mean,
            "auroc_std": s.auroc.std,
            "auprc_mean": s.auprc.mean,
            "auprc_std": s.auprc.std,
            "folds_evaluated": s.folds_evaluated,
            "pooled": s.pooled,
        },
        "folds": folds,
        "deployment_fold": cv.deployment_fold,
        "config": cfg,
        "notices": s.notices,
    })
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(a)?;
    let cohort = read_cohort_dir(&a.data, None)?;
    let cv = cross_validate(&cohort, &cfg)?;
    create_dir(&a.out)?;

    let mut log = String::new();
    for f in &cv.folds {
        let dir = a.out.join(format!("fold_{}", f.fold));
        create_dir(&dir)?;
        f.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        for h in &f.history {
            let mut line = serde_json::to_value(h).map_err(aicare::Error::from)?;
            line["fold"] = json!(f.fold);
            log.push_str(&line.to_string());
            log.push('\n');
        }
    }
    let log_path = a.out.join(LOG_FILE);
    fs::write(&log_path, log).map_err(|e| io_err(&log_path, e))?;
    cv.deployment().save(&a.out.join(CHECKPOINT_FILE))?;
    write_json(&a.out.join(METRICS_FILE), &metrics_json(&cv, &cfg))?;

    let pooled = cv.pooled_predictions();
    write_json(&a.out.join("heldout_predictions.json"), &pooled)?;
    write_json(&a.out.join(COD_FILE), &evaluate_by_cod(&pooled)?)?;
    eprintln!(
        "AUROC {}  AUPRC {}  ({} folds, deployment fold {})",
        cv.summary.auroc, cv.summary.auprc, cv.summary.folds_evaluated, cv.deployment_fold
    );
    Ok(())
}

/// Checkpoint from a model directory or a direct file path.
pub fn load_checkpoint(model: &Path) -> CliResult<Checkpoint> {
    let path = if model.is_dir() { model.join(CHECKPOINT_FILE) } else { model.to_path_buf() };
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "no checkpoint at {}; run `aicare train` first",
            path.display()
        )));
    }
    Ok(Checkpoint::load(&path)?)
}

fn load_cohort_for(data: &Path, ck: &Checkpoint) -> CliResult<Cohort> {
    Ok(read_cohort_dir(data, Some(&ck.preprocessing.feature_names))?)
}

#[derive(Serialize)]
struct EvaluatedVisit {
    date: chrono::NaiveDate,
    label: aicare::data::VisitLabel,
    risk: f64,
    attention: Vec<f64>,
}

#[derive(Serialize)]
struct EvaluatedPatient {
    patient_id: String,
    visits: Vec<EvaluatedVisit>,
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.model)?;
    let cohort = load_cohort_for(&a.data, &ck)?;
    let predictor = Predictor::new(&ck)?;
    let data_end = cohort
        .data_end_date()
        .ok_or_else(|| aicare::Error::InsufficientData("cohort has no visits".into()))?;
    let labels = LabelConfig::default();
    let mut patients = Vec::new();
    let mut scored = Vec::new();
    for record in &cohort.patients {
        let preds = predictor.predict_record(record)?;
        let visit_labels = aicare::data::assign_labels(record, &labels, data_end)?;
        for (t, (label, p)) in visit_labels.iter().zip(&preds).enumerate() {
            if let Some(y) = label.target() {
                scored.push(ScoredVisit {
                    patient_id: record.patient_id.clone(),
                    visit_index: t,
                    score: p.risk,
                    label: y == 1.0,
                    group: record.outcome.group(),
                });
            }
        }
        patients.push(EvaluatedPatient {
            patient_id: record.patient_id.clone(),
            visits: record
                .visits
                .iter()
                .zip(visit_labels)
                .zip(preds)
                .map(|((v, label), p)| EvaluatedVisit { date: v.date, label, risk: p.risk, attention: p.attention })
                .collect(),
        });
    }
    create_dir(&a.out)?;
    write_json(&a.out.join("predictions.json"), &patients)?;
    let overall = MetricsReport::from_visits(&scored).ok();
    let by_cod = evaluate_by_cod(&scored)?;
    write_json(
        &a.out.join("evaluation.json"),
        &json!({
            "note": "deployment checkpoint scored on every patient of the given cohort; use the training \
                     output's cross-validated metrics for held-out performance",
            "overall": overall,
            "by_cause": by_cod,
        }),
    )?;
    Ok(())
}

pub fn interpret(a: &InterpretArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.model)?;
    let cohort = load_cohort_for(&a.data, &ck)?;
    let spec_path = a.spec.clone().unwrap_or_else(|| a.data.join(SPEC_FILE));
    let meta = if spec_path.is_file() {
        let spec: CohortSpec = serde_json::from_value(read_json_value(&spec_path)?)
            .map_err(|e| aicare::Error::Config(format!("{}: {e}", spec_path.display())))?;
        feature_meta(&spec)
    } else {
        Default::default()
    };
    let data_end = cohort
        .data_end_date()
        .ok_or_else(|| aicare::Error::InsufficientData("cohort has no visits".into()))?;
    let records = collect_importance(&ck, &cohort, &LabelConfig::default(), data_end, a.activation)?;
    let heatmap = cod_heatmap(&records, &cohort)?;
    let curves = summarize_curves(&records, &cohort.feature_names, &meta, a.activation)?;
    write_exports(&a.out, &records, &curves, &heatmap)?;
    for c in &curves.features {
        eprintln!("{:<12} {:<10} {}", c.feature, format!("{:?}", c.shape), c.advice);
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, out: &mut impl Write) -> CliResult<()> {
    let ck = load_checkpoint(&a.model)?;
    let predictor = Predictor::new(&ck)?;
    let body = read_json_value(&a.input)?;
    let record = parse_predict_request(&body, predictor.feature_names().len())
        .map_err(|errs| aicare::Error::Schema(errs.messages))?;
    let preds = predictor.predict_record(&record)?;
    preds.iter().try_for_each(aicare_service::check_prediction)?;
    let visits: Vec<Value> = record
        .visits
        .iter()
        .zip(preds)
        .map(|(v, p)| json!({ "date": v.date, "risk": p.risk, "attention": p.attention }))
        .collect();
    let text = serde_json::to_string_pretty(&json!({ "features": predictor.feature_names(), "visits": visits }))
        .map_err(aicare::Error::from)?;
    writeln!(out, "{text}").map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let mut cfg = ServiceConfig::load(&a.config)?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| io_err(Path::new("<runtime>"), e))?;
    Ok(rt.block_on(aicare_service::serve(cfg))?)
}
