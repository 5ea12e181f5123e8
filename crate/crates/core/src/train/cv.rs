//! k-fold cross-validation driver.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::predict_samples;
use super::fold::{train_fold, EpochLog, TrainConfig};
use crate::data::{kfold_split, Cohort, FoldPlan, Preprocessor, Sample};
use crate::error::{Error, Result};
use crate::metrics::{MeanStd, MetricsReport, ScoredVisit};
use crate::model::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub valid_score: f64,
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// `None` when the held-out fold lacks one of the classes.
    pub test: Option<MetricsReport>,
    /// Held-out predictions at labeled visits.
    pub predictions: Vec<ScoredVisit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub auroc: MeanStd,
    pub auprc: MeanStd,
    pub folds_evaluated: usize,
    /// Metrics over the pooled held-out predictions of all folds.
    pub pooled: Option<MetricsReport>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub summary: CvSummary,
    /// Fold whose checkpoint scored best on its validation split.
    pub deployment_fold: usize,
}

impl CvResult {
    pub fn deployment(&self) -> &Checkpoint {
        &self.folds[self.deployment_fold].checkpoint
    }

    pub fn pooled_predictions(&self) -> Vec<ScoredVisit> {
        self.folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect()
    }
}

/// Splits training ids into (train, valid) with a seeded shuffle.
fn split_validation(ids: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut ids = ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_valid = (fraction * ids.len() as f64).round() as usize;
    if fraction > 0.0 && ids.len() >= 2 {
        n_valid = n_valid.clamp(1, ids.len() - 1);
    }
    let valid = ids.split_off(ids.len() - n_valid);
    (ids, valid)
}

fn scored(samples: &[Sample], risks: &[Vec<f64>]) -> Vec<ScoredVisit> {
    let mut out = Vec::new();
    for (s, r) in samples.iter().zip(risks) {
        for (t, (label, risk)) in s.labels.iter().zip(r).enumerate() {
            if let Some(y) = label.target() {
                out.push(ScoredVisit {
                    patient_id: s.patient_id.clone(),
                    visit_index: t,
                    score: *risk,
                    label: y == 1.0,
                    group: s.group,
                });
            }
        }
    }
    out
}

pub fn run_fold(cohort: &Cohort, plan: &FoldPlan, fold: usize, config: &TrainConfig) -> Result<FoldResult> {
    let data_end = cohort
        .data_end_date()
        .ok_or_else(|| Error::InsufficientData("cohort has no visits".into()))?;
    let fold_seed = config.seed.wrapping_add(fold as u64);
    let (train_ids, valid_ids) = split_validation(&plan.training_ids(fold), config.val_fraction, fold_seed);
    let test_ids = plan.folds[fold].clone();
    let train_cohort = cohort.subset(&train_ids)?;
    let prep = Preprocessor::fit(&train_cohort)?;
    let train = prep.samples(&train_cohort, &config.labels, data_end)?;
    let valid = prep.samples(&cohort.subset(&valid_ids)?, &config.labels, data_end)?;
    let test = prep.samples(&cohort.subset(&test_ids)?, &config.labels, data_end)?;

    let fold_cfg = TrainConfig { seed: fold_seed, ..config.clone() };
    let fit = train_fold(&train, &valid, cohort.num_features(), &fold_cfg)?;
    let risks = predict_samples(&fit.params, &test, config.activation)?;
    let predictions = scored(&test, &risks);
    let test_metrics = MetricsReport::from_visits(&predictions).ok();
    Ok(FoldResult {
        fold,
        checkpoint: Checkpoint::new(&fit.params, &prep)?,
        history: fit.history,
        best_epoch: fit.best_epoch,
        valid_score: fit.best_score,
        train_ids,
        valid_ids,
        test_ids,
        test: test_metrics,
        predictions,
    })
}

fn run_folds(cohort: &Cohort, plan: &FoldPlan, config: &TrainConfig) -> Result<Vec<FoldResult>> {
    let k = plan.k();
    #[cfg(feature = "parallel")]
    if config.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        return pool.install(|| (0..k).into_par_iter().map(|i| run_fold(cohort, plan, i, config)).collect());
    }
    (0..k).map(|i| run_fold(cohort, plan, i, config)).collect()
}

/// Trains one model per fold with fold-local preprocessing and reports the
/// held-out metrics as mean and sample standard deviation.
pub fn cross_validate(cohort: &Cohort, config: &TrainConfig) -> Result<CvResult> {
    config.validate()?;
    let plan = kfold_split(&cohort.patient_ids(), config.k, config.seed)?;
    let folds = run_folds(cohort, &plan, config)?;

    let mut notices = Vec::new();
    let (mut aurocs, mut auprcs) = (Vec::new(), Vec::new());
    for f in &folds {
        match &f.test {
            Some(m) => {
                aurocs.push(m.auroc);
                auprcs.push(m.auprc);
            }
            None => notices.push(format!("fold {} held-out split lacks a class; excluded from the summary", f.fold)),
        }
    }
    if aurocs.is_empty() {
        return Err(Error::InsufficientData("no fold has both classes in its held-out split".into()));
    }
    let pooled: Vec<ScoredVisit> = folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
    let deployment_fold = folds
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, f)| if f.valid_score > best.1 { (i, f.valid_score) } else { best })
        .0;
    Ok(CvResult {
        plan,
        summary: CvSummary {
            auroc: MeanStd::of(&aurocs)?,
            auprc: MeanStd::of(&auprcs)?,
            folds_evaluated: aurocs.len(),
            pooled: MetricsReport::from_visits(&pooled).ok(),
            notices,
        },
        folds,
        deployment_fold,
    })
}
