//! Training configuration and the single-split training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::batch::{batch_gradient, predict_samples};
use crate::data::{LabelConfig, Sample};
use crate::error::{Error, Result};
use crate::metrics::{auprc, auroc};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Patients per mini-batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub activation: Activation,
    pub k: usize,
    /// Share of each training fold held out for early stopping.
    pub val_fraction: f64,
    pub hidden: usize,
    /// Folds trained concurrently.
    pub jobs: usize,
    pub labels: LabelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            activation: Activation::Softmax,
            k: 10,
            val_fraction: 0.1,
            hidden: 16,
            jobs: 1,
            labels: LabelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            errs.push("patience must be at least 1".into());
        }
        if self.k < 2 {
            errs.push(format!("k must be at least 2, got {}", self.k));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            errs.push(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        if self.hidden == 0 {
            errs.push("hidden must be at least 1".into());
        }
        if self.jobs == 0 {
            errs.push("jobs must be at least 1".into());
        }
        if self.labels.horizon_days <= 0 || self.labels.uncertain_days < 0 {
            errs.push("label windows must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auprc: Option<f64>,
    pub valid_auroc: Option<f64>,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters from the best-scoring epoch (the initial ones when no
    /// epoch ran).
    pub params: ModelParams,
    pub history: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_score: f64,
}

/// Flattened `(score, label)` pairs over the labeled visits of `samples`.
pub fn labeled_scores(samples: &[Sample], risks: &[Vec<f64>]) -> (Vec<f64>, Vec<bool>) {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (s, r) in samples.iter().zip(risks) {
        for (label, risk) in s.labels.iter().zip(r) {
            if let Some(y) = label.target() {
                scores.push(*risk);
                labels.push(y == 1.0);
            }
        }
    }
    (scores, labels)
}

struct Validation {
    auprc: Option<f64>,
    auroc: Option<f64>,
    loss: Option<f64>,
}

fn validate_epoch(params: &ModelParams, valid: &[Sample], activation: Activation) -> Result<Validation> {
    if valid.is_empty() {
        return Ok(Validation { auprc: None, auroc: None, loss: None });
    }
    let risks = predict_samples(params, valid, activation)?;
    let (scores, labels) = labeled_scores(valid, &risks);
    let loss = (!scores.is_empty()).then(|| {
        scores
            .iter()
            .zip(&labels)
            .map(|(p, y)| crate::model::backprop::bce_and_grad(*p, f64::from(u8::from(*y))).0)
            .sum::<f64>()
            / scores.len() as f64
    });
    Ok(Validation {
        auprc: auprc(&scores, &labels).ok(),
        auroc: auroc(&scores, &labels).ok(),
        loss,
    })
}

/// Trains on `train`, keeping the parameters with the best validation
/// AUPRC. When the validation split has no positives the score falls back
/// to negative validation loss, and to negative training loss when there is
/// no labeled validation visit at all.
pub fn train_fold(train: &[Sample], valid: &[Sample], num_features: usize, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if !train.iter().any(|s| s.num_labeled() > 0) {
        return Err(Error::Config("training split has no labeled visits".into()));
    }
    let model_cfg = ModelConfig {
        hidden: config.hidden,
        activation: config.activation,
        seed: config.seed,
        ..ModelConfig::new(num_features)
    };
    let mut params = ModelParams::init(&model_cfg)?;
    let mut best = FitResult {
        params: params.clone(),
        history: Vec::new(),
        best_epoch: None,
        best_score: f64::NEG_INFINITY,
    };
    let mut adam = AdamState::new(params.len());
    let adam_cfg = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut labeled) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<&Sample> = batch.iter().map(|i| &train[*i]).collect();
            let g = batch_gradient(&params, &samples, config.activation)?;
            loss_sum += g.loss_sum;
            labeled += g.labeled;
            if let Some((_, grad)) = g.into_mean() {
                adam_step(params.values_mut(), &grad, &mut adam, &adam_cfg)?;
            }
        }
        let train_loss = loss_sum / labeled as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        let v = validate_epoch(&params, valid, config.activation)?;
        let score = match (v.auprc, v.loss) {
            (Some(a), _) => a,
            (None, Some(l)) => -l,
            (None, None) => -train_loss,
        };
        best.history.push(EpochLog {
            epoch,
            train_loss,
            valid_auprc: v.auprc,
            valid_auroc: v.auroc,
            valid_loss: v.loss,
        });
        if score > best.best_score {
            best.best_score = score;
            best.best_epoch = Some(epoch);
            best.params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(best)
}
