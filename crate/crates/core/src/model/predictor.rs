//! Inference on raw patient records with a checkpoint's preprocessing.

use crate::data::{PatientRecord, Preprocessor};
use crate::error::Result;
use crate::numerics::Activation;

use super::checkpoint::Checkpoint;
use super::forward::{predict_visits, VisitPrediction};
use super::params::ModelParams;

#[derive(Debug, Clone)]
pub struct Predictor {
    pub params: ModelParams,
    pub preprocessing: Preprocessor,
    pub activation: Activation,
}

impl Predictor {
    /// Uses the activation the checkpoint was trained with.
    pub fn new(checkpoint: &Checkpoint) -> Result<Self> {
        let params = checkpoint.model_params()?;
        Ok(Self {
            activation: params.config().activation,
            params,
            preprocessing: checkpoint.preprocessing.clone(),
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn feature_names(&self) -> &[String] {
        &self.preprocessing.feature_names
    }

    /// Imputes and normalizes `record`, then predicts at every visit.
    pub fn predict_record(&self, record: &PatientRecord) -> Result<Vec<VisitPrediction>> {
        let (input, _) = self.preprocessing.encode(record)?;
        predict_visits(&self.params, &input, self.activation)
    }
}
