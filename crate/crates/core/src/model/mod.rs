//! Multi-channel bi-GRU encoder with attention-based feature recalibration.

pub mod backprop;
pub mod checkpoint;
pub mod forward;
pub mod graph;
pub mod params;
pub mod predictor;

pub use backprop::patient_loss_grad;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use forward::{
    attention_weights, embed_baseline, encode_channel, forward_prefix, forward_prefix_with, gru_cell,
    predict_head, predict_visits, squeeze, VisitPrediction,
};
pub use graph::{patient_loss_grad_tape, record_patient_loss};
pub use params::{ChannelParams, GruParams, ModelConfig, ModelParams, ParamEntry};
pub use predictor::Predictor;
