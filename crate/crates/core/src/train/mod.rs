//! Masked cross-entropy objective, Adam and the cross-validation driver.

pub mod adam;
pub mod batch;
pub mod cv;
pub mod fold;
pub mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
#[cfg(feature = "parallel")]
pub use batch::batch_gradient_parallel;
pub use batch::{batch_gradient, batch_gradient_sequential, predict_samples, BatchGradient, CHUNK};
pub use cv::{cross_validate, run_fold, CvResult, CvSummary, FoldResult};
pub use fold::{labeled_scores, train_fold, EpochLog, FitResult, TrainConfig};
pub use loss::{masked_bce, masked_bce_grad};
