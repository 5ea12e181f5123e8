//! Interpretable dynamic mortality-risk prediction for longitudinal clinical
//! records.
//!
//! Each dynamic feature is encoded by its own bidirectional GRU channel, a
//! baseline vector is embedded alongside, and an attention block queried by
//! the mean-pooled context recalibrates feature importance per visit. The
//! crate also ships the labeling protocol, cross-validated training, ranking
//! metrics and the attention analytics used to read turning points off the
//! trained model.

pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
