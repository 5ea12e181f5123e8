//! Mini-batch loss and gradient.
//!
//! Patients are grouped into fixed chunks of [`CHUNK`]; each chunk is summed
//! sequentially and chunk totals are combined in order. The result is the
//! same bit pattern whether chunks run on one thread or many.

use crate::data::Sample;
use crate::error::Result;
use crate::model::{patient_loss_grad, ModelParams};
use crate::numerics::Activation;

/// Patients per reduction chunk.
pub const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    /// Sum of per-visit BCE over labeled visits.
    pub loss_sum: f64,
    pub labeled: usize,
    /// Gradient of `loss_sum` (not yet divided by `labeled`).
    pub grad: Vec<f64>,
}

impl BatchGradient {
    fn zeros(len: usize) -> Self {
        Self { loss_sum: 0.0, labeled: 0, grad: vec![0.0; len] }
    }

    fn absorb(&mut self, other: &BatchGradient) {
        self.loss_sum += other.loss_sum;
        self.labeled += other.labeled;
        self.grad.iter_mut().zip(&other.grad).for_each(|(a, b)| *a += b);
    }

    /// Mean loss per labeled visit; `None` when nothing was labeled.
    pub fn mean_loss(&self) -> Option<f64> {
        (self.labeled > 0).then(|| self.loss_sum / self.labeled as f64)
    }

    /// Divides loss and gradient by the labeled-visit count.
    pub fn into_mean(mut self) -> Option<(f64, Vec<f64>)> {
        let n = self.labeled as f64;
        let loss = self.mean_loss()?;
        self.grad.iter_mut().for_each(|g| *g /= n);
        Some((loss, self.grad))
    }
}

fn chunk_gradient(params: &ModelParams, chunk: &[&Sample], activation: Activation) -> Result<BatchGradient> {
    let mut acc = BatchGradient::zeros(params.len());
    for sample in chunk {
        let (loss, count) = patient_loss_grad(params, sample, activation, &mut acc.grad)?;
        acc.loss_sum += loss;
        acc.labeled += count;
    }
    Ok(acc)
}

fn reduce(params: &ModelParams, parts: Vec<BatchGradient>) -> BatchGradient {
    let mut total = BatchGradient::zeros(params.len());
    for p in &parts {
        total.absorb(p);
    }
    total
}

pub fn batch_gradient_sequential(
    params: &ModelParams,
    batch: &[&Sample],
    activation: Activation,
) -> Result<BatchGradient> {
    let parts = batch
        .chunks(CHUNK)
        .map(|c| chunk_gradient(params, c, activation))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(params, parts))
}

#[cfg(feature = "parallel")]
pub fn batch_gradient_parallel(
    params: &ModelParams,
    batch: &[&Sample],
    activation: Activation,
) -> Result<BatchGradient> {
    use rayon::prelude::*;
    let parts = batch
        .par_chunks(CHUNK)
        .map(|c| chunk_gradient(params, c, activation))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(params, parts))
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn batch_gradient(params: &ModelParams, batch: &[&Sample], activation: Activation) -> Result<BatchGradient> {
    #[cfg(feature = "parallel")]
    {
        batch_gradient_parallel(params, batch, activation)
    }
    #[cfg(not(feature = "parallel"))]
    {
        batch_gradient_sequential(params, batch, activation)
    }
}

/// Per-visit risks for every sample, in order.
pub fn predict_samples(params: &ModelParams, samples: &[Sample], activation: Activation) -> Result<Vec<Vec<f64>>> {
    let one = |s: &Sample| -> Result<Vec<f64>> {
        Ok(crate::model::predict_visits(params, &s.input, activation)?
            .into_iter()
            .map(|p| p.risk)
            .collect())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        samples.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        samples.iter().map(one).collect()
    }
}
