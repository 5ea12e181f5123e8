use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// Scalars are represented with shape `[1]`, vectors with `[n]` and
/// matrices with `[rows, cols]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Domain(format!(
                "tensor shape must be non-empty with positive extents, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Panics on an empty slice; use [`Tensor::new`] for fallible construction.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Usage(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `w · x + b` for a `[m, n]` matrix, `[m]` bias and `[n]` input.
pub fn affine(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (m, n) = matrix_dims(w, "affine")?;
    if !x.is_vector() || x.len() != n {
        return Err(Error::dim("affine", w.shape(), x.shape()));
    }
    if !b.is_vector() || b.len() != m {
        return Err(Error::dim("affine", w.shape(), b.shape()));
    }
    let mut out = b.data.clone();
    matvec_acc(&w.data, m, n, &x.data, &mut out);
    Ok(Tensor::vector(out))
}

pub(crate) fn matrix_dims(w: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match w.shape() {
        [m, n] => Ok((*m, *n)),
        other => Err(Error::dim(op, other, &[0, 0])),
    }
}

/// `out += w · x` with `w` stored row-major as `m × n`.
pub(crate) fn matvec_acc(w: &[f64], m: usize, n: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), m * n);
    for (row, o) in w.chunks_exact(n).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
    debug_assert_eq!(out.len(), m);
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let out = affine(
            &Tensor::identity(2),
            &Tensor::zeros(&[2]),
            &Tensor::vector(vec![3.0, -1.0]),
        )
        .unwrap();
        assert_eq!(out.data(), &[3.0, -1.0]);
    }

    #[test]
    fn affine_zero_weights_returns_bias() {
        let out = affine(
            &Tensor::zeros(&[1, 3]),
            &Tensor::vector(vec![0.5]),
            &Tensor::vector(vec![7.0, -2.0, 1e6]),
        )
        .unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn affine_matches_hand_product() {
        let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = affine(&w, &Tensor::zeros(&[2]), &Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let w = Tensor::zeros(&[2, 3]);
        let err = affine(&w, &Tensor::zeros(&[2]), &Tensor::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn new_rejects_inconsistent_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }
}
