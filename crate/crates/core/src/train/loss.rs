//! Masked binary cross-entropy over visit predictions.

use crate::data::VisitLabel;
use crate::error::{Error, Result};
use crate::model::backprop::bce_and_grad;

fn check(predictions: &[f64], labels: &[VisitLabel]) -> Result<usize> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("masked_bce", &[predictions.len()], &[labels.len()]));
    }
    let count = labels.iter().filter(|l| l.is_labeled()).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(count)
}

/// Mean BCE over Low/High visits; Uncertain visits are skipped.
pub fn masked_bce(predictions: &[f64], labels: &[VisitLabel]) -> Result<f64> {
    masked_bce_grad(predictions, labels).map(|(l, _)| l)
}

/// Loss and its gradient with respect to each prediction. Entries at
/// Uncertain visits are exactly zero.
pub fn masked_bce_grad(predictions: &[f64], labels: &[VisitLabel]) -> Result<(f64, Vec<f64>)> {
    let count = check(predictions, labels)? as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    for ((p, label), g) in predictions.iter().zip(labels).zip(&mut grad) {
        let Some(y) = label.target() else { continue };
        let (l, d) = bce_and_grad(*p, y);
        loss += l;
        *g = d / count;
    }
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use VisitLabel::*;

    #[test]
    fn half_on_positive_is_ln2() {
        assert!((masked_bce(&[0.5], &[High]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn uncertain_visits_are_ignored() {
        let a = masked_bce(&[0.5, 0.99], &[High, Uncertain]).unwrap();
        assert_eq!(a, masked_bce(&[0.5], &[High]).unwrap());
        let (_, g) = masked_bce_grad(&[0.3, 0.2, 0.9], &[Low, Uncertain, High]).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn perfect_prediction_tends_to_zero() {
        assert!(masked_bce(&[1.0 - 1e-12, 1e-12], &[High, Low]).unwrap() < 1e-11);
    }

    #[test]
    fn all_uncertain_is_empty_mask() {
        assert!(matches!(masked_bce(&[0.4, 0.6], &[Uncertain, Uncertain]), Err(Error::EmptyMask)));
    }
}
