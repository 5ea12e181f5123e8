use crate::error::{Error, Result};

/// Largest relative disagreement between `analytic` and central differences
/// of `f` around `theta`.
///
/// Per coordinate the error is
/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)` with
/// `numeric = (f(θ + ε·e_i) − f(θ − ε·e_i)) / 2ε`.
pub fn finite_diff_check<F>(f: F, analytic: &[f64], theta: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Config(format!(
            "finite-difference step {eps} outside [1e-7, 1e-4]"
        )));
    }
    if analytic.len() != theta.len() {
        return Err(Error::dim("finite_diff_check", &[analytic.len()], &[theta.len()]));
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = f(&probe);
        probe[i] = theta[i] - eps;
        let down = f(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is not finite when probing coordinate {i}"
            )));
        }
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact_to_second_order() {
        let err = finite_diff_check(|t| t[0] * t[0], &[6.0], &[3.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = finite_diff_check(|_| 4.2, &[0.0, 0.0], &[1.0, -1.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = finite_diff_check(|t| t[0] * t[0], &[5.0], &[3.0], 1e-5).unwrap();
        assert!(err > 0.05);
    }

    #[test]
    fn non_finite_probe_reports_coordinate() {
        let err = finite_diff_check(
            |t| if t[1] > 0.0 { f64::NAN } else { 0.0 },
            &[0.0, 0.0],
            &[0.0, 0.0],
            1e-5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn step_outside_range_is_rejected() {
        assert!(finite_diff_check(|_| 0.0, &[0.0], &[0.0], 1e-2).is_err());
    }
}
