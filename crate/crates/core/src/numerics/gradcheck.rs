use crate::error::{Error, Result};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
}

/// Compares `analytic` with central differences of `f` around `theta`.
pub fn grad_check<F>(mut f: F, theta: &[f64], analytic: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::Config(alloc::format!("finite-difference step must be > 0, got {step}")));
    }
    if analytic.len() != theta.len() {
        return Err(Error::Shape {
            op: "grad_check",
            expected: (theta.len(), 1),
            found: (analytic.len(), 1),
        });
    }
    let mut point = theta.to_vec();
    let mut numeric = Vec::with_capacity(theta.len());
    let mut max_rel_error = 0.0;
    let mut worst_index = None;
    for i in 0..theta.len() {
        point[i] = theta[i] + step;
        let plus = f(&point);
        point[i] = theta[i] - step;
        let minus = f(&point);
        point[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                stage: "grad_check",
                detail: alloc::format!("objective at coordinate {i}: {plus} / {minus}"),
            });
        }
        let n = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - n).abs() / f64::max(1e-8, a.abs() + n.abs());
        if rel > max_rel_error || worst_index.is_none() {
            max_rel_error = f64::max(rel, max_rel_error);
            worst_index = Some(i);
        }
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let r = grad_check(|t| t.iter().map(|v| v * v).sum(), &[1.0, 2.0], &[2.0, 4.0], 1e-5)
            .unwrap();
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn constant_function() {
        let r = grad_check(|_| 3.0, &[1.0, -2.0, 0.5], &[0.0; 3], 1e-5).unwrap();
        assert!(r.max_rel_error <= 1e-9);
        assert!(r.numeric.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let r = grad_check(|t| t[0] * t[0], &[1.0], &[3.0], 1e-5).unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn non_finite_objective_fails() {
        let r = grad_check(|_| f64::NAN, &[0.0], &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}
