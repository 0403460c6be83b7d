//! Central finite-difference gradient checking.
//!
//! Uses the fourth-order five-point stencil. With the plain two-point
//! formula, roundoff and truncation both land near 1e-10 for unit-scale
//! objectives, which swamps entries whose true gradient is ~1e-6.

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// `|a - n| / max(|a|, |n|, 1e-8)` per coordinate.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of `f` around `params`.
/// `eps` is the stencil step; 1e-3 suits smooth unit-scale objectives.
pub fn gradcheck<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<GradcheckReport, ModelError>
where
    F: Fn(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let mut x = params.to_vec();
    let mut rel = Vec::with_capacity(params.len());
    let (mut worst, mut worst_index) = (0.0, 0);
    for k in 0..x.len() {
        let orig = x[k];
        let mut at = |d: f64| {
            x[k] = orig + d;
            f(&x)
        };
        let (m2, m1, p1, p2) = (at(-2.0 * eps), at(-eps), at(eps), at(2.0 * eps));
        x[k] = orig;
        let numeric = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * eps);
        let a = analytic[k];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(ModelError::NonFiniteGradient(k));
        }
        let e = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if e > worst {
            worst = e;
            worst_index = k;
        }
        rel.push(e);
    }
    Ok(GradcheckReport { relative_errors: rel, max_relative_error: worst, worst_index })
}
