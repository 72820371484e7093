use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{Error, Result};

/// A differentiable unnormalized log density on ℝ^d.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x`; writes the gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(x, &mut g)
    }
}

/// Targets whose likelihood factorizes over observations and can report
/// per-observation score vectors (gradients of each log-likelihood term).
pub trait ObservationScores: LogDensity {
    fn observation_scores(&self, x: &[f64]) -> Vec<Vec<f64>>;
}

/// ln(e^z + e^{-z}) without overflow.
#[inline]
pub(crate) fn log_two_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Log density of the SoftLaplace distribution,
/// `f(x) = (2/π) / (τ (e^z + e^{-z}))` with `z = (x - loc) / τ`.
pub fn softlaplace_logpdf(x: f64, loc: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "SoftLaplace scale must be positive, got {scale}"
        )));
    }
    let z = (x - loc) / scale;
    Ok(FRAC_2_PI.ln() - scale.ln() - log_two_cosh(z))
}

/// CDF of the SoftLaplace distribution, `(2/π) atan(e^z)`.
pub fn softlaplace_cdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    2.0 / PI * z.exp().atan()
}

/// Quantile of the SoftLaplace distribution, `loc + τ ln tan(πu/2)`.
pub fn softlaplace_quantile(u: f64, loc: f64, scale: f64) -> f64 {
    loc + scale * (0.5 * PI * u).tan().ln()
}
