//! Fully Gaussian reference targets with closed-form posteriors. They share
//! the sampler, optimizer and Laplace code paths with [`CnvPosterior`] and
//! exist so those paths can be checked against exact algebra.
//!
//! [`CnvPosterior`]: super::model::CnvPosterior

use super::density::{LogDensity, ObservationScores};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Two-level Gaussian location model with known variances:
/// `μ0 ~ N(0, sd0²)`, `μ_j ~ N(μ0, σ²)`, `x_jk ~ N(μ_j, τ_j²)`.
/// The state is `[μ0, μ_1..μ_J]`.
#[derive(Debug, Clone)]
pub struct GaussianLocationModel {
    pub data: Vec<Vec<f64>>,
    pub prior_mu0_sd: f64,
    pub sigma2: f64,
    pub tau2: Vec<f64>,
}

impl GaussianLocationModel {
    pub fn new(data: Vec<Vec<f64>>, prior_mu0_sd: f64, sigma2: f64, tau2: Vec<f64>) -> Self {
        assert_eq!(data.len(), tau2.len());
        GaussianLocationModel {
            data,
            prior_mu0_sd,
            sigma2,
            tau2,
        }
    }
}

impl LogDensity for GaussianLocationModel {
    fn dim(&self) -> usize {
        self.data.len() + 1
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let s0 = self.prior_mu0_sd * self.prior_mu0_sd;
        let mu0 = x[0];
        let mut lp = -0.5 * (LN_2PI + s0.ln()) - 0.5 * mu0 * mu0 / s0;
        grad[0] = -mu0 / s0;
        for (j, obs) in self.data.iter().enumerate() {
            let mu = x[1 + j];
            let d = mu - mu0;
            lp += -0.5 * (LN_2PI + self.sigma2.ln()) - 0.5 * d * d / self.sigma2;
            grad[0] += d / self.sigma2;
            grad[1 + j] = -d / self.sigma2;
            let t2 = self.tau2[j];
            for &v in obs {
                let r = v - mu;
                lp += -0.5 * (LN_2PI + t2.ln()) - 0.5 * r * r / t2;
                grad[1 + j] += r / t2;
            }
        }
        lp
    }
}

impl ObservationScores for GaussianLocationModel {
    fn observation_scores(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (j, obs) in self.data.iter().enumerate() {
            for &v in obs {
                let mut s = vec![0.0; self.dim()];
                s[1 + j] = (v - x[1 + j]) / self.tau2[j];
                out.push(s);
            }
        }
        out
    }
}

/// Standard normal target on ℝ^d.
#[derive(Debug, Clone, Copy)]
pub struct StdNormalTarget {
    pub dim: usize,
}

impl LogDensity for StdNormalTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for (g, &v) in grad.iter_mut().zip(x) {
            *g = -v;
            lp -= 0.5 * v * v;
        }
        lp
    }
}
