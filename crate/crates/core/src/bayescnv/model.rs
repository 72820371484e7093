//! The hierarchical per-sample CNV model.
//!
//! ```text
//! μ0 ~ N(0, sd0²)            σ² ~ InvGamma(α_σ, β_σ)
//! μ_j | μ0, σ² ~ N(μ0, σ²)   τ0² ~ InvGamma(α_τ0, β_τ0)
//! z_j² ~ InvGamma(α_τ, β_τ)  τ_j² = τ0² z_j²
//! X_jk | μ_j, τ_j ~ SoftLaplace(μ_j, τ_j)
//! ```
//!
//! Variances are sampled on the log scale; the log-Jacobian of each
//! transform is part of the density so every real vector is a valid state.
//! The state vector is laid out as
//! `[μ0, ln σ², μ_1..μ_J, ln z_1²..ln z_J², ln τ0²]`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::density::{log_two_cosh, LogDensity, ObservationScores};
use crate::error::{Error, Result};
use crate::panel_io::LcnrMatrix;
use crate::stats;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyperParams {
    pub prior_mu0_sd: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    pub alpha_tau0: f64,
    pub beta_tau0: f64,
    pub alpha_tau: f64,
    pub beta_tau: f64,
}

impl Default for ModelHyperParams {
    fn default() -> Self {
        ModelHyperParams {
            prior_mu0_sd: 10.0,
            alpha_sigma: 3.0,
            beta_sigma: 0.5,
            alpha_tau0: 3.0,
            beta_tau0: 0.5,
            alpha_tau: 3.0,
            beta_tau: 0.5,
        }
    }
}

impl ModelHyperParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.prior_mu0_sd,
            self.alpha_sigma,
            self.beta_sigma,
            self.alpha_tau0,
            self.beta_tau0,
            self.alpha_tau,
            self.beta_tau,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "hyperparameters must be strictly positive: {self:?}"
            )))
        }
    }
}

/// Observation model for amplicon lCNRs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Likelihood {
    SoftLaplace,
    /// Normal with standard deviation τ_j; used for analytic cross-checks.
    Gaussian,
}

impl Likelihood {
    /// `(log f, ∂/∂μ, ∂/∂ln τ)` at `x` for location `mu` and scale `exp(log_tau)`.
    #[inline]
    fn eval(self, x: f64, mu: f64, log_tau: f64) -> (f64, f64, f64) {
        let tau = log_tau.exp();
        let z = (x - mu) / tau;
        match self {
            Likelihood::SoftLaplace => {
                let t = z.tanh();
                (
                    std::f64::consts::FRAC_2_PI.ln() - log_tau - log_two_cosh(z),
                    t / tau,
                    -1.0 + z * t,
                )
            }
            Likelihood::Gaussian => (-0.5 * LN_2PI - log_tau - 0.5 * z * z, z / tau, -1.0 + z * z),
        }
    }
}

/// Unconstrained parameter state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub mu0: f64,
    pub log_sigma2: f64,
    pub mu: Vec<f64>,
    pub log_z2: Vec<f64>,
    pub log_tau0_2: f64,
}

impl ModelState {
    pub fn dim_for(n_genes: usize) -> usize {
        2 * n_genes + 3
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim_for(self.mu.len()));
        v.push(self.mu0);
        v.push(self.log_sigma2);
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.log_z2);
        v.push(self.log_tau0_2);
        v
    }

    pub fn from_slice(x: &[f64], n_genes: usize) -> Self {
        assert_eq!(x.len(), Self::dim_for(n_genes), "state dimension");
        ModelState {
            mu0: x[0],
            log_sigma2: x[1],
            mu: x[2..2 + n_genes].to_vec(),
            log_z2: x[2 + n_genes..2 + 2 * n_genes].to_vec(),
            log_tau0_2: x[2 + 2 * n_genes],
        }
    }
}

/// Index of μ_j in the flat state vector.
pub fn mu_index(j: usize) -> usize {
    2 + j
}

/// log density of ln v when v ~ InvGamma(a, b), including the Jacobian.
#[inline]
fn log_invgamma_logscale(u: f64, a: f64, b: f64) -> (f64, f64) {
    let e = (-u).exp();
    (a * b.ln() - ln_gamma(a) - a * u - b * e, -a + b * e)
}

/// Posterior of the hierarchical model for one sample, optionally tempered.
#[derive(Debug, Clone)]
pub struct CnvPosterior {
    data: Vec<Vec<f64>>,
    hp: ModelHyperParams,
    likelihood: Likelihood,
    /// Exponent applied to the likelihood (1 for the standard posterior).
    likelihood_weight: f64,
}

impl CnvPosterior {
    pub fn new(lcnr: &LcnrMatrix, hp: ModelHyperParams) -> Result<Self> {
        Self::from_values(lcnr.values.clone(), hp)
    }

    pub fn from_values(data: Vec<Vec<f64>>, hp: ModelHyperParams) -> Result<Self> {
        hp.validate()?;
        if data.is_empty() || data.iter().any(Vec::is_empty) {
            return Err(Error::invalid("every gene needs at least one amplicon"));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite lCNR value"));
        }
        Ok(CnvPosterior {
            data,
            hp,
            likelihood: Likelihood::SoftLaplace,
            likelihood_weight: 1.0,
        })
    }

    pub fn with_likelihood(mut self, likelihood: Likelihood) -> Self {
        self.likelihood = likelihood;
        self
    }

    /// Temper the likelihood: `p(θ) ∏ p(x|θ)^η`.
    pub fn with_likelihood_weight(mut self, eta: f64) -> Self {
        self.likelihood_weight = eta;
        self
    }

    pub fn n_genes(&self) -> usize {
        self.data.len()
    }

    pub fn hyper(&self) -> &ModelHyperParams {
        &self.hp
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// Data-driven starting point for optimization.
    pub fn initial_state(&self) -> ModelState {
        let flat: Vec<f64> = self.data.iter().flatten().copied().collect();
        let mu: Vec<f64> = self.data.iter().map(|g| stats::median(g)).collect();
        let resid: Vec<f64> = self
            .data
            .iter()
            .zip(&mu)
            .flat_map(|(g, m)| g.iter().map(move |x| x - m))
            .collect();
        let scale = (stats::MAD_TO_SD * stats::mad(&resid)).max(1e-3);
        let spread = stats::variance(&mu).max(1e-2);
        ModelState {
            mu0: stats::median(&flat),
            log_sigma2: spread.ln(),
            mu,
            log_z2: vec![0.0; self.data.len()],
            log_tau0_2: (scale * scale).ln(),
        }
    }

    /// Log prior (with Jacobian terms) and log likelihood, split.
    pub fn log_prior_and_likelihood(&self, x: &[f64]) -> (f64, f64) {
        let mut g = vec![0.0; self.dim()];
        self.eval(x, &mut g)
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> (f64, f64) {
        let j_n = self.data.len();
        let hp = &self.hp;
        let mu0 = x[0];
        let u = x[1];
        let w = x[2 + 2 * j_n];
        grad.iter_mut().for_each(|g| *g = 0.0);

        let sd0 = hp.prior_mu0_sd;
        let mut prior = -0.5 * LN_2PI - sd0.ln() - 0.5 * mu0 * mu0 / (sd0 * sd0);
        grad[0] = -mu0 / (sd0 * sd0);

        let (lp, dlp) = log_invgamma_logscale(u, hp.alpha_sigma, hp.beta_sigma);
        prior += lp;
        grad[1] = dlp;
        let (lp, dlp) = log_invgamma_logscale(w, hp.alpha_tau0, hp.beta_tau0);
        prior += lp;
        grad[2 + 2 * j_n] = dlp;

        let inv_s2 = (-u).exp();
        let mut loglik = 0.0;
        let eta = self.likelihood_weight;
        for (j, obs) in self.data.iter().enumerate() {
            let mu = x[2 + j];
            let v = x[2 + j_n + j];
            let d = mu - mu0;
            prior += -0.5 * LN_2PI - 0.5 * u - 0.5 * d * d * inv_s2;
            grad[0] += d * inv_s2;
            grad[1] += -0.5 + 0.5 * d * d * inv_s2;
            grad[2 + j] = -d * inv_s2;

            let (lp, dlp) = log_invgamma_logscale(v, hp.alpha_tau, hp.beta_tau);
            prior += lp;
            grad[2 + j_n + j] = dlp;

            let log_tau = 0.5 * (w + v);
            let (mut ll, mut dmu, mut dlt) = (0.0, 0.0, 0.0);
            for &xv in obs {
                let (l, a, b) = self.likelihood.eval(xv, mu, log_tau);
                ll += l;
                dmu += a;
                dlt += b;
            }
            loglik += ll;
            grad[2 + j] += eta * dmu;
            grad[2 + j_n + j] += eta * 0.5 * dlt;
            grad[2 + 2 * j_n] += eta * 0.5 * dlt;
        }
        (prior, loglik)
    }
}

impl LogDensity for CnvPosterior {
    fn dim(&self) -> usize {
        ModelState::dim_for(self.data.len())
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (prior, loglik) = self.eval(x, grad);
        prior + self.likelihood_weight * loglik
    }
}

impl ObservationScores for CnvPosterior {
    fn observation_scores(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let j_n = self.data.len();
        let d = self.dim();
        let w = x[2 + 2 * j_n];
        let mut out = Vec::new();
        for (j, obs) in self.data.iter().enumerate() {
            let mu = x[2 + j];
            let log_tau = 0.5 * (w + x[2 + j_n + j]);
            for &xv in obs {
                let (_, a, b) = self.likelihood.eval(xv, mu, log_tau);
                let mut s = vec![0.0; d];
                s[2 + j] = self.likelihood_weight * a;
                s[2 + j_n + j] = self.likelihood_weight * 0.5 * b;
                s[2 + 2 * j_n] = self.likelihood_weight * 0.5 * b;
                out.push(s);
            }
        }
        out
    }
}
