use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputation::{impute_repetitions, GeneCohort};
use crate::seed::{derive_index, derive_seed, rng_from};
use crate::stats;
use crate::synth::normal_draws;
use crate::tolerance::{
    fit_repetitions, gamma_mle_weighted, moment_match, LossSet, PseudoPriorSpec, DEFAULT_ESS,
    DEFAULT_PRIOR_DRAWS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Estimator {
    /// Gamma MLE on the raw squared values.
    Empirical,
    /// Imputation of a fixed number of values, no prior.
    Noprior,
    /// Fixed imputation with the pseudo-observation prior.
    Prior,
    /// Prior with the imputed count growing as a fraction of N.
    PriorScaledM,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Empirical,
        Estimator::Noprior,
        Estimator::Prior,
        Estimator::PriorScaledM,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub delta: f64,
    pub tau2: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub p: f64,
    pub fixed_m: usize,
    pub scaled_fraction: f64,
    pub reps: usize,
    pub ess: f64,
    pub prior_draws: usize,
    /// Reference Gamma of the prior; the moment-matched truth when absent.
    pub prior_alpha: Option<f64>,
    pub prior_scale: Option<f64>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            delta: 0.2,
            tau2: 0.17,
            n_grid: vec![5, 10, 20, 50],
            replicates: 500,
            p: 0.05,
            fixed_m: 1,
            scaled_fraction: 0.2,
            reps: 25,
            ess: DEFAULT_ESS,
            prior_draws: DEFAULT_PRIOR_DRAWS,
            prior_alpha: None,
            prior_scale: None,
            seed: 0,
        }
    }
}

impl SweepConfig {
    /// `1 - p` quantile of `|X|`, `X ~ N(δ, τ²)`.
    pub fn true_value(&self) -> f64 {
        stats::folded_normal_quantile(self.delta, self.tau2.sqrt(), 1.0 - self.p)
    }

    /// Reference `(shape, scale)` of the generated prior.
    pub fn prior_reference(&self) -> Result<(f64, f64)> {
        let (a, s) = moment_match(self.delta * self.delta / self.tau2, self.tau2)?;
        Ok((self.prior_alpha.unwrap_or(a), self.prior_scale.unwrap_or(s)))
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.replicates == 0 || self.reps == 0 {
            return Err(Error::Config(
                "sweep needs sample sizes, replicates and repetitions".into(),
            ));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::Config(format!(
                "tau2 must be positive, got {}",
                self.tau2
            )));
        }
        if !(self.p > 0.0 && self.p <= 0.5) {
            return Err(Error::Config(format!(
                "p must lie in (0, 0.5], got {}",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub estimator: Estimator,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_estimate: f64,
    /// Spread of the estimate across replicates.
    pub std_error: f64,
    pub bias: f64,
    pub mse: f64,
    /// Monte Carlo standard error of `mse`.
    pub mse_mc_se: f64,
    pub true_value: f64,
    pub replicates: usize,
    pub failures: usize,
}

/// `√T` of one estimator on one synthetic draw.
fn estimate(
    est: Estimator,
    x: &[f64],
    cfg: &SweepConfig,
    prior: &PseudoPriorSpec,
    seed: u64,
) -> Result<f64> {
    let level = 1.0 - cfg.p;
    let n = x.len();
    let t = match est {
        Estimator::Empirical => {
            let losses = LossSet::unweighted("sweep", x.iter().map(|v| v * v).collect())?;
            let f = gamma_mle_weighted(&losses)?;
            stats::gamma_quantile(f.alpha_hat, f.s_hat, level)
        }
        _ => {
            let m = match est {
                Estimator::PriorScaledM => {
                    ((cfg.scaled_fraction * n as f64) - 1e-9).ceil() as usize
                }
                _ => cfg.fixed_m,
            };
            let prior = (est != Estimator::Noprior).then_some(prior);
            let cohort = GeneCohort::anonymous("sweep", x.to_vec());
            let reps = impute_repetitions(&cohort, m, cfg.reps, seed)?;
            fit_repetitions(&reps, prior)?.tolerance(cfg.p)?.0
        }
    };
    Ok(t.sqrt())
}

/// Bias, spread and MSE of the four `√T` estimators across sample sizes.
pub fn estimator_sweep(cfg: &SweepConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let truth = cfg.true_value();
    let (pa, ps) = cfg.prior_reference()?;
    let prior = PseudoPriorSpec::generated(
        pa,
        ps,
        cfg.prior_draws,
        cfg.ess,
        derive_seed(cfg.seed, "prior"),
    )?;
    let sd = cfg.tau2.sqrt();
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        let per_rep: Vec<[Option<f64>; 4]> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let label = format!("sweep/{n}");
                let mut rng = rng_from(derive_index(cfg.seed, &label, r as u64));
                let x = normal_draws(cfg.delta, sd, n, &mut rng);
                let imp_seed = derive_index(cfg.seed, &format!("{label}/impute"), r as u64);
                Estimator::ALL.map(|e| {
                    estimate(e, &x, cfg, &prior, imp_seed)
                        .ok()
                        .filter(|v| v.is_finite())
                })
            })
            .collect();
        for (k, &est) in Estimator::ALL.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().filter_map(|r| r[k]).collect();
            let failures = cfg.replicates - vals.len();
            if vals.len() < 2 {
                return Err(Error::Numerical(format!(
                    "{est:?} failed on almost every replicate at N = {n}"
                )));
            }
            let sq: Vec<f64> = vals.iter().map(|v| (v - truth).powi(2)).collect();
            let mean = stats::mean(&vals);
            out.push(SweepResult {
                estimator: est,
                n,
                mean_estimate: mean,
                std_error: stats::std_dev(&vals),
                bias: mean - truth,
                mse: stats::mean(&sq),
                mse_mc_se: stats::std_dev(&sq) / (sq.len() as f64).sqrt(),
                true_value: truth,
                replicates: vals.len(),
                failures,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_shape() {
        let cfg = SweepConfig {
            n_grid: vec![10, 20],
            replicates: 30,
            reps: 5,
            seed: 7,
            ..SweepConfig::default()
        };
        let r = estimator_sweep(&cfg).unwrap();
        assert_eq!(r.len(), 8);
        for row in &r {
            // mse = bias² + variance (population) up to the n/(n-1) factor
            let var = row.std_error.powi(2) * (row.replicates as f64 - 1.0) / row.replicates as f64;
            assert!((row.mse - (row.bias.powi(2) + var)).abs() < 1e-10);
        }
        assert_eq!(estimator_sweep(&cfg).unwrap(), r);
    }

    #[test]
    fn truth_is_folded_normal_quantile() {
        let v = SweepConfig::default().true_value();
        assert!((v - 0.894_583_453_142_840_3).abs() < 1e-6, "{v}");
    }
}
