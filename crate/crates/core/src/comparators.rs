//! Baseline intervals the tolerance method is compared against: the plain
//! HPD interval, the HPD of a coarsened (tempered) posterior, a sandwich
//! normal approximation, and a Gamma tolerance with the shape pinned at 1/2.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bayescnv::optimize::{neg_hessian_fd, symmetrize};
use crate::bayescnv::{
    hmc_sample, hpd_interval, map_estimate, mu_index, CnvPosterior, HmcSettings, Interval,
    MapSettings, ModelHyperParams, ObservationScores, PosteriorSummary,
};
use crate::error::{Error, Result};
use crate::panel_io::LcnrMatrix;
use crate::stats;
use crate::tolerance::{tolerance_quantile, GammaToleranceModel};

/// Offset in the default coarsening rate `n̄ / (n̄ + ζ)`.
pub const COARSENING_ZETA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Hpd,
    Coarsened,
    Sandwich,
    Mse,
    /// The Gamma tolerance method itself.
    Gamma,
}

impl Method {
    pub const COMPARATORS: [Method; 4] = [
        Method::Hpd,
        Method::Coarsened,
        Method::Sandwich,
        Method::Mse,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hpd => "hpd",
            Method::Coarsened => "coarsened",
            Method::Sandwich => "sandwich",
            Method::Mse => "mse",
            Method::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hpd" => Ok(Method::Hpd),
            "coarsened" => Ok(Method::Coarsened),
            "sandwich" => Ok(Method::Sandwich),
            "mse" => Ok(Method::Mse),
            "gamma" => Ok(Method::Gamma),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorInterval {
    pub method: Method,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub sample_id: String,
    pub gene: String,
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ComparatorInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "interval level must lie in (0, 1), got {level}"
        )))
    }
}

/// `n̄ / (n̄ + 10)` with `n̄` the mean number of amplicons per gene.
pub fn default_learning_rate(lcnr: &LcnrMatrix) -> f64 {
    let sizes = lcnr.gene_sizes();
    let n_bar = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
    n_bar / (n_bar + COARSENING_ZETA)
}

/// HPD intervals already stored in a posterior summary.
pub fn hpd_intervals(summary: &PosteriorSummary) -> Vec<ComparatorInterval> {
    summary
        .genes
        .iter()
        .zip(&summary.hpd)
        .map(|(g, iv)| ComparatorInterval {
            method: Method::Hpd,
            sample_id: summary.sample_id.clone(),
            gene: g.clone(),
            level: summary.level,
            lo: iv.lo,
            hi: iv.hi,
        })
        .collect()
}

/// Per-gene draws of μ_j under `p(θ) ∏ p(x|θ)^η`, sampled from the tempered
/// MAP. With `η = 1` and the same seed this reproduces the standard fit.
pub fn coarsened_draws(
    lcnr: &LcnrMatrix,
    hp: &ModelHyperParams,
    eta: f64,
    hmc: &HmcSettings,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!(
            "learning rate must lie in (0, 1], got {eta}"
        )));
    }
    let post = CnvPosterior::new(lcnr, *hp)?.with_likelihood_weight(eta);
    let map = map_estimate(
        &post,
        &post.initial_state().to_vec(),
        &MapSettings::default(),
    )?;
    let out = hmc_sample(&post, &map.x, hmc, seed)?;
    Ok((0..post.n_genes())
        .map(|j| out.coordinate(mu_index(j)))
        .collect())
}

pub fn coarsened_intervals(
    lcnr: &LcnrMatrix,
    hp: &ModelHyperParams,
    eta: f64,
    level: f64,
    hmc: &HmcSettings,
    seed: u64,
) -> Result<Vec<ComparatorInterval>> {
    check_level(level)?;
    let draws = coarsened_draws(lcnr, hp, eta, hmc, seed)?;
    intervals_from_draws(Method::Coarsened, lcnr, &draws, level)
}

pub(crate) fn intervals_from_draws(
    method: Method,
    lcnr: &LcnrMatrix,
    draws: &[Vec<f64>],
    level: f64,
) -> Result<Vec<ComparatorInterval>> {
    lcnr.genes
        .iter()
        .zip(draws)
        .map(|(g, d)| {
            let iv = hpd_interval(d, level)?;
            Ok(ComparatorInterval {
                method,
                sample_id: lcnr.sample_id.clone(),
                gene: g.clone(),
                level,
                lo: iv.lo,
                hi: iv.hi,
            })
        })
        .collect()
}

/// `H⁻¹ J H⁻¹` at `x`, where `H` is the negative Hessian of the log density
/// and `J` the sum of outer products of the per-observation scores.
pub fn sandwich_covariance<T: ObservationScores + ?Sized>(
    target: &T,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    let d = target.dim();
    let h = symmetrize(&neg_hessian_fd(target, x));
    let chol = h.clone().cholesky().ok_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(h.clone());
        let (index, &eigenvalue) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty Hessian");
        Error::NotPositiveDefinite { index, eigenvalue }
    })?;
    let mut j = DMatrix::<f64>::zeros(d, d);
    for s in target.observation_scores(x) {
        let v = nalgebra::DVector::from_vec(s);
        j.ger(1.0, &v, &v, 1.0);
    }
    let h_inv = chol.inverse();
    let cov = &h_inv * j * &h_inv;
    Ok(symmetrize(&cov))
}

/// Normal marginal `N(center, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMarginal {
    pub center: f64,
    pub sd: f64,
}

impl NormalMarginal {
    pub fn interval(&self, level: f64) -> Interval {
        let z = stats::normal_quantile(0.5 + 0.5 * level);
        Interval {
            lo: self.center - z * self.sd,
            hi: self.center + z * self.sd,
        }
    }
}

/// Sandwich marginals of every μ_j at the MAP.
pub fn sandwich_marginals(lcnr: &LcnrMatrix, hp: &ModelHyperParams) -> Result<Vec<NormalMarginal>> {
    let post = CnvPosterior::new(lcnr, *hp)?;
    let map = map_estimate(
        &post,
        &post.initial_state().to_vec(),
        &MapSettings::default(),
    )?;
    let cov = sandwich_covariance(&post, &map.x)?;
    Ok((0..post.n_genes())
        .map(|j| {
            let i = mu_index(j);
            NormalMarginal {
                center: map.x[i],
                sd: cov[(i, i)].max(0.0).sqrt(),
            }
        })
        .collect())
}

pub fn sandwich_intervals(
    lcnr: &LcnrMatrix,
    hp: &ModelHyperParams,
    level: f64,
) -> Result<Vec<ComparatorInterval>> {
    check_level(level)?;
    let marginals = sandwich_marginals(lcnr, hp)?;
    Ok(lcnr
        .genes
        .iter()
        .zip(marginals)
        .map(|(g, m)| {
            let iv = m.interval(level);
            ComparatorInterval {
                method: Method::Sandwich,
                sample_id: lcnr.sample_id.clone(),
                gene: g.clone(),
                level,
                lo: iv.lo,
                hi: iv.hi,
            }
        })
        .collect())
}

/// Scale MLE of `Gamma(1/2, s)`: `ŝ = 2 · mean(Y)`.
pub fn mse_scale(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::invalid("no losses"));
    }
    if let Some(v) = losses.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "losses must be finite and non-negative, got {v}"
        )));
    }
    let s = 2.0 * stats::mean(losses);
    if !(s > 0.0) {
        return Err(Error::DegenerateShape(
            "all losses are zero, the MSE scale vanishes".into(),
        ));
    }
    Ok(s)
}

/// Tolerance of the fixed-shape `Gamma(1/2, ŝ)` model.
pub fn mse_tolerance(gene: &str, losses: &[f64], p: f64) -> Result<GammaToleranceModel> {
    tolerance_quantile(gene, 0.5, mse_scale(losses)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let m = mse_tolerance("G", &[0.2, 0.8, 0.5], 0.05).unwrap();
        assert!((m.s_hat - 1.0).abs() < 1e-15);
        assert!((m.t - 1.920_729_410_347_062).abs() < 1e-9);
        let k = mse_tolerance("G", &[0.6, 2.4, 1.5], 0.05).unwrap();
        assert!((k.t / m.t - 3.0).abs() < 1e-12);
        assert!(mse_tolerance("G", &[0.0, 0.0], 0.05).is_err());
        assert!(mse_tolerance("G", &[], 0.05).is_err());
        assert!(mse_tolerance("G", &[-1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn mse_matches_pinned_gamma_quantile() {
        let losses = [0.03, 0.2, 0.11, 0.4];
        let m = mse_tolerance("G", &losses, 0.1).unwrap();
        let direct = stats::gamma_quantile(0.5, 2.0 * stats::mean(&losses), 0.9);
        assert_eq!(m.t, direct);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Hpd,
            Method::Coarsened,
            Method::Sandwich,
            Method::Mse,
            Method::Gamma,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::Hpd).unwrap(), "\"HPD\"");
    }

    #[test]
    fn default_rate_from_gene_sizes() {
        let lcnr = LcnrMatrix::new(
            "s",
            vec!["A".into(), "B".into()],
            vec![vec!["a1".into(); 30], vec!["b1".into(); 10]],
            vec![vec![0.0; 30], vec![0.0; 10]],
            0.5,
        )
        .unwrap();
        assert!((default_learning_rate(&lcnr) - 20.0 / 30.0).abs() < 1e-15);
    }
}
