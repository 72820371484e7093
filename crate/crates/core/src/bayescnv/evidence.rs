//! Laplace approximation of the log model evidence:
//!
//! `log Z ≈ log p(X|θ̂) + log p(θ̂) + (d/2) log 2π − ½ log det H`
//!
//! where `θ̂` is the MAP in the unconstrained parameterization and `H` the
//! Hessian of the negative log posterior there.

use nalgebra::{DMatrix, SymmetricEigen};

use super::density::LogDensity;
use super::model::CnvPosterior;
use super::optimize::{map_estimate, neg_hessian_fd, symmetrize, MapResult, MapSettings};
use crate::error::{Error, Result};
use crate::panel_io::LcnrMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone)]
pub struct LaplaceResult {
    pub log_evidence: f64,
    pub log_density_at_mode: f64,
    pub log_det_hessian: f64,
    /// Symmetrized Hessian of the negative log density at the mode.
    pub hessian: DMatrix<f64>,
}

/// Laplace evidence of `target` around an already located mode.
pub fn laplace_at_mode<T: LogDensity + ?Sized>(
    target: &T,
    mode: &MapResult,
) -> Result<LaplaceResult> {
    let d = target.dim();
    let hessian = symmetrize(&neg_hessian_fd(target, &mode.x));
    let eig = SymmetricEigen::new(hessian.clone());
    let (index, &min_ev) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty Hessian");
    if !(min_ev > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index,
            eigenvalue: min_ev,
        });
    }
    let log_det: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
    let log_evidence = mode.log_density + 0.5 * d as f64 * LN_2PI - 0.5 * log_det;
    if !log_evidence.is_finite() {
        return Err(Error::Numerical("non-finite Laplace evidence".into()));
    }
    Ok(LaplaceResult {
        log_evidence,
        log_density_at_mode: mode.log_density,
        log_det_hessian: log_det,
        hessian,
    })
}

/// Laplace log evidence (nats) of the standard SoftLaplace model for one sample.
pub fn laplace_evidence(lcnr: &LcnrMatrix, hp: &super::ModelHyperParams) -> Result<f64> {
    let post = CnvPosterior::new(lcnr, *hp)?;
    let mode = map_estimate(
        &post,
        &post.initial_state().to_vec(),
        &MapSettings::default(),
    )?;
    Ok(laplace_at_mode(&post, &mode)?.log_evidence)
}
