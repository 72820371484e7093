//! Conditional order-statistic imputation of suspected CNV-positive samples.
//!
//! For one gene the `K` posterior means are ranked, the `m` largest are set
//! aside, and a Normal is fitted to the `L = K - m` retained values by median
//! and scaled MAD. The set-aside values are replaced by sorted draws from that
//! Normal truncated to `[t, ∞)`, `t` being the largest retained value, so the
//! imputed vector has the law of the top order statistics given `X_(L) = t`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_index, rng_from};
use crate::stats;

/// Smallest bulk that can be fitted.
pub const MIN_BULK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkFit {
    pub xi_hat: f64,
    pub omega_hat: f64,
    pub threshold: f64,
    pub retained: usize,
    pub imputed: usize,
}

/// How many of the top values to impute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeCount {
    Count(usize),
    /// `m = ⌈fraction · K⌉`
    Fraction(f64),
}

impl Default for ImputeCount {
    fn default() -> Self {
        ImputeCount::Fraction(0.2)
    }
}

impl ImputeCount {
    pub fn resolve(&self, k: usize) -> usize {
        match *self {
            ImputeCount::Count(m) => m,
            ImputeCount::Fraction(f) => ((f * k as f64) - 1e-9).ceil().max(0.0) as usize,
        }
    }
}

/// Median / 1.4826·MAD fit to the `K - m` smallest values.
pub fn robust_bulk_fit(mu_hat: &[f64], m: usize) -> Result<BulkFit> {
    let k = mu_hat.len();
    if k < MIN_BULK || m >= k || k - m < MIN_BULK {
        return Err(Error::invalid(format!(
            "bulk too small to fit: K = {k}, m = {m} leaves {} retained values (need {MIN_BULK})",
            k.saturating_sub(m)
        )));
    }
    let sorted = stats::sorted(mu_hat);
    let retained = &sorted[..k - m];
    Ok(BulkFit {
        xi_hat: stats::median_sorted(retained),
        omega_hat: stats::MAD_TO_SD * stats::mad(retained),
        threshold: retained[retained.len() - 1],
        retained: k - m,
        imputed: m,
    })
}

/// Inverse-CDF draw from `N(ξ̂, ω̂²)` truncated to `[t, ∞)` for `u ∈ (0, 1)`.
///
/// Evaluated through the survival function, `x = ξ̂ + ω̂ Φ̄⁻¹((1-u) Φ̄(z_t))`,
/// which is the same map as `F⁻¹(F(t) + u(1 - F(t)))` but keeps precision
/// when `t` sits far in the upper tail. A zero scale returns `t`.
pub fn truncated_normal_draw(fit: &BulkFit, u: f64) -> f64 {
    let t = fit.threshold;
    if !(fit.omega_hat > 0.0) {
        return t;
    }
    let zt = (t - fit.xi_hat) / fit.omega_hat;
    let tail = stats::normal_sf(zt);
    let p = (1.0 - u) * tail;
    if !(p > 0.0) {
        return t;
    }
    let x = fit.xi_hat - fit.omega_hat * stats::normal_quantile(p);
    x.max(t)
}

/// Posterior means of one gene across a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneCohort {
    pub gene: String,
    pub sample_ids: Vec<String>,
    pub mu_hat: Vec<f64>,
}

impl GeneCohort {
    pub fn new(gene: impl Into<String>, sample_ids: Vec<String>, mu_hat: Vec<f64>) -> Result<Self> {
        if sample_ids.len() != mu_hat.len() {
            return Err(Error::invalid(
                "sample ids and posterior means differ in length",
            ));
        }
        Ok(GeneCohort {
            gene: gene.into(),
            sample_ids,
            mu_hat,
        })
    }

    /// Cohort with anonymous ids `s0, s1, …`.
    pub fn anonymous(gene: impl Into<String>, mu_hat: Vec<f64>) -> Self {
        let ids = (0..mu_hat.len()).map(|i| format!("s{i}")).collect();
        GeneCohort {
            gene: gene.into(),
            sample_ids: ids,
            mu_hat,
        }
    }

    pub fn len(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_hat.is_empty()
    }

    /// Sub-cohort keeping entries whose index passes `keep`.
    pub fn filter<F: Fn(usize) -> bool>(&self, keep: F) -> GeneCohort {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        GeneCohort {
            gene: self.gene.clone(),
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            mu_hat: idx.iter().map(|&i| self.mu_hat[i]).collect(),
        }
    }
}

/// One imputation repetition of a gene cohort, in the input sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCohort {
    pub gene: String,
    pub sample_ids: Vec<String>,
    pub values: Vec<f64>,
    pub imputed_mask: Vec<bool>,
    pub repetition_id: usize,
    pub bulk: BulkFit,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Sample positions ordered by rank, ties broken by position.
fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Replace the top-`m` values of the cohort using uniforms from `rng`.
pub fn impute_with_rng<R: Rng>(
    cohort: &GeneCohort,
    fit: &BulkFit,
    repetition_id: usize,
    rng: &mut R,
) -> ImputedCohort {
    let k = cohort.len();
    let m = fit.imputed;
    let mut values = cohort.mu_hat.clone();
    let mut mask = vec![false; k];
    let mut warnings = Vec::new();
    if m > 0 {
        if !(fit.omega_hat > 0.0) {
            warnings.push(format!(
                "gene {}: bulk MAD is zero, imputing the threshold {} for {m} values",
                cohort.gene, fit.threshold
            ));
            log::warn!("{}", warnings[0]);
        }
        let mut draws: Vec<f64> = (0..m)
            .map(|_| {
                // open interval (0, 1)
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                truncated_normal_draw(fit, u)
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let order = rank_order(&cohort.mu_hat);
        for (i, &pos) in order[k - m..].iter().enumerate() {
            values[pos] = draws[i];
            mask[pos] = true;
        }
    }
    ImputedCohort {
        gene: cohort.gene.clone(),
        sample_ids: cohort.sample_ids.clone(),
        values,
        imputed_mask: mask,
        repetition_id,
        bulk: *fit,
        warnings,
    }
}

/// A single seeded imputation of the top `m` values.
pub fn impute_top_m(cohort: &GeneCohort, m: usize, seed: u64) -> Result<ImputedCohort> {
    let fit = robust_bulk_fit(&cohort.mu_hat, m)?;
    Ok(impute_with_rng(cohort, &fit, 0, &mut rng_from(seed)))
}

/// `reps` independent imputations; repetition `r` is seeded from
/// `(master_seed, gene, r)`. The bulk fit and threshold are computed once.
pub fn impute_repetitions(
    cohort: &GeneCohort,
    m: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<ImputedCohort>> {
    if reps == 0 {
        return Err(Error::Config(
            "at least one imputation repetition is required".into(),
        ));
    }
    let fit = robust_bulk_fit(&cohort.mu_hat, m)?;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(derive_index(master_seed, &cohort.gene, r as u64));
            impute_with_rng(cohort, &fit, r, &mut rng)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bulk_fit_example() {
        let fit = robust_bulk_fit(&[1.0, 2.0, 3.0, 4.0, 100.0], 1).unwrap();
        assert_eq!(fit.xi_hat, 2.5);
        assert!((fit.omega_hat - 1.4826).abs() < 1e-12);
        assert_eq!(fit.threshold, 4.0);
        assert_eq!((fit.retained, fit.imputed), (4, 1));
    }

    #[test]
    fn bulk_fit_m_zero_threshold_is_max() {
        let fit = robust_bulk_fit(&[3.0, -1.0, 7.0, 2.0], 0).unwrap();
        assert_eq!(fit.threshold, 7.0);
    }

    #[test]
    fn bulk_too_small() {
        assert!(robust_bulk_fit(&[1.0, 2.0], 0).is_err());
        assert!(robust_bulk_fit(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
        assert!(robust_bulk_fit(&[1.0, 2.0, 3.0, 4.0], 4).is_err());
    }

    #[test]
    fn truncated_draw_examples() {
        let fit = BulkFit {
            xi_hat: 0.0,
            omega_hat: 1.0,
            threshold: 0.0,
            retained: 5,
            imputed: 1,
        };
        assert!((truncated_normal_draw(&fit, 0.5) - 0.674_489_750_196_081_7).abs() < 1e-9);
        assert!((truncated_normal_draw(&fit, 1e-12) - 0.0).abs() < 1e-9);
        let flat = BulkFit {
            omega_hat: 0.0,
            threshold: 2.0,
            ..fit
        };
        assert_eq!(truncated_normal_draw(&flat, 0.3), 2.0);
    }

    #[test]
    fn far_tail_threshold_stays_finite() {
        let fit = BulkFit {
            xi_hat: 0.0,
            omega_hat: 1.0,
            threshold: 30.0,
            retained: 5,
            imputed: 1,
        };
        let x = truncated_normal_draw(&fit, 0.5);
        assert!(x.is_finite() && x >= 30.0 && x < 30.1, "{x}");
    }

    #[test]
    fn m_zero_is_identity() {
        let c = GeneCohort::anonymous("G", vec![0.3, -0.2, 0.1, 0.5, 0.0]);
        let out = impute_top_m(&c, 0, 1).unwrap();
        assert_eq!(out.values, c.mu_hat);
        assert!(out.imputed_mask.iter().all(|m| !m));
    }

    #[test]
    fn zero_scale_imputes_threshold_with_warning() {
        let c = GeneCohort::anonymous("G", vec![1.0, 1.0, 1.0, 1.0, 9.0]);
        let out = impute_top_m(&c, 1, 3).unwrap();
        assert_eq!(out.values, vec![1.0; 5]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn imputed_fraction_resolution() {
        assert_eq!(ImputeCount::Fraction(0.2).resolve(50), 10);
        assert_eq!(ImputeCount::Fraction(0.2).resolve(14), 3);
        assert_eq!(ImputeCount::Fraction(0.0).resolve(14), 0);
        assert_eq!(ImputeCount::Count(4).resolve(14), 4);
    }

    proptest! {
        #[test]
        fn imputation_invariants(
            vals in prop::collection::vec(-3.0f64..3.0, 6..40),
            frac in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let k = vals.len();
            let m = ((frac * k as f64) as usize).min(k - MIN_BULK);
            let c = GeneCohort::anonymous("G", vals.clone());
            let out = impute_top_m(&c, m, seed).unwrap();
            let t = out.bulk.threshold;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(out.imputed_mask.iter().filter(|&&b| b).count(), m);
            for i in 0..k {
                if out.imputed_mask[i] {
                    prop_assert!(out.values[i] >= t);
                } else {
                    prop_assert_eq!(out.values[i].to_bits(), vals[i].to_bits());
                }
                prop_assert!(out.values[i] >= min);
            }
            // retained block followed by the sorted draws, in rank order
            let order = rank_order(&vals);
            let reordered: Vec<f64> = order.iter().map(|&i| out.values[i]).collect();
            prop_assert!(reordered.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn threshold_non_increasing_in_m(vals in prop::collection::vec(-3.0f64..3.0, 8..30)) {
            let k = vals.len();
            let ts: Vec<f64> = (0..=k - MIN_BULK).map(|m| robust_bulk_fit(&vals, m).unwrap().threshold).collect();
            prop_assert!(ts.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
