//! Gamma tolerance limits for squared posterior means.
//!
//! Squared imputed means are modelled as `Gamma(α, s)` (shape, scale). The fit
//! is a weighted maximum likelihood in which optional pseudo-observations from
//! a reference model enter with a total weight equal to a chosen effective
//! sample size. The tolerance `T` is the `1 - p` quantile of the fitted Gamma.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputation::ImputedCohort;
use crate::seed::rng_from;
use crate::stats;

/// Losses below this are floored before taking logarithms.
pub const LOSS_FLOOR: f64 = 1e-12;
pub const DEFAULT_ESS: f64 = 5.0;
pub const DEFAULT_PRIOR_DRAWS: usize = 1000;
pub const DEFAULT_MISCOVERAGE: f64 = 0.05;

const SHAPE_MIN: f64 = 1e-3;
const SHAPE_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSet {
    pub gene: String,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LossSet {
    pub fn new(gene: impl Into<String>, y: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if y.len() != weights.len() {
            return Err(Error::invalid("losses and weights differ in length"));
        }
        if let Some(v) = y.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "losses must be finite and non-negative, got {v}"
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("weights must be positive, got {w}")));
        }
        Ok(LossSet {
            gene: gene.into(),
            y,
            weights,
        })
    }

    pub fn unweighted(gene: impl Into<String>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(gene, y, vec![1.0; n])
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `Y_s = μ̃_s²`, unit weights.
pub fn squared_losses(cohort: &ImputedCohort) -> LossSet {
    let y: Vec<f64> = cohort.values.iter().map(|v| v * v).collect();
    let weights = vec![1.0; y.len()];
    LossSet {
        gene: cohort.gene.clone(),
        y,
        weights,
    }
}

/// Gamma `(shape, scale)` with the first two moments of `τ² χ²₁(λ)`.
pub fn moment_match(lambda: f64, tau2: f64) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "non-centrality must be non-negative, got {lambda}"
        )));
    }
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return Err(Error::invalid(format!(
            "variance must be positive, got {tau2}"
        )));
    }
    let alpha = (1.0 + lambda).powi(2) / (2.0 * (1.0 + 2.0 * lambda));
    let s = 2.0 * tau2 * (1.0 + 2.0 * lambda) / (1.0 + lambda);
    Ok((alpha, s))
}

/// Weighted sufficient statistics of a loss set after flooring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSuffStats {
    pub total_weight: f64,
    pub mean: f64,
    pub mean_log: f64,
    pub floored: usize,
}

impl GammaSuffStats {
    pub fn from_losses(losses: &LossSet) -> Self {
        let (mut w, mut sy, mut sl) = (0.0, 0.0, 0.0);
        let mut floored = 0;
        for (&y, &wi) in losses.y.iter().zip(&losses.weights) {
            let v = if y < LOSS_FLOOR {
                floored += 1;
                LOSS_FLOOR
            } else {
                y
            };
            w += wi;
            sy += wi * v;
            sl += wi * v.ln();
        }
        GammaSuffStats {
            total_weight: w,
            mean: sy / w,
            mean_log: sl / w,
            floored,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub alpha_hat: f64,
    pub s_hat: f64,
    /// Losses raised to the floor before fitting.
    pub floored: usize,
    pub iterations: usize,
}

/// Weighted Gamma log-likelihood and its gradient in `(α, s)`.
pub fn gamma_loglik(losses: &LossSet, alpha: f64, s: f64) -> (f64, [f64; 2]) {
    let st = GammaSuffStats::from_losses(losses);
    let w = st.total_weight;
    let ll =
        w * ((alpha - 1.0) * st.mean_log - st.mean / s - alpha * s.ln() - stats::ln_gamma(alpha));
    let da = w * (st.mean_log - s.ln() - stats::digamma(alpha));
    let ds = w * (st.mean / (s * s) - alpha / s);
    (ll, [da, ds])
}

/// Maximum-likelihood Gamma fit with per-observation weights.
///
/// The scale is profiled out (`ŝ = ȳ_w / α`), leaving
/// `ln α - ψ(α) = ln ȳ_w - mean_w(ln y)`, which is solved by Newton steps in
/// `ln α` safeguarded by bisection on `[1e-3, 1e3]`.
pub fn gamma_mle_weighted(losses: &LossSet) -> Result<GammaFit> {
    let positive = losses.y.iter().filter(|&&y| y > 0.0).count();
    let w_total = losses.total_weight();
    if positive < 3 || !(w_total > 2.0) {
        return Err(Error::invalid(format!(
            "gene {}: Gamma fit needs at least 3 positive losses and total weight above 2 (got {positive}, {w_total})",
            losses.gene
        )));
    }
    let st = GammaSuffStats::from_losses(losses);
    let d = st.mean.ln() - st.mean_log;
    let h = |x: f64| {
        let a = x.exp();
        a.ln() - stats::digamma(a) - d
    };
    let (mut lo, mut hi) = (SHAPE_MIN.ln(), SHAPE_MAX.ln());
    if !(d > 0.0) || h(hi) > 0.0 {
        return Err(Error::DegenerateShape(format!(
            "gene {}: losses are (nearly) constant, the shape diverges to its infinite limit (ln-mean gap {d:e})",
            losses.gene
        )));
    }
    if h(lo) < 0.0 {
        return Err(Error::Numerical(format!(
            "gene {}: Gamma shape below {SHAPE_MIN} (ln-mean gap {d})",
            losses.gene
        )));
    }
    // h is decreasing in x = ln α
    let a0 = (3.0 - d + ((d - 3.0).powi(2) + 24.0 * d).sqrt()) / (12.0 * d);
    let mut x = a0.clamp(SHAPE_MIN, SHAPE_MAX).ln();
    let mut iterations = 0;
    for it in 1..=200 {
        iterations = it;
        let hx = h(x);
        if hx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let a = x.exp();
        let dh = 1.0 - a * stats::trigamma(a);
        let mut next = x - hx / dh;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step < 1e-14 || hi - lo < 1e-14 {
            break;
        }
    }
    let alpha_hat = x.exp();
    Ok(GammaFit {
        alpha_hat,
        s_hat: st.mean / alpha_hat,
        floored: st.floored,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PriorSource {
    /// Losses retained from a previous run.
    Replay,
    /// Draws from a reference Gamma.
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPriorSpec {
    pub source: PriorSource,
    pub values: Vec<f64>,
    pub effective_sample_size: f64,
}

impl PseudoPriorSpec {
    pub fn replay(values: Vec<f64>, ess: f64) -> Result<Self> {
        let spec = PseudoPriorSpec {
            source: PriorSource::Replay,
            values,
            effective_sample_size: ess,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `count` draws from `Gamma(alpha, scale)` using `seed`.
    pub fn generated(alpha: f64, scale: f64, count: usize, ess: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && scale > 0.0) || !alpha.is_finite() || !scale.is_finite() {
            return Err(Error::Config(format!(
                "reference Gamma needs positive shape and scale, got ({alpha}, {scale})"
            )));
        }
        let dist = Gamma::new(alpha, scale).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng_from(seed);
        let values = (0..count).map(|_| dist.sample(&mut rng)).collect();
        let spec = PseudoPriorSpec {
            source: PriorSource::Generated,
            values,
            effective_sample_size: ess,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.effective_sample_size >= 0.0) || !self.effective_sample_size.is_finite() {
            return Err(Error::Config(format!(
                "effective sample size must be non-negative, got {}",
                self.effective_sample_size
            )));
        }
        if self.values.is_empty() && self.effective_sample_size > 0.0 {
            return Err(Error::Config("pseudo-prior has no values".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!(
                "pseudo-prior values must be non-negative, got {v}"
            )));
        }
        Ok(())
    }

    /// Per-value weight `ESS / count`.
    pub fn weight(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.effective_sample_size / self.values.len() as f64
        }
    }
}

/// Append the prior values with weight `ESS / count`. A zero ESS leaves the
/// losses unchanged.
pub fn attach_pseudo_prior(losses: &LossSet, prior: &PseudoPriorSpec) -> LossSet {
    let mut out = losses.clone();
    let w = prior.weight();
    if w > 0.0 {
        out.y.extend_from_slice(&prior.values);
        out.weights
            .extend(std::iter::repeat_n(w, prior.values.len()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaToleranceModel {
    pub gene: String,
    pub alpha_hat: f64,
    pub s_hat: f64,
    pub p: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub lcnr_bound: f64,
    pub min_detectable_cnv: f64,
    /// Spread of `T` across imputation repetitions.
    #[serde(rename = "T_sd_over_reps")]
    pub t_sd_over_reps: f64,
    pub n_reps: usize,
    pub floored_losses: usize,
}

fn check_miscoverage(p: f64) -> Result<()> {
    if p > 0.0 && p <= 0.5 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "miscoverage p must lie in (0, 0.5], got {p}"
        )))
    }
}

/// `T = F⁻¹(1 - p)` for `Gamma(alpha, s)` with its lCNR and copy-ratio forms.
pub fn tolerance_quantile(gene: &str, alpha: f64, s: f64, p: f64) -> Result<GammaToleranceModel> {
    check_miscoverage(p)?;
    if !(alpha > 0.0 && s > 0.0) || !alpha.is_finite() || !s.is_finite() {
        return Err(Error::invalid(format!(
            "Gamma parameters must be positive, got ({alpha}, {s})"
        )));
    }
    let t = stats::gamma_quantile(alpha, s, 1.0 - p);
    Ok(GammaToleranceModel {
        gene: gene.to_string(),
        alpha_hat: alpha,
        s_hat: s,
        p,
        t,
        lcnr_bound: t.sqrt(),
        min_detectable_cnv: t.sqrt().exp(),
        t_sd_over_reps: 0.0,
        n_reps: 1,
        floored_losses: 0,
    })
}

/// Gamma fits for every imputation repetition of one gene. The quantile can
/// be taken at any miscoverage level afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceFit {
    pub gene: String,
    pub reps: Vec<GammaFit>,
}

impl ToleranceFit {
    /// Mean and SD over repetitions of the per-repetition tolerance.
    pub fn tolerance(&self, p: f64) -> Result<(f64, f64)> {
        check_miscoverage(p)?;
        let ts: Vec<f64> = self
            .reps
            .iter()
            .map(|f| stats::gamma_quantile(f.alpha_hat, f.s_hat, 1.0 - p))
            .collect();
        let sd = if ts.len() > 1 {
            stats::std_dev(&ts)
        } else {
            0.0
        };
        Ok((stats::mean(&ts), sd))
    }

    pub fn model(&self, p: f64) -> Result<GammaToleranceModel> {
        let (t, sd) = self.tolerance(p)?;
        let alphas: Vec<f64> = self.reps.iter().map(|f| f.alpha_hat).collect();
        let scales: Vec<f64> = self.reps.iter().map(|f| f.s_hat).collect();
        Ok(GammaToleranceModel {
            gene: self.gene.clone(),
            alpha_hat: stats::mean(&alphas),
            s_hat: stats::mean(&scales),
            p,
            t,
            lcnr_bound: t.sqrt(),
            min_detectable_cnv: t.sqrt().exp(),
            t_sd_over_reps: sd,
            n_reps: self.reps.len(),
            floored_losses: self.reps.iter().map(|f| f.floored).max().unwrap_or(0),
        })
    }
}

/// Squared losses, optional pseudo-prior, weighted Gamma fit per repetition.
pub fn fit_repetitions(
    cohorts: &[ImputedCohort],
    prior: Option<&PseudoPriorSpec>,
) -> Result<ToleranceFit> {
    let first = cohorts
        .first()
        .ok_or_else(|| Error::invalid("no imputation repetitions to fit"))?;
    let reps = cohorts
        .iter()
        .map(|c| {
            let losses = squared_losses(c);
            let losses = match prior {
                Some(p) => attach_pseudo_prior(&losses, p),
                None => losses,
            };
            gamma_mle_weighted(&losses)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToleranceFit {
        gene: first.gene.clone(),
        reps,
    })
}

/// Full tolerance pipeline over the repetitions of one gene.
pub fn pipeline_tolerance(
    cohorts: &[ImputedCohort],
    prior: Option<&PseudoPriorSpec>,
    p: f64,
) -> Result<GammaToleranceModel> {
    check_miscoverage(p)?;
    fit_repetitions(cohorts, prior)?.model(p)
}

/// `n` draws of `Gamma(alpha, scale)`.
pub fn sample_gamma<R: Rng>(alpha: f64, scale: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let dist = Gamma::new(alpha, scale).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputation::{impute_repetitions, GeneCohort};

    #[test]
    fn squares() {
        let cohort = ImputedCohort {
            gene: "G".into(),
            sample_ids: vec!["a".into(), "b".into(), "c".into()],
            values: vec![-0.3, 0.0, 0.5],
            imputed_mask: vec![false; 3],
            repetition_id: 0,
            bulk: crate::imputation::robust_bulk_fit(&[0.0, 1.0, 2.0], 0).unwrap(),
            warnings: vec![],
        };
        let l = squared_losses(&cohort);
        let expect = [0.09, 0.0, 0.25];
        for (a, b) in l.y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(l.weights, vec![1.0; 3]);
    }

    #[test]
    fn moment_match_values() {
        assert_eq!(moment_match(0.0, 1.0).unwrap(), (0.5, 2.0));
        let (a, s) = moment_match(1.0, 1.0).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (s - 3.0).abs() < 1e-15);
        for &l in &[0.0, 0.1, 1.0, 10.0] {
            let (a, s) = moment_match(l, 0.37).unwrap();
            assert!(((a * s) - 0.37 * (1.0 + l)).abs() < 1e-15);
            assert!(a >= 0.5 && (a == 0.5) == (l == 0.0));
        }
        assert!(moment_match(-0.1, 1.0).is_err());
        assert!(moment_match(0.1, 0.0).is_err());
    }

    #[test]
    fn chi_square_tolerance() {
        let m = tolerance_quantile("G", 0.5, 2.0, 0.05).unwrap();
        assert!((m.t - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((m.lcnr_bound - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((m.min_detectable_cnv - m.lcnr_bound.exp()).abs() < 1e-15);
        assert!(tolerance_quantile("G", 0.5, 2.0, 0.0).is_err());
        assert!(tolerance_quantile("G", 0.5, 2.0, 0.6).is_err());
        let med = tolerance_quantile("G", 0.5, 2.0, 0.5).unwrap().t;
        let t10 = tolerance_quantile("G", 0.5, 2.0, 0.1).unwrap().t;
        assert!(m.t > t10 && t10 > med);
    }

    #[test]
    fn weighted_fit_stationary_and_invariant() {
        let mut rng = rng_from(11);
        let y = sample_gamma(0.8, 0.3, 500, &mut rng).unwrap();
        let l = LossSet::unweighted("G", y.clone()).unwrap();
        let fit = gamma_mle_weighted(&l).unwrap();
        let (_, g) = gamma_loglik(&l, fit.alpha_hat, fit.s_hat);
        assert!(g[0].hypot(g[1]) < 1e-8, "{g:?}");

        let doubled = LossSet::new("G", y.clone(), vec![2.0; y.len()]).unwrap();
        let f2 = gamma_mle_weighted(&doubled).unwrap();
        assert!((f2.alpha_hat - fit.alpha_hat).abs() < 1e-10);

        let scaled = LossSet::unweighted("G", y.iter().map(|v| v * 7.0).collect()).unwrap();
        let f3 = gamma_mle_weighted(&scaled).unwrap();
        assert!((f3.alpha_hat - fit.alpha_hat).abs() < 1e-6);
        assert!((f3.s_hat / fit.s_hat - 7.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_losses() {
        let l = LossSet::unweighted("G", vec![0.2; 10]).unwrap();
        assert!(matches!(
            gamma_mle_weighted(&l),
            Err(Error::DegenerateShape(_))
        ));
        let few = LossSet::unweighted("G", vec![0.0, 0.0, 0.1, 0.2]).unwrap();
        assert!(gamma_mle_weighted(&few).is_err());
    }

    #[test]
    fn zero_losses_are_floored_and_counted() {
        let l = LossSet::unweighted("G", vec![0.0, 0.1, 0.4, 0.05, 0.9, 1.3]).unwrap();
        let f = gamma_mle_weighted(&l).unwrap();
        assert_eq!(f.floored, 1);
        assert!(f.alpha_hat > 0.0);
    }

    #[test]
    fn prior_weights() {
        let p = PseudoPriorSpec::generated(0.5, 2.0, 1000, 5.0, 1).unwrap();
        assert!((p.weight() - 0.005).abs() < 1e-18);
        let l = attach_pseudo_prior(&LossSet::unweighted("G", vec![0.1, 0.2, 0.3]).unwrap(), &p);
        let pseudo: f64 = l.weights[3..].iter().sum();
        assert!((pseudo - 5.0).abs() < 1e-12);
        let none = PseudoPriorSpec {
            effective_sample_size: 0.0,
            ..p
        };
        let base = LossSet::unweighted("G", vec![0.1, 0.2, 0.3, 0.7]).unwrap();
        assert_eq!(attach_pseudo_prior(&base, &none), base);
    }

    #[test]
    fn pipeline_reports_rep_spread() {
        let mut rng = rng_from(5);
        let mu: Vec<f64> = (0..40)
            .map(|_| stats::normal_quantile(rng.random::<f64>()) * 0.3)
            .collect();
        let cohort = GeneCohort::anonymous("G", mu);
        let reps = impute_repetitions(&cohort, 8, 25, 9).unwrap();
        let m = pipeline_tolerance(&reps, None, 0.05).unwrap();
        assert_eq!(m.n_reps, 25);
        assert!(m.t_sd_over_reps > 0.0);
        assert!((m.lcnr_bound - m.t.sqrt()).abs() < 1e-15);
    }
}
