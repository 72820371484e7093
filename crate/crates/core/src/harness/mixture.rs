use serde::{Deserialize, Serialize};

use super::coverage::{loo_coverage_matrix, mean_tolerance, posterior_means, PosteriorMeans};
use super::{effective_level, mace_grid, CalibrationReport};
use crate::bayescnv::{HmcSettings, ModelHyperParams};
use crate::comparators::Method;
use crate::error::Result;
use crate::imputation::{GeneCohort, ImputeCount};
use crate::seed::{derive_index, derive_seed};
use crate::stratify::{
    evidence_split, stratified_fits, StratifiedAssignment, Stratum, TolerancePlan,
};
use crate::synth::{gen_panel, SynthSpec};
use crate::tolerance::{PseudoPriorSpec, DEFAULT_ESS, DEFAULT_PRIOR_DRAWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub spec: SynthSpec,
    pub k: usize,
    pub hyper: ModelHyperParams,
    pub means: PosteriorMeans,
    pub hmc: HmcSettings,
    pub impute: ImputeCount,
    pub reps: usize,
    pub prior_alpha: Option<f64>,
    pub prior_scale: Option<f64>,
    pub ess: f64,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl Default for MixtureConfig {
    /// Forty samples, 45% clean and 55% with three times the amplicon noise.
    fn default() -> Self {
        let mut spec = SynthSpec::default();
        spec.stratum_fractions = vec![0.45, 0.55];
        spec.amplicon_noise_scale = vec![1.0, 3.0];
        MixtureConfig {
            spec,
            k: 40,
            hyper: ModelHyperParams::default(),
            means: PosteriorMeans::Hmc,
            hmc: HmcSettings::default(),
            impute: ImputeCount::default(),
            reps: 25,
            prior_alpha: None,
            prior_scale: None,
            ess: DEFAULT_ESS,
            quantiles: vec![0.8, 0.9, 0.95, 0.99],
            seed: 0,
        }
    }
}

impl MixtureConfig {
    fn plan(&self) -> Result<TolerancePlan> {
        let prior = match (self.prior_alpha, self.prior_scale) {
            (Some(a), Some(s)) => Some(PseudoPriorSpec::generated(
                a,
                s,
                DEFAULT_PRIOR_DRAWS,
                self.ess,
                derive_seed(self.seed, "prior"),
            )?),
            _ => None,
        };
        Ok(TolerancePlan {
            impute: self.impute,
            reps: self.reps,
            prior,
            seed: derive_seed(self.seed, "tolerance"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub pooled: f64,
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGene {
    pub gene: String,
    pub quantiles: Vec<QuantileRow>,
    pub pooled: CalibrationReport,
    pub stratified: CalibrationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub assignment: StratifiedAssignment,
    /// Generator stratum of every sample (0 = clean).
    pub generator_strata: Vec<usize>,
    /// Fraction of samples whose evidence stratum matches the generator.
    pub split_agreement: f64,
    pub genes: Vec<MixtureGene>,
}

/// Leave-one-out coverage of stratified tolerances: each fold re-splits the
/// training samples on their evidence and places the held-out sample by the
/// training median.
pub fn stratified_loo(
    cohort: &GeneCohort,
    evidence: &[f64],
    plan: &TolerancePlan,
) -> Result<super::CoverageMatrix> {
    let levels: Vec<f64> = mace_grid().into_iter().map(effective_level).collect();
    super::coverage::loo_coverage_with(cohort, |train, s| {
        let z_train: Vec<f64> = (0..cohort.len())
            .filter(|&i| i != s)
            .map(|i| evidence[i])
            .collect();
        let split = evidence_split(&train.sample_ids, &z_train, false)?;
        let which = if evidence[s] >= split.z_med {
            Stratum::Plus
        } else {
            Stratum::Minus
        };
        let members = split.as_map();
        let sub = train.filter(|i| members[&train.sample_ids[i]] == which);
        let fold_plan = TolerancePlan {
            seed: derive_index(plan.seed, &format!("strat-loo/{}", cohort.gene), s as u64),
            ..plan.clone()
        };
        let fit = fold_plan.fit(&sub)?;
        let params: Vec<(f64, f64)> = fit.reps.iter().map(|f| (f.alpha_hat, f.s_hat)).collect();
        Ok(levels.iter().map(|&l| mean_tolerance(&params, l)).collect())
    })
}

/// Pooled against evidence-stratified tolerances on a two-stratum panel.
pub fn mixture_study(cfg: &MixtureConfig) -> Result<MixtureReport> {
    let mut spec = cfg.spec.clone();
    spec.seed = derive_seed(cfg.seed, "panel");
    let panel = gen_panel(&spec, cfg.k)?;
    let fits = posterior_means(
        &panel.samples,
        &cfg.hyper,
        cfg.means,
        &cfg.hmc,
        derive_seed(cfg.seed, "fit"),
    )?;
    let ids: Vec<String> = panel.samples.iter().map(|s| s.sample_id.clone()).collect();
    let evidence: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let assignment = evidence_split(&ids, &evidence, false)?;
    let generator_strata: Vec<usize> = panel.labels.iter().map(|l| l.stratum).collect();
    let agree = assignment
        .stratum
        .iter()
        .zip(&generator_strata)
        .filter(|(s, g)| (**s == Stratum::Plus) == (**g == 0))
        .count();
    let plan = cfg.plan()?;
    let cohorts: Vec<GeneCohort> = panel
        .genes
        .iter()
        .enumerate()
        .map(|(j, g)| {
            GeneCohort::new(
                g.clone(),
                ids.clone(),
                fits.iter().map(|f| f.0[j]).collect(),
            )
        })
        .collect::<Result<_>>()?;
    let strat = stratified_fits(&assignment, &cohorts, &plan)?;
    let mut genes = Vec::new();
    for c in &cohorts {
        let pooled_fit = plan.fit(c)?;
        let (plus, minus) = &strat[&c.gene];
        let quantiles = cfg
            .quantiles
            .iter()
            .map(|&q| {
                Ok(QuantileRow {
                    level: q,
                    pooled: pooled_fit.tolerance(1.0 - q)?.0,
                    plus: plus.tolerance(1.0 - q)?.0,
                    minus: minus.tolerance(1.0 - q)?.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pooled_m = loo_coverage_matrix(c, &plan, Method::Gamma)?;
        let strat_m = stratified_loo(c, &evidence, &plan)?;
        let boot = derive_seed(cfg.seed, &format!("bootstrap/{}", c.gene));
        let mut stratified =
            CalibrationReport::from_matrix(&c.gene, Method::Gamma, &strat_m, boot)?;
        stratified
            .notes
            .push("evidence-stratified tolerance".into());
        genes.push(MixtureGene {
            gene: c.gene.clone(),
            quantiles,
            pooled: CalibrationReport::from_matrix(&c.gene, Method::Gamma, &pooled_m, boot)?,
            stratified,
        });
    }
    Ok(MixtureReport {
        assignment,
        split_agreement: agree as f64 / cfg.k as f64,
        generator_strata,
        genes,
    })
}
