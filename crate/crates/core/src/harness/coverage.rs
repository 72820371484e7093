use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{effective_level, mace_grid, CalibrationReport, CoverageMatrix, WIDTH_LEVEL};
use crate::bayescnv::{
    fit_sample, hpd_interval, map_estimate, mu_index, CnvPosterior, FitSettings, HmcSettings,
    MapSettings, ModelHyperParams,
};
use crate::comparators::{
    coarsened_draws, default_learning_rate, mse_scale, sandwich_covariance, Method, NormalMarginal,
};
use crate::error::{Error, Result};
use crate::imputation::{impute_repetitions, GeneCohort, ImputeCount};
use crate::panel_io::LcnrMatrix;
use crate::seed::{derive_index, derive_seed};
use crate::stats;
use crate::stratify::TolerancePlan;
use crate::synth::{gen_panel, NoiseFamily, SynthSpec, SyntheticPanel};
use crate::tolerance::{
    fit_repetitions, squared_losses, PseudoPriorSpec, DEFAULT_ESS, DEFAULT_PRIOR_DRAWS,
};

/// How per-sample gene means are estimated when a full posterior is not
/// needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMeans {
    /// HMC posterior means.
    #[default]
    Hmc,
    /// MAP coordinates, much cheaper.
    Map,
}

/// Per-rep `(shape, scale)` of the tolerance model fitted on `train`.
pub fn fold_params(
    train: &GeneCohort,
    plan: &TolerancePlan,
    method: Method,
) -> Result<Vec<(f64, f64)>> {
    let m = plan.impute.resolve(train.len());
    let reps = impute_repetitions(train, m, plan.reps, plan.seed)?;
    match method {
        Method::Gamma => Ok(fit_repetitions(&reps, plan.prior.as_ref())?
            .reps
            .iter()
            .map(|f| (f.alpha_hat, f.s_hat))
            .collect()),
        Method::Mse => reps
            .iter()
            .map(|c| Ok((0.5, mse_scale(&squared_losses(c).y)?)))
            .collect(),
        other => Err(Error::invalid(format!("{other} is not a tolerance method"))),
    }
}

/// Mean over repetitions of the Gamma quantile at `level`.
pub fn mean_tolerance(params: &[(f64, f64)], level: f64) -> f64 {
    params
        .iter()
        .map(|&(a, s)| stats::gamma_quantile(a, s, level))
        .sum::<f64>()
        / params.len() as f64
}

/// Leave-one-out coverage of `|μ̂_s| ≤ √T(γ)`, where `tolerance(train, s)`
/// returns `T` at every effective grid level from the cohort without `s`.
/// Failing folds are excluded and listed.
pub fn loo_coverage_with<F>(cohort: &GeneCohort, tolerance: F) -> Result<CoverageMatrix>
where
    F: Fn(&GeneCohort, usize) -> Result<Vec<f64>> + Sync,
{
    let k = cohort.len();
    if k < 5 {
        return Err(Error::invalid(format!(
            "leave-one-out coverage needs K ≥ 5, got {k}"
        )));
    }
    let grid = mace_grid();
    let results: Vec<Result<(Vec<bool>, f64)>> = (0..k)
        .into_par_iter()
        .map(|s| {
            let train = cohort.filter(|i| i != s);
            assert!(
                !train.sample_ids.contains(&cohort.sample_ids[s]),
                "held-out sample leaked into its training fold"
            );
            let ts = tolerance(&train, s)?;
            let y = cohort.mu_hat[s] * cohort.mu_hat[s];
            let hits = ts.iter().map(|&t| y <= t).collect();
            let width_t = ts[grid
                .iter()
                .position(|&g| g == WIDTH_LEVEL)
                .expect("grid holds the width level")];
            Ok((hits, 2.0 * width_t.sqrt()))
        })
        .collect();
    let mut m = CoverageMatrix::empty(grid);
    for (s, r) in results.into_iter().enumerate() {
        match r {
            Ok((hits, width)) => {
                m.fold_ids.push(cohort.sample_ids[s].clone());
                m.hits.push(hits);
                m.widths.push(width);
            }
            Err(e) => {
                log::warn!(
                    "gene {}: fold {} excluded: {e}",
                    cohort.gene,
                    cohort.sample_ids[s]
                );
                m.excluded.push(cohort.sample_ids[s].clone());
            }
        }
    }
    Ok(m)
}

/// Leave-one-out coverage of a tolerance method (Gamma or MSE).
pub fn loo_coverage_matrix(
    cohort: &GeneCohort,
    plan: &TolerancePlan,
    method: Method,
) -> Result<CoverageMatrix> {
    let levels: Vec<f64> = mace_grid().into_iter().map(effective_level).collect();
    loo_coverage_with(cohort, |train, s| {
        let fold_plan = TolerancePlan {
            seed: derive_index(plan.seed, &format!("loo/{}", cohort.gene), s as u64),
            ..plan.clone()
        };
        let params = fold_params(train, &fold_plan, method)?;
        Ok(levels.iter().map(|&l| mean_tolerance(&params, l)).collect())
    })
}

pub fn loo_coverage(
    cohort: &GeneCohort,
    plan: &TolerancePlan,
    method: Method,
) -> Result<CalibrationReport> {
    let m = loo_coverage_matrix(cohort, plan, method)?;
    CalibrationReport::from_matrix(
        &cohort.gene,
        method,
        &m,
        derive_seed(plan.seed, "bootstrap"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactSettings {
    pub hmc: HmcSettings,
    pub coarsened: bool,
    /// Coarsening rate; the gene-size default when absent.
    pub eta: Option<f64>,
    pub sandwich: bool,
}

impl Default for ArtifactSettings {
    fn default() -> Self {
        ArtifactSettings {
            hmc: HmcSettings::default(),
            coarsened: true,
            eta: None,
            sandwich: true,
        }
    }
}

/// Everything the calibration study needs from one sample's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelArtifacts {
    pub sample_id: String,
    pub mu_hat: Vec<f64>,
    pub hpd_draws: Vec<Vec<f64>>,
    pub coarsened_draws: Option<Vec<Vec<f64>>>,
    pub sandwich: Option<Vec<NormalMarginal>>,
    pub log_evidence: f64,
}

fn sample_artifacts(
    lcnr: &LcnrMatrix,
    hp: &ModelHyperParams,
    settings: &ArtifactSettings,
    seed: u64,
) -> Result<PanelArtifacts> {
    let fit_settings = FitSettings {
        hmc: settings.hmc,
        keep_draws: true,
        ..FitSettings::default()
    };
    let fit = fit_sample(lcnr, hp, &fit_settings, seed)?;
    let sandwich = if settings.sandwich {
        let post = CnvPosterior::new(lcnr, *hp)?;
        let cov = sandwich_covariance(&post, &fit.map.x)?;
        Some(
            (0..lcnr.n_genes())
                .map(|j| {
                    let i = mu_index(j);
                    NormalMarginal {
                        center: fit.map.x[i],
                        sd: cov[(i, i)].max(0.0).sqrt(),
                    }
                })
                .collect(),
        )
    } else {
        None
    };
    let coarsened = if settings.coarsened {
        let eta = settings.eta.unwrap_or_else(|| default_learning_rate(lcnr));
        Some(coarsened_draws(
            lcnr,
            hp,
            eta,
            &settings.hmc,
            derive_seed(seed, "coarsened"),
        )?)
    } else {
        None
    };
    Ok(PanelArtifacts {
        sample_id: lcnr.sample_id.clone(),
        mu_hat: fit.summary.mu_hat,
        hpd_draws: fit.summary.draws.expect("draws kept"),
        coarsened_draws: coarsened,
        sandwich,
        log_evidence: fit.laplace.log_evidence,
    })
}

/// Fit every sample; sample seeds derive from `(master_seed, sample_id)`.
pub fn fit_artifacts(
    samples: &[LcnrMatrix],
    hp: &ModelHyperParams,
    settings: &ArtifactSettings,
    master_seed: u64,
) -> Result<Vec<PanelArtifacts>> {
    samples
        .par_iter()
        .map(|s| {
            sample_artifacts(s, hp, settings, derive_seed(master_seed, &s.sample_id))
                .map_err(|e| e.in_stage(&format!("fit sample {}", s.sample_id)))
        })
        .collect()
}

/// Gene means and Laplace evidence without sampling when `Map` is chosen.
pub fn posterior_means(
    samples: &[LcnrMatrix],
    hp: &ModelHyperParams,
    how: PosteriorMeans,
    hmc: &HmcSettings,
    master_seed: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    samples
        .par_iter()
        .map(|s| {
            let r = match how {
                PosteriorMeans::Hmc => {
                    let settings = FitSettings {
                        hmc: *hmc,
                        ..FitSettings::default()
                    };
                    let f = fit_sample(s, hp, &settings, derive_seed(master_seed, &s.sample_id))?;
                    Ok((f.summary.mu_hat, f.laplace.log_evidence))
                }
                PosteriorMeans::Map => {
                    let post = CnvPosterior::new(s, *hp)?;
                    let map = map_estimate(
                        &post,
                        &post.initial_state().to_vec(),
                        &MapSettings::default(),
                    )?;
                    let lap = crate::bayescnv::laplace_at_mode(&post, &map)?;
                    let mu = (0..post.n_genes()).map(|j| map.x[mu_index(j)]).collect();
                    Ok((mu, lap.log_evidence))
                }
            };
            r.map_err(|e: Error| e.in_stage(&format!("fit sample {}", s.sample_id)))
        })
        .collect()
}

/// Coverage of the true gene shift by a Bayesian comparator's intervals,
/// one fold per listed sample.
pub fn interval_coverage(
    artifacts: &[PanelArtifacts],
    samples: &[usize],
    gene: usize,
    method: Method,
    truths: &[f64],
) -> Result<CoverageMatrix> {
    let grid = mace_grid();
    let mut m = CoverageMatrix::empty(grid.clone());
    for (&s, &truth) in samples.iter().zip(truths) {
        let a = &artifacts[s];
        let interval = |level: f64| -> Result<(f64, f64)> {
            match method {
                Method::Hpd => {
                    let iv = hpd_interval(&a.hpd_draws[gene], level)?;
                    Ok((iv.lo, iv.hi))
                }
                Method::Coarsened => {
                    let d = a
                        .coarsened_draws
                        .as_ref()
                        .ok_or_else(|| Error::invalid("coarsened draws were not computed"))?;
                    let iv = hpd_interval(&d[gene], level)?;
                    Ok((iv.lo, iv.hi))
                }
                Method::Sandwich => {
                    let n = a
                        .sandwich
                        .as_ref()
                        .ok_or_else(|| Error::invalid("sandwich marginals were not computed"))?;
                    let iv = n[gene].interval(level);
                    Ok((iv.lo, iv.hi))
                }
                other => Err(Error::invalid(format!(
                    "{other} does not produce per-sample intervals"
                ))),
            }
        };
        let hits = grid
            .iter()
            .map(|&g| interval(effective_level(g)).map(|(lo, hi)| lo <= truth && truth <= hi))
            .collect::<Result<Vec<bool>>>()?;
        let (lo, hi) = interval(WIDTH_LEVEL)?;
        m.fold_ids.push(a.sample_id.clone());
        m.hits.push(hits);
        m.widths.push(hi - lo);
    }
    Ok(m)
}

/// Coverage matrices for every gene and method on the diploid samples of a
/// synthetic panel, in gene-major order. Tolerance methods use leave-one-out
/// folds over the diploid samples; interval methods test whether 0 is
/// covered.
pub fn panel_coverage(
    panel: &SyntheticPanel,
    artifacts: &[PanelArtifacts],
    plan: &TolerancePlan,
    methods: &[Method],
) -> Result<Vec<(String, Method, CoverageMatrix)>> {
    let mut out = Vec::new();
    for (j, gene) in panel.genes.iter().enumerate() {
        let diploid: Vec<usize> = (0..artifacts.len())
            .filter(|&s| panel.diploid(s, j))
            .collect();
        for &method in methods {
            let m = match method {
                Method::Gamma | Method::Mse => {
                    let cohort = GeneCohort::new(
                        gene.clone(),
                        diploid
                            .iter()
                            .map(|&s| artifacts[s].sample_id.clone())
                            .collect(),
                        diploid.iter().map(|&s| artifacts[s].mu_hat[j]).collect(),
                    )?;
                    loo_coverage_matrix(&cohort, plan, method)?
                }
                _ => interval_coverage(artifacts, &diploid, j, method, &vec![0.0; diploid.len()])?,
            };
            out.push((gene.clone(), method, m));
        }
    }
    Ok(out)
}

/// [`panel_coverage`] summarized into one report per gene and method.
pub fn panel_calibration(
    panel: &SyntheticPanel,
    artifacts: &[PanelArtifacts],
    plan: &TolerancePlan,
    methods: &[Method],
) -> Result<Vec<CalibrationReport>> {
    panel_coverage(panel, artifacts, plan, methods)?
        .into_iter()
        .map(|(gene, method, m)| {
            CalibrationReport::from_matrix(
                &gene,
                method,
                &m,
                derive_seed(plan.seed, &format!("{gene}/{method}")),
            )
        })
        .collect()
}

/// Calibration of the Gamma tolerance and every comparator on simulated
/// panels; folds are pooled over `panels` independent panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub spec: SynthSpec,
    pub k: usize,
    pub panels: usize,
    pub hyper: ModelHyperParams,
    pub artifacts: ArtifactSettings,
    pub impute: ImputeCount,
    pub reps: usize,
    pub prior_alpha: Option<f64>,
    pub prior_scale: Option<f64>,
    pub ess: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    /// Five genes of 4 to 8 amplicons, Student-t amplicon noise with three
    /// degrees of freedom and between-sample gene variance 0.01.
    fn default() -> Self {
        let mut spec = SynthSpec::uniform(
            &["GENE1", "GENE2", "GENE3", "GENE4", "GENE5"],
            &[4, 5, 6, 7, 8],
            0.0,
            0.01,
            0.1,
        );
        spec.noise = NoiseFamily::StudentT { df: 3.0 };
        CalibrationConfig {
            spec,
            k: 50,
            panels: 1,
            hyper: ModelHyperParams::default(),
            artifacts: ArtifactSettings::default(),
            impute: ImputeCount::default(),
            reps: 25,
            prior_alpha: None,
            prior_scale: None,
            ess: DEFAULT_ESS,
            methods: vec![
                Method::Gamma,
                Method::Mse,
                Method::Hpd,
                Method::Coarsened,
                Method::Sandwich,
            ],
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn plan(&self) -> Result<TolerancePlan> {
        let prior = match (self.prior_alpha, self.prior_scale) {
            (Some(a), Some(s)) if self.ess > 0.0 => Some(PseudoPriorSpec::generated(
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

    pub fn run(&self) -> Result<Vec<CalibrationReport>> {
        if self.panels == 0 || self.methods.is_empty() {
            return Err(Error::Config(
                "at least one panel and one method are required".into(),
            ));
        }
        let mut artifacts = self.artifacts;
        artifacts.coarsened = self.methods.contains(&Method::Coarsened);
        artifacts.sandwich = self.methods.contains(&Method::Sandwich);
        let plan = self.plan()?;
        let mut pooled: Vec<(String, Method, CoverageMatrix)> = Vec::new();
        for r in 0..self.panels {
            let mut spec = self.spec.clone();
            spec.seed = derive_index(self.seed, "panel", r as u64);
            let panel = gen_panel(&spec, self.k)?;
            let arts = fit_artifacts(
                &panel.samples,
                &self.hyper,
                &artifacts,
                derive_index(self.seed, "fit", r as u64),
            )?;
            let panel_plan = TolerancePlan {
                seed: derive_index(plan.seed, "panel", r as u64),
                ..plan.clone()
            };
            let cov = panel_coverage(&panel, &arts, &panel_plan, &self.methods)?;
            if pooled.is_empty() {
                pooled = cov;
            } else {
                for ((_, _, acc), (_, _, m)) in pooled.iter_mut().zip(cov) {
                    acc.extend(m);
                }
            }
        }
        pooled
            .into_iter()
            .map(|(gene, method, m)| {
                CalibrationReport::from_matrix(
                    &gene,
                    method,
                    &m,
                    derive_seed(self.seed, &format!("bootstrap/{gene}/{method}")),
                )
            })
            .collect()
    }
}
