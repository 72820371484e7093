//! Per-sample hierarchical Bayesian CNV inference: posterior draws of the
//! gene means, HPD intervals, and Laplace log evidence.

pub mod density;
pub mod evidence;
pub mod gaussian;
pub mod hmc;
pub mod hpd;
pub mod model;
pub mod optimize;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use density::{softlaplace_logpdf, LogDensity, ObservationScores};
pub use evidence::{laplace_at_mode, laplace_evidence, LaplaceResult};
pub use hmc::{hmc_sample, HmcOutput, HmcSettings, SamplerDiagnostics};
pub use hpd::{hpd_interval, Interval};
pub use model::{mu_index, CnvPosterior, Likelihood, ModelHyperParams, ModelState};
pub use optimize::{map_estimate, MapResult, MapSettings};

use crate::error::{Error, Result};
use crate::panel_io::LcnrMatrix;
use crate::seed::derive_seed;
use crate::stats;

/// Posterior summary of the gene-level means for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub sample_id: String,
    pub genes: Vec<String>,
    pub mu_hat: Vec<f64>,
    pub hpd: Vec<Interval>,
    pub level: f64,
    pub altered: Vec<bool>,
    /// `draws[j]` holds the retained draws of μ_j.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Vec<f64>>>,
    pub log_evidence: f64,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Per-gene posterior means, HPD intervals and `altered = 0 ∉ HPD`.
pub fn posterior_summarize(
    sample_id: &str,
    genes: &[String],
    mu_draws: Vec<Vec<f64>>,
    level: f64,
    log_evidence: f64,
    diagnostics: SamplerDiagnostics,
    keep_draws: bool,
) -> Result<PosteriorSummary> {
    if mu_draws.len() != genes.len() {
        return Err(Error::invalid("one draw vector per gene is required"));
    }
    let mu_hat: Vec<f64> = mu_draws.iter().map(|d| stats::mean(d)).collect();
    let hpd = mu_draws
        .iter()
        .map(|d| hpd_interval(d, level))
        .collect::<Result<Vec<_>>>()?;
    let altered = hpd.iter().map(|iv| !iv.contains(0.0)).collect();
    Ok(PosteriorSummary {
        sample_id: sample_id.to_string(),
        genes: genes.to_vec(),
        mu_hat,
        hpd,
        level,
        altered,
        draws: keep_draws.then_some(mu_draws),
        log_evidence,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub hmc: HmcSettings,
    /// Credible level `1 - γ` of the HPD intervals.
    pub level: f64,
    pub keep_draws: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            hmc: HmcSettings::default(),
            level: 0.95,
            keep_draws: false,
        }
    }
}

/// Everything computed for one sample: the MAP, the Laplace evidence, the
/// raw sampler output and its summary.
#[derive(Debug, Clone)]
pub struct SampleFit {
    pub map: MapResult,
    pub laplace: LaplaceResult,
    pub hmc: HmcOutput,
    pub summary: PosteriorSummary,
}

/// MAP, Laplace evidence and HMC draws for one sample. Sampling starts from
/// the MAP. `seed` is used as is; see [`fit_cohort`] for per-sample seeds.
pub fn fit_sample(
    lcnr: &LcnrMatrix,
    hp: &ModelHyperParams,
    settings: &FitSettings,
    seed: u64,
) -> Result<SampleFit> {
    let post = CnvPosterior::new(lcnr, *hp)?;
    let map = map_estimate(
        &post,
        &post.initial_state().to_vec(),
        &MapSettings::default(),
    )?;
    let laplace = laplace_at_mode(&post, &map)?;
    let hmc = hmc_sample(&post, &map.x, &settings.hmc, seed)?;
    let mu_draws = (0..post.n_genes())
        .map(|j| hmc.coordinate(mu_index(j)))
        .collect();
    let summary = posterior_summarize(
        &lcnr.sample_id,
        &lcnr.genes,
        mu_draws,
        settings.level,
        laplace.log_evidence,
        hmc.diagnostics.clone(),
        settings.keep_draws,
    )?;
    Ok(SampleFit {
        map,
        laplace,
        hmc,
        summary,
    })
}

/// Fit every sample in parallel; sample `s` uses seed `hash(master_seed, id_s)`.
pub fn fit_cohort(
    samples: &[LcnrMatrix],
    hp: &ModelHyperParams,
    settings: &FitSettings,
    master_seed: u64,
) -> Result<Vec<PosteriorSummary>> {
    samples
        .par_iter()
        .map(|s| {
            fit_sample(s, hp, settings, derive_seed(master_seed, &s.sample_id))
                .map(|f| f.summary)
                .map_err(|e| e.in_stage(&format!("fit sample {}", s.sample_id)))
        })
        .collect()
}
