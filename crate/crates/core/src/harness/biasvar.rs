use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::coverage::{posterior_means, PosteriorMeans};
use crate::bayescnv::{HmcSettings, ModelHyperParams};
use crate::error::{Error, Result};
use crate::seed::{derive_index, derive_seed, rng_from};
use crate::stats;
use crate::synth::{LogProfile, ProfileSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasVarConfig {
    pub profile: ProfileSpec,
    pub n_clean: usize,
    pub n_degraded: usize,
    pub pool_size: usize,
    pub bootstrap_b: usize,
    pub hyper: ModelHyperParams,
    pub means: PosteriorMeans,
    pub hmc: HmcSettings,
    pub seed: u64,
}

impl Default for BiasVarConfig {
    fn default() -> Self {
        BiasVarConfig {
            profile: ProfileSpec::default(),
            n_clean: 22,
            n_degraded: 10,
            pool_size: 5,
            bootstrap_b: 30,
            hyper: ModelHyperParams::default(),
            means: PosteriorMeans::Hmc,
            hmc: HmcSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarRow {
    pub gene: String,
    pub n_degraded: usize,
    pub bias: f64,
    pub variance: f64,
    /// Mean squared deviation of μ̂ from the diploid truth 0.
    pub msd: f64,
    pub bias_mc_se: f64,
    pub n: usize,
}

/// Squared bias and variance of clean-sample gene means as the reference
/// pool takes on 0 to `pool_size` degraded samples.
pub fn bias_variance_decomposition(cfg: &BiasVarConfig) -> Result<Vec<BiasVarRow>> {
    if cfg.pool_size == 0
        || cfg.pool_size > cfg.n_degraded
        || cfg.pool_size >= cfg.n_clean
        || cfg.bootstrap_b == 0
    {
        return Err(Error::Config(format!(
            "reference pool of {} needs at most {} degraded and fewer than {} clean samples, and B > 0",
            cfg.pool_size, cfg.n_degraded, cfg.n_clean
        )));
    }
    let mut profile = cfg.profile.clone();
    profile.seed = derive_seed(cfg.seed, "profiles");
    let all = profile.generate(cfg.n_clean, cfg.n_degraded)?;
    let (clean, bad): (Vec<&LogProfile>, Vec<&LogProfile>) = all.iter().partition(|p| !p.degraded);
    let mut rows = Vec::new();
    for d in 0..=cfg.pool_size {
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); profile.genes.len()];
        for b in 0..cfg.bootstrap_b {
            let mut rng = rng_from(derive_index(cfg.seed, &format!("pool/{d}"), b as u64));
            let good_pick = sample(&mut rng, clean.len(), cfg.pool_size - d).into_vec();
            let bad_pick = sample(&mut rng, bad.len(), d).into_vec();
            let refs: Vec<&LogProfile> = good_pick
                .iter()
                .map(|&i| clean[i])
                .chain(bad_pick.iter().map(|&i| bad[i]))
                .collect();
            let tests = (0..clean.len())
                .filter(|i| !good_pick.contains(i))
                .map(|i| profile.lcnr_against(clean[i], &refs))
                .collect::<Result<Vec<_>>>()?;
            let fit_seed = derive_index(cfg.seed, &format!("fit/{d}"), b as u64);
            for (mu, _) in posterior_means(&tests, &cfg.hyper, cfg.means, &cfg.hmc, fit_seed)? {
                for (j, v) in mu.into_iter().enumerate() {
                    values[j].push(v);
                }
            }
        }
        for (j, g) in profile.genes.iter().enumerate() {
            let v = &values[j];
            let bias = stats::mean(v);
            let variance = v.iter().map(|x| (x - bias).powi(2)).sum::<f64>() / v.len() as f64;
            rows.push(BiasVarRow {
                gene: g.clone(),
                n_degraded: d,
                bias,
                variance,
                msd: v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64,
                bias_mc_se: variance.sqrt() / (v.len() as f64).sqrt(),
                n: v.len(),
            });
        }
    }
    Ok(rows)
}
