//! Run configuration: one flat, hand-editable TOML file in which every knob
//! has a default.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayescnv::{FitSettings, HmcSettings, ModelHyperParams};
use crate::error::{Error, Result};
use crate::imputation::ImputeCount;
use crate::panel_io::DEFAULT_PSEUDO_COUNT;
use crate::tolerance::{PseudoPriorSpec, DEFAULT_ESS, DEFAULT_MISCOVERAGE, DEFAULT_PRIOR_DRAWS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,

    /// Counts TSV with `sample_id amplicon_id test_count ref_count`.
    pub counts: Option<PathBuf>,
    /// Panel JSON mapping genes to amplicon ids.
    pub panel: Option<PathBuf>,
    /// Pseudo-prior JSON. When absent, `prior_alpha`/`prior_scale` generate one.
    pub prior: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Samples whose test counts are averaged into the reference. Empty means
    /// each record's own `ref_count` is used.
    pub reference_samples: Vec<String>,

    pub pseudo_count: f64,

    pub prior_mu0_sd: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    pub alpha_tau0: f64,
    pub beta_tau0: f64,
    pub alpha_tau: f64,
    pub beta_tau: f64,

    pub warmup: usize,
    pub draws: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    /// Credible level of the per-sample HPD intervals.
    pub hpd_level: f64,
    pub keep_draws: bool,

    /// Number of imputed top values. Takes precedence over `m_frac`.
    pub m: Option<usize>,
    pub m_frac: f64,
    pub reps: usize,

    pub ess: f64,
    pub prior_alpha: Option<f64>,
    pub prior_scale: Option<f64>,
    pub prior_draws: usize,
    /// Miscoverage of the tolerance limit.
    pub p: f64,

    pub stratify: bool,
    /// Allow stratification of cohorts with 20 or fewer samples.
    pub force: bool,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = ModelHyperParams::default();
        let hmc = HmcSettings::default();
        RunConfig {
            version: VERSION.to_string(),
            counts: None,
            panel: None,
            prior: None,
            out_dir: PathBuf::from("ampcal-run"),
            reference_samples: Vec::new(),
            pseudo_count: DEFAULT_PSEUDO_COUNT,
            prior_mu0_sd: hp.prior_mu0_sd,
            alpha_sigma: hp.alpha_sigma,
            beta_sigma: hp.beta_sigma,
            alpha_tau0: hp.alpha_tau0,
            beta_tau0: hp.beta_tau0,
            alpha_tau: hp.alpha_tau,
            beta_tau: hp.beta_tau,
            warmup: hmc.n_warmup,
            draws: hmc.n_draws,
            leapfrog_steps: hmc.n_leapfrog,
            target_accept: hmc.target_accept,
            hpd_level: 0.95,
            keep_draws: false,
            m: None,
            m_frac: 0.2,
            reps: 25,
            ess: DEFAULT_ESS,
            prior_alpha: None,
            prior_scale: None,
            prior_draws: DEFAULT_PRIOR_DRAWS,
            p: DEFAULT_MISCOVERAGE,
            stratify: false,
            force: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Config(format!("config file {} not found", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text)
    }

    /// TOML integers are signed, so seeds above `i64::MAX` are refused.
    pub fn to_toml_string(&self) -> Result<String> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "seed {} exceeds the TOML integer range",
                self.seed
            )));
        }
        toml::to_string(self).map_err(|e| Error::Config(format!("config does not serialize: {e}")))
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(
            self.to_toml_string()?.as_bytes(),
        )))
    }

    pub fn hyper(&self) -> ModelHyperParams {
        ModelHyperParams {
            prior_mu0_sd: self.prior_mu0_sd,
            alpha_sigma: self.alpha_sigma,
            beta_sigma: self.beta_sigma,
            alpha_tau0: self.alpha_tau0,
            beta_tau0: self.beta_tau0,
            alpha_tau: self.alpha_tau,
            beta_tau: self.beta_tau,
        }
    }

    pub fn set_hyper(&mut self, hp: &ModelHyperParams) {
        self.prior_mu0_sd = hp.prior_mu0_sd;
        self.alpha_sigma = hp.alpha_sigma;
        self.beta_sigma = hp.beta_sigma;
        self.alpha_tau0 = hp.alpha_tau0;
        self.beta_tau0 = hp.beta_tau0;
        self.alpha_tau = hp.alpha_tau;
        self.beta_tau = hp.beta_tau;
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            hmc: HmcSettings {
                n_warmup: self.warmup,
                n_draws: self.draws,
                n_leapfrog: self.leapfrog_steps,
                target_accept: self.target_accept,
            },
            level: self.hpd_level,
            keep_draws: self.keep_draws,
        }
    }

    pub fn impute_count(&self) -> ImputeCount {
        match self.m {
            Some(m) => ImputeCount::Count(m),
            None => ImputeCount::Fraction(self.m_frac),
        }
    }

    /// Checks everything that can be checked without touching data, including
    /// that a pseudo-prior source exists whenever `ess > 0`.
    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        self.to_toml_string()?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.pseudo_count > 0.0) || !self.pseudo_count.is_finite() {
            return bad("pseudo_count must be positive");
        }
        if self.draws < 100 || self.leapfrog_steps == 0 {
            return bad("draws must be at least 100 and leapfrog_steps positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(self.hpd_level > 0.0 && self.hpd_level < 1.0) {
            return bad("hpd_level must lie in (0, 1)");
        }
        if self.m.is_none() && !(self.m_frac >= 0.0 && self.m_frac < 1.0) {
            return bad("m_frac must lie in [0, 1)");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if !(self.p > 0.0 && self.p <= 0.5) {
            return bad("p must lie in (0, 0.5]");
        }
        if !(self.ess >= 0.0) || !self.ess.is_finite() {
            return bad("ess must be non-negative");
        }
        if self.ess > 0.0 {
            match (&self.prior, self.prior_alpha, self.prior_scale) {
                (Some(path), _, _) if !path.is_file() => {
                    return Err(Error::Config(format!(
                        "prior file {} does not exist (ess = {}; set ess = 0 to fit without a prior)",
                        path.display(),
                        self.ess
                    )))
                }
                (Some(_), _, _) | (None, Some(_), Some(_)) => {}
                (None, _, _) => {
                    return bad(
                        "ess > 0 needs a pseudo-prior: set `prior` to a file or both `prior_alpha` and \
                         `prior_scale`, or set ess = 0",
                    )
                }
            }
            if self.prior.is_none() && self.prior_draws == 0 {
                return bad("prior_draws must be positive");
            }
        }
        Ok(())
    }

    /// The pseudo-prior, or `None` when `ess = 0`. A prior file's own ESS is
    /// replaced by `ess`.
    pub fn load_prior(&self, seed: u64) -> Result<Option<PseudoPriorSpec>> {
        if self.ess == 0.0 {
            return Ok(None);
        }
        if let Some(path) = &self.prior {
            let mut spec = load_prior_file(path)?;
            spec.effective_sample_size = self.ess;
            spec.validate()?;
            return Ok(Some(spec));
        }
        match (self.prior_alpha, self.prior_scale) {
            (Some(a), Some(s)) => {
                PseudoPriorSpec::generated(a, s, self.prior_draws, self.ess, seed).map(Some)
            }
            _ => Err(Error::Config(
                "ess > 0 but no pseudo-prior is configured".into(),
            )),
        }
    }
}

/// Parse any TOML document, reporting problems as configuration errors.
pub fn parse_toml<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("{} not found", path.display())),
        _ => Error::io(path, e),
    })?;
    parse_toml(&text, &path.display().to_string())
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value)
        .map_err(|e| Error::Config(format!("value does not serialize to TOML: {e}")))
}

pub fn load_prior_file(path: &Path) -> Result<PseudoPriorSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Config(format!("prior file {} not found", path.display()))
        }
        _ => Error::io(path, e),
    })?;
    let spec: PseudoPriorSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("prior file {}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn populated_round_trip() {
        let c = RunConfig {
            counts: Some("in/counts.tsv".into()),
            panel: Some("in/panel.json".into()),
            prior: Some("prior.json".into()),
            reference_samples: vec!["N1".into(), "N2".into()],
            m: Some(3),
            prior_alpha: Some(0.52),
            prior_scale: Some(0.1 / 3.0),
            stratify: true,
            seed: i64::MAX as u64,
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn oversized_seed_is_a_config_error() {
        let c = RunConfig {
            seed: u64::MAX,
            ..RunConfig::default()
        };
        assert_eq!(c.to_toml_string().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = RunConfig::from_toml_str("seed = 7\nreps = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.reps, 3);
        assert_eq!(c.draws, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml_str("sede = 7\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn ess_needs_a_prior() {
        let mut c = RunConfig::default();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        c.prior = Some("/nonexistent/prior.json".into());
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("does not exist"), "{e}");
        c.ess = 0.0;
        c.validate().unwrap();
        c.ess = 5.0;
        c.prior = None;
        c.prior_alpha = Some(0.5);
        c.prior_scale = Some(0.02);
        c.validate().unwrap();
        let prior = c.load_prior(1).unwrap().unwrap();
        assert_eq!(prior.values.len(), 1000);
        assert!((prior.weight() - 0.005).abs() < 1e-15);
    }
}
