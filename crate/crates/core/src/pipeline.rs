//! Full pipeline: lcnr → fit → impute → tolerance (→ stratify), with a
//! manifest that ties every output file to the configuration that made it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayescnv::{fit_cohort, PosteriorSummary};
use crate::config::{RunConfig, VERSION};
use crate::error::{Error, Result};
use crate::harness::output::write_json;
use crate::imputation::{impute_repetitions, GeneCohort, ImputedCohort};
use crate::panel_io::{build_lcnr, load_counts, write_lcnr_tsv, PanelDef};
use crate::seed::derive_seed;
use crate::stratify::{
    evidence_split_summaries, stratified_tolerance, StratifiedAssignment, StratumModels,
    TolerancePlan,
};
use crate::tolerance::{fit_repetitions, GammaToleranceModel, PseudoPriorSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_MARKER: &str = "FAILED";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    /// A successful manifest with no stages yet.
    pub fn new(config_sha256: String, seeds: BTreeMap<String, u64>) -> Self {
        Manifest {
            tool: "ampcal".into(),
            version: VERSION.into(),
            config_sha256,
            seeds,
            status: "OK".into(),
            failed_stage: None,
            error: None,
            stages: Vec::new(),
        }
    }
}

/// Stage seeds, all derived from the master seed.
pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::new();
    s.insert("master".to_string(), master);
    for label in ["fit", "impute", "prior", "stratify"] {
        s.insert(label.to_string(), derive_seed(master, label));
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Imputation repetitions keyed by gene, as written by the impute stage.
pub type ImputedGenes = IndexMap<String, Vec<ImputedCohort>>;

pub fn load_imputed(path: &Path) -> Result<ImputedGenes> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Transpose per-sample posterior means into one cohort per gene.
pub fn gene_cohorts(summaries: &[PosteriorSummary]) -> Result<Vec<GeneCohort>> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::invalid("no posterior summaries"))?;
    if let Some(s) = summaries.iter().find(|s| s.genes != first.genes) {
        return Err(Error::invalid(format!(
            "sample {} has a different gene list from sample {}",
            s.sample_id, first.sample_id
        )));
    }
    let ids: Vec<String> = summaries.iter().map(|s| s.sample_id.clone()).collect();
    first
        .genes
        .iter()
        .enumerate()
        .map(|(j, g)| {
            GeneCohort::new(
                g.clone(),
                ids.clone(),
                summaries.iter().map(|s| s.mu_hat[j]).collect(),
            )
        })
        .collect()
}

/// Every `*.json` posterior summary in `dir`, in file-name order.
pub fn load_posteriors_dir(dir: &Path) -> Result<Vec<PosteriorSummary>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no posterior summaries in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| PosteriorSummary::load(p)).collect()
}

/// Imputation repetitions of every gene, keyed by gene in panel order.
pub fn impute_genes(
    cohorts: &[GeneCohort],
    m_of: impl Fn(&GeneCohort) -> usize,
    reps: usize,
    seed: u64,
) -> Result<ImputedGenes> {
    cohorts
        .iter()
        .map(|c| Ok((c.gene.clone(), impute_repetitions(c, m_of(c), reps, seed)?)))
        .collect()
}

/// Tolerance model of every gene from its imputation repetitions.
pub fn tolerance_genes(
    imputed: &ImputedGenes,
    prior: Option<&PseudoPriorSpec>,
    p: f64,
) -> Result<IndexMap<String, GammaToleranceModel>> {
    imputed
        .iter()
        .map(|(g, reps)| {
            let model = fit_repetitions(reps, prior)
                .and_then(|f| f.model(p))
                .map_err(|e| e.in_stage(&format!("tolerance gene {g}")))?;
            Ok((g.clone(), model))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifyOutput {
    pub z_med: f64,
    pub assignment: StratifiedAssignment,
    pub models: BTreeMap<String, StratumModels>,
}

/// Digests of `files`, named relative to `out`.
pub fn stage_record(out: &Path, name: &str, files: &[PathBuf]) -> Result<StageRecord> {
    let outputs = files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(out).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok(OutputDigest {
                path,
                sha256: file_sha256(f)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StageRecord {
        name: name.to_string(),
        outputs,
    })
}

struct Recorder<'a> {
    out: &'a Path,
    stages: Vec<StageRecord>,
}

impl Recorder<'_> {
    fn record(&mut self, name: &str, files: &[PathBuf]) -> Result<()> {
        self.stages.push(stage_record(self.out, name, files)?);
        Ok(())
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Run every stage and write the manifest. On a stage failure the outputs
/// written so far stay in place, a `FAILED` marker names the stage, and the
/// manifest records the failure.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let counts_path = cfg
        .counts
        .as_ref()
        .ok_or_else(|| Error::Config("`counts` is required to run the pipeline".into()))?;
    let panel_path = cfg
        .panel
        .as_ref()
        .ok_or_else(|| Error::Config("`panel` is required to run the pipeline".into()))?;
    let seeds = stage_seeds(cfg.seed);
    // Resolve the prior before any compute so a bad prior file fails fast.
    let prior = cfg.load_prior(seeds["prior"])?;

    let out = cfg.out_dir.as_path();
    create_dir(out)?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let config_text = cfg.to_toml_string()?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, &config_text).map_err(|e| Error::io(&config_path, e))?;

    let mut manifest = Manifest::new(cfg.digest()?, seeds.clone());
    let mut rec = Recorder {
        out,
        stages: Vec::new(),
    };
    let mut stage = "lcnr";
    let result = (|| -> Result<()> {
        let panel = PanelDef::load(panel_path)?;
        let counts = load_counts(counts_path, &panel)?;
        let lcnr = build_lcnr(&panel, &counts, &cfg.reference_samples, cfg.pseudo_count)?;
        let dir = out.join("lcnr");
        create_dir(&dir)?;
        let mut files = Vec::new();
        for m in &lcnr {
            let f = dir.join(format!("{}.tsv", m.sample_id));
            write_lcnr_tsv(&f, m)?;
            files.push(f);
        }
        rec.record(stage, &files)?;

        stage = "fit";
        let summaries = fit_cohort(&lcnr, &cfg.hyper(), &cfg.fit_settings(), seeds["fit"])?;
        let dir = out.join("posteriors");
        create_dir(&dir)?;
        let mut files = Vec::new();
        for s in &summaries {
            let f = dir.join(format!("{}.json", s.sample_id));
            s.save(&f)?;
            files.push(f);
        }
        rec.record(stage, &files)?;

        stage = "impute";
        let cohorts = gene_cohorts(&summaries)?;
        let count = cfg.impute_count();
        let imputed = impute_genes(
            &cohorts,
            |c| count.resolve(c.len()),
            cfg.reps,
            seeds["impute"],
        )?;
        let f = out.join("imputed.json");
        write_json(&f, &imputed)?;
        rec.record(stage, &[f])?;

        stage = "tolerance";
        let models = tolerance_genes(&imputed, prior.as_ref(), cfg.p)?;
        let f = out.join("tolerance.json");
        write_json(&f, &models)?;
        rec.record(stage, &[f])?;

        if cfg.stratify {
            stage = "stratify";
            let assignment = evidence_split_summaries(&summaries, cfg.force)?;
            let plan = TolerancePlan {
                impute: count,
                reps: cfg.reps,
                prior: prior.clone(),
                seed: seeds["stratify"],
            };
            let models = stratified_tolerance(&assignment, &cohorts, &plan, cfg.p)?;
            let f = out.join("stratify.json");
            write_json(
                &f,
                &StratifyOutput {
                    z_med: assignment.z_med,
                    assignment,
                    models,
                },
            )?;
            rec.record(stage, &[f])?;
        }
        Ok(())
    })();

    manifest.stages = rec.stages;
    if let Err(e) = result {
        let e = e.in_stage(stage);
        manifest.status = FAILED_MARKER.into();
        manifest.failed_stage = Some(stage.to_string());
        manifest.error = Some(e.to_string());
        std::fs::write(&marker, format!("stage: {stage}\n{e}\n"))
            .map_err(|e| Error::io(&marker, e))?;
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
        return Err(e);
    }
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
