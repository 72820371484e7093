use std::path::{Path, PathBuf};

use ampcal_core::bayescnv::{fit_cohort, FitSettings, HmcSettings, ModelHyperParams};
use ampcal_core::comparators::{
    coarsened_intervals, default_learning_rate, hpd_intervals, sandwich_intervals,
    ComparatorInterval, Method,
};
use ampcal_core::config::{load_toml, to_toml, RunConfig};
use ampcal_core::harness::coverage::{fold_params, mean_tolerance};
use ampcal_core::harness::output::write_json;
use ampcal_core::imputation::ImputeCount;
use ampcal_core::panel_io::{
    build_lcnr, load_counts, read_lcnr_tsv, write_counts_tsv, write_lcnr_tsv, LcnrMatrix, PanelDef,
};
use ampcal_core::pipeline::{
    create_dir, gene_cohorts, impute_genes, load_imputed, load_posteriors_dir, run_pipeline,
    sha256_hex, stage_record, stage_seeds, tolerance_genes, Manifest, StratifyOutput,
    MANIFEST_FILE,
};
use ampcal_core::seed::derive_seed;
use ampcal_core::stratify::{evidence_split_summaries, stratified_tolerance, TolerancePlan};
use ampcal_core::synth::{gen_panel, SynthSpec};
use ampcal_core::tolerance::PseudoPriorSpec;
use ampcal_core::{Error, Result};

use crate::{
    CompareArgs, FitArgs, ImputeArgs, ImputeKnobs, LcnrArgs, ModelArgs, PriorArgs, RunArgs,
    SimulateArgs, StratifyArgs, ToleranceArgs,
};

/// One lCNR file, or every `*.tsv` of a directory in name order.
fn read_lcnr_inputs(path: &Path, pseudo_count: f64) -> Result<Vec<LcnrMatrix>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no lCNR files in {}",
            path.display()
        )));
    }
    files
        .iter()
        .map(|f| {
            let id = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            read_lcnr_tsv(f, &id, pseudo_count)
        })
        .collect()
}

impl ModelArgs {
    fn hyper(&self) -> Result<ModelHyperParams> {
        let hp = match &self.hyper {
            Some(p) => load_toml::<RunConfig>(p)?.hyper(),
            None => ModelHyperParams::default(),
        };
        hp.validate()?;
        Ok(hp)
    }

    fn hmc(&self) -> HmcSettings {
        HmcSettings {
            n_warmup: self.warmup,
            n_draws: self.draws,
            n_leapfrog: self.leapfrog_steps,
            ..HmcSettings::default()
        }
    }
}

impl ImputeKnobs {
    fn count(&self) -> Result<ImputeCount> {
        if self.reps == 0 {
            return Err(Error::Config("--reps must be at least 1".into()));
        }
        match self.m {
            Some(m) => Ok(ImputeCount::Count(m)),
            None if (0.0..1.0).contains(&self.m_frac) => Ok(ImputeCount::Fraction(self.m_frac)),
            None => Err(Error::Config(format!(
                "--m-frac must lie in [0, 1), got {}",
                self.m_frac
            ))),
        }
    }
}

impl PriorArgs {
    /// Validated through the run config so the rules match `run`.
    fn resolve(&self, seed: u64) -> Result<Option<PseudoPriorSpec>> {
        let cfg = RunConfig {
            prior: self.prior.clone(),
            prior_alpha: self.prior_alpha,
            prior_scale: self.prior_scale,
            prior_draws: self.prior_draws,
            ess: self.ess,
            p: self.p,
            seed,
            ..RunConfig::default()
        };
        cfg.validate()?;
        cfg.load_prior(stage_seeds(seed)["prior"])
    }
}

pub fn lcnr(a: LcnrArgs) -> Result<()> {
    let panel = PanelDef::load(&a.panel)?;
    let counts = load_counts(&a.counts, &panel)?;
    let samples = build_lcnr(&panel, &counts, &a.reference_samples, a.pseudo_count)?;
    create_dir(&a.out)?;
    for m in &samples {
        write_lcnr_tsv(&a.out.join(format!("{}.tsv", m.sample_id)), m)?;
    }
    log::info!("wrote {} lCNR files to {}", samples.len(), a.out.display());
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let hp = a.model.hyper()?;
    let samples = read_lcnr_inputs(&a.lcnr, a.model.pseudo_count)?;
    let settings = FitSettings {
        hmc: a.model.hmc(),
        level: a.level,
        keep_draws: a.keep_draws,
    };
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    let summaries = fit_cohort(&samples, &hp, &settings, stage_seeds(a.model.seed)["fit"])?;
    create_dir(&a.out)?;
    for s in &summaries {
        s.save(&a.out.join(format!("{}.json", s.sample_id)))?;
        if s.diagnostics.divergences > 0 {
            log::warn!(
                "sample {}: {} divergent transitions",
                s.sample_id,
                s.diagnostics.divergences
            );
        }
    }
    log::info!(
        "wrote {} posterior summaries to {}",
        summaries.len(),
        a.out.display()
    );
    Ok(())
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    let hp = a.model.hyper()?;
    let hmc = a.model.hmc();
    let samples = read_lcnr_inputs(&a.lcnr, a.model.pseudo_count)?;
    let seeds = stage_seeds(a.model.seed);
    let needs_fit = methods
        .iter()
        .any(|m| matches!(m, Method::Hpd | Method::Mse | Method::Gamma));
    let summaries = if needs_fit {
        let settings = FitSettings {
            hmc,
            level: a.level,
            keep_draws: false,
        };
        fit_cohort(&samples, &hp, &settings, seeds["fit"])?
    } else {
        Vec::new()
    };
    let mut out: Vec<ComparatorInterval> = Vec::new();
    for method in methods {
        match method {
            Method::Hpd => out.extend(summaries.iter().flat_map(hpd_intervals)),
            Method::Coarsened => {
                for s in &samples {
                    let eta = a.eta.unwrap_or_else(|| default_learning_rate(s));
                    let seed = derive_seed(derive_seed(seeds["fit"], &s.sample_id), "coarsened");
                    out.extend(coarsened_intervals(s, &hp, eta, a.level, &hmc, seed)?);
                }
            }
            Method::Sandwich => {
                for s in &samples {
                    out.extend(sandwich_intervals(s, &hp, a.level)?);
                }
            }
            Method::Mse | Method::Gamma => {
                if !(0.0..1.0).contains(&a.m_frac) || a.reps == 0 {
                    return Err(Error::Config(
                        "--m-frac must lie in [0, 1) and --reps be positive".into(),
                    ));
                }
                let plan = TolerancePlan {
                    impute: ImputeCount::Fraction(a.m_frac),
                    reps: a.reps,
                    prior: None,
                    seed: seeds["impute"],
                };
                for c in gene_cohorts(&summaries)? {
                    let t = mean_tolerance(&fold_params(&c, &plan, method)?, a.level);
                    out.push(ComparatorInterval {
                        method,
                        sample_id: String::new(),
                        gene: c.gene.clone(),
                        level: a.level,
                        lo: -t.sqrt(),
                        hi: t.sqrt(),
                    });
                }
            }
        }
    }
    write_json(&a.out, &out)?;
    log::info!("wrote {} intervals to {}", out.len(), a.out.display());
    Ok(())
}

pub fn impute(a: ImputeArgs) -> Result<()> {
    let count = a.knobs.count()?;
    let summaries = load_posteriors_dir(&a.posteriors)?;
    let cohorts = gene_cohorts(&summaries)?;
    let imputed = impute_genes(
        &cohorts,
        |c| count.resolve(c.len()),
        a.knobs.reps,
        stage_seeds(a.seed)["impute"],
    )?;
    write_json(&a.out, &imputed)?;
    log::info!(
        "imputed {} genes over {} repetitions",
        imputed.len(),
        a.knobs.reps
    );
    Ok(())
}

pub fn tolerance(a: ToleranceArgs) -> Result<()> {
    let prior = a.prior.resolve(a.seed)?;
    let imputed = load_imputed(&a.imputed)?;
    let models = tolerance_genes(&imputed, prior.as_ref(), a.prior.p)?;
    for m in models.values() {
        log::info!(
            "{}: T = {:.4}, lCNR bound {:.4}, minimum detectable CNV ratio {:.3}",
            m.gene,
            m.t,
            m.lcnr_bound,
            m.min_detectable_cnv
        );
    }
    write_json(&a.out, &models)
}

pub fn stratify(a: StratifyArgs) -> Result<()> {
    let count = a.knobs.count()?;
    let prior = a.prior.resolve(a.seed)?;
    let summaries = load_posteriors_dir(&a.posteriors)?;
    let assignment = evidence_split_summaries(&summaries, a.force)?;
    let cohorts = gene_cohorts(&summaries)?;
    let plan = TolerancePlan {
        impute: count,
        reps: a.knobs.reps,
        prior,
        seed: stage_seeds(a.seed)["stratify"],
    };
    let models = stratified_tolerance(&assignment, &cohorts, &plan, a.prior.p)?;
    write_json(
        &a.out,
        &StratifyOutput {
            z_med: assignment.z_med,
            assignment,
            models,
        },
    )
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => load_toml(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.print_spec {
        print!("{}", to_toml(&spec)?);
        return Ok(());
    }
    let out = a.out.expect("clap requires --out");
    if a.n == 0 {
        return Err(Error::Config("--n must be positive".into()));
    }
    let panel = gen_panel(&spec, a.n)?;
    let lcnr_dir = out.join("lcnr");
    create_dir(&lcnr_dir)?;
    let mut files = Vec::new();
    for s in &panel.samples {
        let f = lcnr_dir.join(format!("{}.tsv", s.sample_id));
        write_lcnr_tsv(&f, s)?;
        files.push(f);
    }
    let labels = out.join("labels.json");
    write_json(&labels, &panel.labels)?;
    let panel_path = out.join("panel.json");
    std::fs::write(&panel_path, panel.panel_def()?.to_json_string() + "\n")
        .map_err(|e| Error::io(&panel_path, e))?;
    let counts = out.join("counts.tsv");
    write_counts_tsv(&counts, &panel.counts_records(a.depth))?;
    let spec_text = to_toml(&spec)?;
    let spec_path = out.join("spec.toml");
    std::fs::write(&spec_path, &spec_text).map_err(|e| Error::io(&spec_path, e))?;
    files.extend([labels, panel_path, counts, spec_path]);

    let mut seeds = std::collections::BTreeMap::new();
    seeds.insert("master".to_string(), spec.seed);
    let digest = sha256_hex(format!("{spec_text}n = {}\ndepth = {}\n", a.n, a.depth).as_bytes());
    let mut manifest = Manifest::new(digest, seeds);
    manifest
        .stages
        .push(stage_record(&out, "simulate", &files)?);
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    log::info!("simulated {} samples into {}", a.n, out.display());
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if a.counts.is_some() {
        cfg.counts = a.counts;
    }
    if a.panel.is_some() {
        cfg.panel = a.panel;
    }
    if a.prior.is_some() {
        cfg.prior = a.prior;
    }
    if let Some(v) = a.out {
        cfg.out_dir = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.ess {
        cfg.ess = v;
    }
    if let Some(v) = a.p {
        cfg.p = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.m {
        cfg.m = Some(v);
    }
    if let Some(v) = a.m_frac {
        cfg.m = None;
        cfg.m_frac = v;
    }
    if let Some(v) = a.draws {
        cfg.draws = v;
    }
    if let Some(v) = a.warmup {
        cfg.warmup = v;
    }
    cfg.stratify |= a.stratify;
    cfg.force |= a.force;
    if a.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let manifest = run_pipeline(&cfg)?;
    log::info!(
        "run complete: {} stages, manifest in {}",
        manifest.stages.len(),
        cfg.out_dir.join(MANIFEST_FILE).display()
    );
    Ok(())
}
