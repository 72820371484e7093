use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ampcal_core::config::{load_toml, to_toml};
use ampcal_core::harness::biasvar::{bias_variance_decomposition, BiasVarConfig};
use ampcal_core::harness::impute_sweep::{summarize, ImputeSweepConfig};
use ampcal_core::harness::mixture::{mixture_study, MixtureConfig};
use ampcal_core::harness::output::{curve_rows, mace_rows, write_csv, write_json};
use ampcal_core::harness::sweep::{estimator_sweep, SweepConfig};
use ampcal_core::harness::{effective_level, CalibrationConfig, CalibrationReport};
use ampcal_core::pipeline::{
    create_dir, sha256_hex, stage_record, Manifest, CONFIG_FILE, MANIFEST_FILE,
};
use ampcal_core::Result;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{EvaluateArgs, Study};

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_toml(p),
        None => Ok(T::default()),
    }
}

/// Writes the effective config, hands the output directory to `body`, then
/// records every file it produced in the manifest.
fn study<T, F>(args: &EvaluateArgs, seed_of: fn(&mut T) -> &mut u64, body: F) -> Result<()>
where
    T: DeserializeOwned + Default + Serialize,
    F: FnOnce(&T, &Path) -> Result<Vec<PathBuf>>,
{
    let mut cfg: T = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        *seed_of(&mut cfg) = s;
    }
    let text = to_toml(&cfg)?;
    if args.print_config {
        print!("{text}");
        return Ok(());
    }
    let out = args.out.as_deref().expect("clap requires --out");
    create_dir(out)?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, &text).map_err(|e| ampcal_core::Error::io(&config_path, e))?;
    let mut files = body(&cfg, out)?;
    files.insert(0, config_path);
    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), *seed_of(&mut cfg));
    let mut manifest = Manifest::new(sha256_hex(text.as_bytes()), seeds);
    manifest.stages.push(stage_record(out, "evaluate", &files)?);
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

#[derive(Serialize)]
struct StudyCurveRow<'a> {
    gene: &'a str,
    variant: &'static str,
    nominal: f64,
    evaluated_level: f64,
    coverage: f64,
}

#[derive(Serialize)]
struct StudyMaceRow<'a> {
    gene: &'a str,
    variant: &'static str,
    mace_x100: f64,
    ci_lo: f64,
    ci_hi: f64,
    mean_width: f64,
    n_folds: usize,
}

#[derive(Serialize)]
struct QuantileCsvRow<'a> {
    gene: &'a str,
    level: f64,
    pooled: f64,
    plus: f64,
    minus: f64,
}

fn variant_rows<'a>(
    variant: &'static str,
    r: &'a CalibrationReport,
) -> impl Iterator<Item = StudyCurveRow<'a>> {
    r.grid
        .iter()
        .zip(&r.empirical_coverage)
        .map(move |(&g, &c)| StudyCurveRow {
            gene: &r.gene,
            variant,
            nominal: g,
            evaluated_level: effective_level(g),
            coverage: c,
        })
}

fn variant_mace<'a>(variant: &'static str, r: &'a CalibrationReport) -> StudyMaceRow<'a> {
    StudyMaceRow {
        gene: &r.gene,
        variant,
        mace_x100: r.mace_x100,
        ci_lo: r.mace_ci[0],
        ci_hi: r.mace_ci[1],
        mean_width: r.mean_width,
        n_folds: r.n_folds,
    }
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    match args.study {
        Study::Loo => study(
            &args,
            |c: &mut CalibrationConfig| &mut c.seed,
            |cfg, out| {
                let reports = cfg.run()?;
                for r in &reports {
                    log::info!("{} {}: MACE x100 = {:.2}", r.gene, r.method, r.mace_x100);
                }
                let files = [
                    out.join("curves.csv"),
                    out.join("mace.csv"),
                    out.join("summary.json"),
                ];
                write_csv(&files[0], &curve_rows(&reports))?;
                write_csv(&files[1], &mace_rows(&reports))?;
                write_json(&files[2], &reports)?;
                Ok(files.to_vec())
            },
        ),
        Study::Sweep => study(
            &args,
            |c: &mut SweepConfig| &mut c.seed,
            |cfg, out| {
                let results = estimator_sweep(cfg)?;
                let files = [out.join("sweep.csv"), out.join("summary.json")];
                write_csv(&files[0], &results)?;
                write_json(
                    &files[1],
                    &serde_json::json!({ "true_value": cfg.true_value(), "results": results }),
                )?;
                Ok(files.to_vec())
            },
        ),
        Study::ImputeSweep => study(
            &args,
            |c: &mut ImputeSweepConfig| &mut c.seed,
            |cfg, out| {
                let rows = cfg.run()?;
                let summary = summarize(&rows);
                let files = [
                    out.join("impute_sweep.csv"),
                    out.join("impute_summary.csv"),
                    out.join("summary.json"),
                ];
                write_csv(&files[0], &rows)?;
                write_csv(&files[1], &summary)?;
                write_json(&files[2], &summary)?;
                Ok(files.to_vec())
            },
        ),
        Study::Mixture => study(
            &args,
            |c: &mut MixtureConfig| &mut c.seed,
            |cfg, out| {
                let report = mixture_study(cfg)?;
                log::info!(
                    "evidence split agrees with the generator on {:.0}% of samples",
                    100.0 * report.split_agreement
                );
                let quantiles: Vec<QuantileCsvRow> = report
                    .genes
                    .iter()
                    .flat_map(|g| {
                        g.quantiles.iter().map(move |q| QuantileCsvRow {
                            gene: &g.gene,
                            level: q.level,
                            pooled: q.pooled,
                            plus: q.plus,
                            minus: q.minus,
                        })
                    })
                    .collect();
                let curves: Vec<StudyCurveRow> = report
                    .genes
                    .iter()
                    .flat_map(|g| {
                        variant_rows("pooled", &g.pooled)
                            .chain(variant_rows("stratified", &g.stratified))
                    })
                    .collect();
                let mace: Vec<StudyMaceRow> = report
                    .genes
                    .iter()
                    .flat_map(|g| {
                        [
                            variant_mace("pooled", &g.pooled),
                            variant_mace("stratified", &g.stratified),
                        ]
                    })
                    .collect();
                let files = [
                    out.join("quantiles.csv"),
                    out.join("curves.csv"),
                    out.join("mace.csv"),
                    out.join("summary.json"),
                ];
                write_csv(&files[0], &quantiles)?;
                write_csv(&files[1], &curves)?;
                write_csv(&files[2], &mace)?;
                write_json(&files[3], &report)?;
                Ok(files.to_vec())
            },
        ),
        Study::Biasvar => study(
            &args,
            |c: &mut BiasVarConfig| &mut c.seed,
            |cfg, out| {
                let rows = bias_variance_decomposition(cfg)?;
                let files = [out.join("biasvar.csv"), out.join("summary.json")];
                write_csv(&files[0], &rows)?;
                write_json(&files[1], &rows)?;
                Ok(files.to_vec())
            },
        ),
    }
}
