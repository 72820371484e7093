//! `ampcal`: per-gene tolerance limits for CNV calls on amplicon panels.

mod commands;
mod evaluate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seeds are TOML integers in configs and manifests, so they stay below 2^63.
fn parse_seed(s: &str) -> Result<u64, String> {
    let v: u64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > i64::MAX as u64 {
        return Err(format!("seed must be at most {}", i64::MAX));
    }
    Ok(v)
}

#[derive(Parser)]
#[command(
    name = "ampcal",
    version,
    about = "Per-gene tolerance limits for Bayesian CNV calls on targeted amplicon panels",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.\n\
                  Set RUST_LOG=debug for detailed progress."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute median-normalized lCNR features from read counts.
    Lcnr(LcnrArgs),
    /// Fit the hierarchical CNV model to every sample.
    Fit(FitArgs),
    /// Per-gene intervals of the comparator methods.
    Compare(CompareArgs),
    /// Replace the top values of every gene cohort by truncated-normal draws.
    Impute(ImputeArgs),
    /// Fit per-gene Gamma tolerance limits to imputed cohorts.
    Tolerance(ToleranceArgs),
    /// Split the cohort on model evidence and fit one tolerance per stratum.
    Stratify(StratifyArgs),
    /// Simulate a panel with known ground truth.
    Simulate(SimulateArgs),
    /// Run an evaluation study.
    Evaluate(EvaluateArgs),
    /// Run lcnr, fit, impute, tolerance and optionally stratify from one config.
    Run(RunArgs),
}

#[derive(Args)]
struct LcnrArgs {
    /// Counts TSV with columns sample_id, amplicon_id, test_count, ref_count.
    #[arg(long)]
    counts: PathBuf,
    /// Panel JSON mapping each gene to its ordered amplicon ids.
    #[arg(long)]
    panel: PathBuf,
    /// Reference samples whose test counts are averaged per amplicon. Without
    /// any, each record's own ref_count is used.
    #[arg(long, value_delimiter = ',')]
    reference_samples: Vec<String>,
    /// Pseudo-count added to both counts before taking logs.
    #[arg(long, default_value_t = 0.5)]
    pseudo_count: f64,
    /// Output directory; one <sample>.tsv per non-reference sample.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// TOML file with hyperparameters (prior_mu0_sd, alpha_sigma, beta_sigma,
    /// alpha_tau0, beta_tau0, alpha_tau, beta_tau); missing keys keep defaults.
    #[arg(long)]
    hyper: Option<PathBuf>,
    /// Retained HMC draws per sample.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// HMC warmup iterations per sample.
    #[arg(long, default_value_t = 500)]
    warmup: usize,
    /// Leapfrog steps per HMC iteration.
    #[arg(long, default_value_t = 32)]
    leapfrog_steps: usize,
    /// Master seed; each sample uses a seed derived from it and its id.
    #[arg(long, default_value_t = 0, value_parser = parse_seed)]
    seed: u64,
    /// Pseudo-count recorded with lCNR files read from disk.
    #[arg(long, default_value_t = 0.5)]
    pseudo_count: f64,
}

#[derive(Args)]
struct FitArgs {
    /// lCNR TSV of one sample, or a directory of them (sample id = file stem).
    #[arg(long)]
    lcnr: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Credible level of the HPD intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Store the μ draws in each summary.
    #[arg(long)]
    keep_draws: bool,
    /// Output directory; one <sample>.json posterior summary per sample.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// lCNR TSV of one sample, or a directory of them. The mse and gamma
    /// methods need a directory holding a cohort.
    #[arg(long)]
    lcnr: PathBuf,
    /// Comma-separated methods: hpd, coarsened, sandwich, mse, gamma.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hpd,coarsened,sandwich,mse"
    )]
    methods: Vec<String>,
    /// Interval level; cohort methods use miscoverage 1 - level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Coarsening learning rate; defaults to n/(n + 10) with n the mean
    /// amplicons per gene.
    #[arg(long)]
    eta: Option<f64>,
    /// Imputed fraction for the cohort methods.
    #[arg(long, default_value_t = 0.2)]
    m_frac: f64,
    /// Imputation repetitions for the cohort methods.
    #[arg(long, default_value_t = 25)]
    reps: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Output JSON file with the list of intervals.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImputeKnobs {
    /// Number of top values to impute per gene.
    #[arg(long, conflicts_with = "m_frac")]
    m: Option<usize>,
    /// Imputed fraction of the cohort, m = ceil(fraction * K).
    #[arg(long, default_value_t = 0.2)]
    m_frac: f64,
    /// Independent imputation repetitions.
    #[arg(long, default_value_t = 25)]
    reps: usize,
}

#[derive(Args)]
struct ImputeArgs {
    /// Directory of posterior summaries written by `fit`.
    #[arg(long)]
    posteriors: PathBuf,
    #[command(flatten)]
    knobs: ImputeKnobs,
    #[arg(long, default_value_t = 0, value_parser = parse_seed)]
    seed: u64,
    /// Output JSON: per gene, the list of imputed repetitions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PriorArgs {
    /// Pseudo-prior JSON (source, values, effective_sample_size).
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Reference Gamma shape for a generated pseudo-prior.
    #[arg(long, requires = "prior_scale")]
    prior_alpha: Option<f64>,
    /// Reference Gamma scale for a generated pseudo-prior.
    #[arg(long, requires = "prior_alpha")]
    prior_scale: Option<f64>,
    /// Number of generated pseudo-observations.
    #[arg(long, default_value_t = 1000)]
    prior_draws: usize,
    /// Effective sample size of the pseudo-prior; 0 fits without one.
    #[arg(long, default_value_t = 5.0)]
    ess: f64,
    /// Miscoverage of the tolerance limit.
    #[arg(long, default_value_t = 0.05)]
    p: f64,
}

#[derive(Args)]
struct ToleranceArgs {
    /// Imputed cohorts JSON written by `impute`.
    #[arg(long)]
    imputed: PathBuf,
    #[command(flatten)]
    prior: PriorArgs,
    /// Seed of a generated pseudo-prior.
    #[arg(long, default_value_t = 0, value_parser = parse_seed)]
    seed: u64,
    /// Output JSON: per gene, the tolerance model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StratifyArgs {
    /// Directory of posterior summaries written by `fit`.
    #[arg(long)]
    posteriors: PathBuf,
    /// Stratify cohorts of 20 or fewer samples anyway.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    knobs: ImputeKnobs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 0, value_parser = parse_seed)]
    seed: u64,
    /// Output JSON with z_med, the assignment and per-stratum models.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation spec; the default five-gene panel when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Overrides the spec seed.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Reference depth of the rendered counts file.
    #[arg(long, default_value_t = 2000)]
    depth: u64,
    /// Print the default spec as TOML and exit.
    #[arg(long)]
    print_spec: bool,
    /// Output directory for lcnr/*.tsv, labels.json, panel.json and counts.tsv.
    #[arg(long, required_unless_present = "print_spec")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    /// Leave-one-out calibration of the tolerance and every comparator.
    Loo,
    /// Estimator bias, standard error and MSE over cohort sizes.
    Sweep,
    /// Tolerance error against the imputed fraction.
    ImputeSweep,
    /// Pooled against evidence-stratified tolerances.
    Mixture,
    /// Bias and variance as degraded samples enter the reference pool.
    Biasvar,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(value_enum)]
    study: Study,
    /// TOML study config; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
    /// Output directory for CSV tables, summary.json and the manifest.
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML run config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    panel: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    #[arg(long)]
    ess: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, conflicts_with = "m_frac")]
    m: Option<usize>,
    #[arg(long)]
    m_frac: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Add the evidence-stratified stage.
    #[arg(long)]
    stratify: bool,
    /// Stratify cohorts of 20 or fewer samples anyway.
    #[arg(long)]
    force: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Lcnr(a) => commands::lcnr(a),
        Command::Fit(a) => commands::fit(a),
        Command::Compare(a) => commands::compare(a),
        Command::Impute(a) => commands::impute(a),
        Command::Tolerance(a) => commands::tolerance(a),
        Command::Stratify(a) => commands::stratify(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => evaluate::evaluate(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
