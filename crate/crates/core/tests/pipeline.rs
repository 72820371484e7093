use std::path::{Path, PathBuf};

use ampcal_core::config::RunConfig;
use ampcal_core::panel_io::write_counts_tsv;
use ampcal_core::pipeline::{run_pipeline, FAILED_MARKER, MANIFEST_FILE};
use ampcal_core::synth::{gen_panel, SynthSpec};
use ampcal_core::Error;

/// Counts and panel files for `n` simulated samples.
fn simulated_inputs(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let panel = gen_panel(
        &SynthSpec {
            seed: 3,
            ..SynthSpec::default()
        },
        n,
    )
    .unwrap();
    let counts = dir.join("counts.tsv");
    let panel_path = dir.join("panel.json");
    write_counts_tsv(&counts, &panel.counts_records(2000)).unwrap();
    std::fs::write(&panel_path, panel.panel_def().unwrap().to_json_string()).unwrap();
    (counts, panel_path)
}

fn config(counts: PathBuf, panel: PathBuf, out: PathBuf) -> RunConfig {
    RunConfig {
        counts: Some(counts),
        panel: Some(panel),
        out_dir: out,
        draws: 150,
        warmup: 100,
        reps: 4,
        prior_alpha: Some(0.6),
        prior_scale: Some(0.01),
        seed: 12,
        ..RunConfig::default()
    }
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn pipeline_is_deterministic_and_records_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let (counts, panel) = simulated_inputs(tmp.path(), 22);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let mut cfg = config(counts, panel, a.clone());
    cfg.stratify = true;
    let manifest = run_pipeline(&cfg).unwrap();
    assert_eq!(manifest.status, "OK");
    let stages: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(stages, ["lcnr", "fit", "impute", "tolerance", "stratify"]);

    cfg.out_dir = b.clone();
    run_pipeline(&cfg).unwrap();
    for rel in [
        "imputed.json",
        "tolerance.json",
        "stratify.json",
        "posteriors/sim0000.json",
    ] {
        assert_eq!(read(&a, rel), read(&b, rel), "{rel} differs between runs");
    }

    // rerunning into the same directory reproduces the manifest exactly
    let first = read(&b, MANIFEST_FILE);
    run_pipeline(&cfg).unwrap();
    assert_eq!(first, read(&b, MANIFEST_FILE));
}

#[test]
fn small_cohort_stratification_leaves_a_failed_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let (counts, panel) = simulated_inputs(tmp.path(), 15);
    let out = tmp.path().join("run");
    let mut cfg = config(counts, panel, out.clone());
    cfg.stratify = true;
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(err.to_string().contains("K > 20"), "{err}");
    let marker = std::fs::read_to_string(out.join(FAILED_MARKER)).unwrap();
    assert!(marker.starts_with("stage: stratify"), "{marker}");
    assert!(out.join("tolerance.json").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&read(&out, MANIFEST_FILE)).unwrap();
    assert_eq!(manifest["status"], "FAILED");
}

#[test]
fn missing_prior_file_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (counts, panel) = simulated_inputs(tmp.path(), 5);
    let out = tmp.path().join("run");
    let mut cfg = config(counts, panel, out.clone());
    cfg.prior_alpha = None;
    cfg.prior_scale = None;
    cfg.prior = Some(tmp.path().join("nope.json"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(!out.exists());
}
