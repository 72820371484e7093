use std::path::Path;
use std::process::{Command, Output};

fn ampcal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampcal"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("ampcal runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ampcal(tmp.path(), &["fit"])), 2);
    assert_eq!(
        code(&ampcal(
            tmp.path(),
            &[
                "simulate",
                "--n",
                "4",
                "--seed",
                "18446744073709551615",
                "--out",
                "x"
            ]
        )),
        2
    );
    let missing = ampcal(
        tmp.path(),
        &["evaluate", "sweep", "--config", "none.toml", "--out", "o"],
    );
    assert_eq!(code(&missing), 2);
    std::fs::write(
        tmp.path().join("bad.toml"),
        "replicates = 3\nunknown_key = 1\n",
    )
    .unwrap();
    assert_eq!(
        code(&ampcal(
            tmp.path(),
            &["evaluate", "sweep", "--config", "bad.toml", "--out", "o"]
        )),
        2
    );
}

#[test]
fn missing_counts_is_a_data_error_with_failed_marker() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(
        ampcal(tmp.path(), &["simulate", "--n", "3", "--out", "sim"])
            .status
            .success()
    );
    let out = ampcal(
        tmp.path(),
        &[
            "run",
            "--counts",
            "absent.tsv",
            "--panel",
            "sim/panel.json",
            "--ess",
            "0",
            "--out",
            "run",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let marker = std::fs::read_to_string(tmp.path().join("run/FAILED")).unwrap();
    assert!(marker.starts_with("stage: lcnr"), "{marker}");
}

#[test]
fn stratify_refuses_fifteen_samples() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ampcal(
        tmp.path(),
        &["simulate", "--n", "15", "--seed", "2", "--out", "sim"]
    )
    .status
    .success());
    let out = ampcal(
        tmp.path(),
        &[
            "run",
            "--counts",
            "sim/counts.tsv",
            "--panel",
            "sim/panel.json",
            "--ess",
            "0",
            "--draws",
            "100",
            "--warmup",
            "100",
            "--reps",
            "3",
            "--stratify",
            "--out",
            "run",
        ],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(code(&out), 2, "{stderr}");
    assert!(stderr.contains("K > 20"), "{stderr}");
    assert!(tmp.path().join("run/tolerance.json").exists());
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    for study in ["loo", "sweep", "impute-sweep", "mixture", "biasvar"] {
        let out = ampcal(tmp.path(), &["evaluate", study, "--print-config"]);
        assert!(out.status.success());
        let file = format!("{study}.toml");
        std::fs::write(tmp.path().join(&file), &out.stdout).unwrap();
        let again = ampcal(
            tmp.path(),
            &["evaluate", study, "--config", &file, "--print-config"],
        );
        assert_eq!(out.stdout, again.stdout, "{study}");
    }
}
