use std::process::Command;

use mmv_core::cmat::{encode, write_cmat, write_real_vector};
use mmv_core::model::{gaussian_pilots, seeded_rng};
use mmv_harness::{
    emit_results, import_matrix, run_calibration, run_sweep, write_results, ExperimentConfig,
    ExperimentRecord, HarnessError, RunOptions, CSV_HEADER,
};

fn config(solvers: &str, values: &str, trials: usize) -> ExperimentConfig {
    let text = format!(
        r#"
trials = {trials}
root_seed = 11
calibration_trials = 20
validation_trials = 5
timing = false

[scenario]
activity = "iid"
n = 30
m = 4
l = 8
sigma2 = 0.1
p = 0.15

[sweep]
axis = "L/N"
values = [{values}]

{solvers}
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

const ALL: &str = r#"
[[solvers]]
kind = "group-lasso"
[[solvers]]
kind = "amp"
[[solvers]]
kind = "map"
[[solvers]]
kind = "ml"
[[solvers]]
kind = "cov-lasso"
"#;

fn csv(records: &[ExperimentRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_results(records, &mut out).unwrap();
    out
}

#[test]
fn single_trial_single_solver_gives_one_record_per_metric() {
    let cfg = config("[[solvers]]\nkind = \"amp\"\ngamma_star = 0.5", "0.3", 1);
    let records = run_sweep(&cfg, &RunOptions::serial()).unwrap();
    let metrics: Vec<&str> = records.iter().map(|r| r.metric.as_str()).collect();
    assert_eq!(metrics, ["error_rate", "gamma_star", "mse"]);
    assert!(records
        .iter()
        .all(|r| r.solver == "amp" && r.excluded_trials == 0));
    assert_eq!(records[0].trials, 1);
}

#[test]
fn reruns_are_byte_identical_serial_and_parallel() {
    let cfg = config(ALL, "0.2, 0.3", 6);
    let first = csv(&run_sweep(&cfg, &RunOptions::serial()).unwrap());
    let second = csv(&run_sweep(&cfg, &RunOptions::serial()).unwrap());
    let parallel = csv(&run_sweep(&cfg, &RunOptions { workers: Some(3) }).unwrap());
    assert_eq!(first, second);
    assert_eq!(first, parallel);
}

#[test]
fn records_are_sorted_by_sweep_value_then_solver() {
    let cfg = config(ALL, "0.3, 0.2", 2);
    let records = run_sweep(&cfg, &RunOptions::serial()).unwrap();
    let keys: Vec<(f64, String)> = records
        .iter()
        .map(|r| (r.sweep_value, r.solver.clone()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(keys, sorted);
    assert!(records
        .iter()
        .any(|r| r.solver == "group-lasso" && r.metric == "lambda_rel"));
    assert!(records
        .iter()
        .all(|r| r.solver != "cov-lasso" || r.metric != "mse"));
}

#[test]
fn calibration_only_reports_threshold_and_error() {
    let cfg = config("[[solvers]]\nkind = \"ml\"", "0.3", 1);
    let records = run_calibration(&cfg, &RunOptions::serial()).unwrap();
    let metrics: Vec<&str> = records.iter().map(|r| r.metric.as_str()).collect();
    assert_eq!(metrics, ["calibration_error_rate", "gamma_star"]);
    assert_eq!(records[1].trials, 20);
}

#[test]
fn emitted_csv_has_fixed_header_and_round_trips_numbers() {
    let record = |v: f64| ExperimentRecord {
        sweep_axis: "p".into(),
        sweep_value: 0.1,
        solver: "amp".into(),
        metric: "mse".into(),
        value: v,
        trials: 3,
        excluded_trials: 0,
        seed: 42,
        pilot_source: "gaussian".into(),
        ms_per_trial: None,
    };
    let records = vec![record(0.1), record(1.0 / 3.0), record(2e-300)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit_results(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    for (line, r) in lines[1..].iter().zip(&records) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(
            fields[4].parse::<f64>().unwrap().to_bits(),
            r.value.to_bits()
        );
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.1);
    }
    assert!(matches!(
        emit_results(&[], &path),
        Err(HarnessError::EmptyResults)
    ));
    assert!(emit_results(&records, dir.path().join("missing/out.csv")).is_err());
}

#[test]
fn import_matrix_is_bit_exact_and_reports_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_pilots(5, 7, false, &mut seeded_rng(3));
    let path = dir.path().join("a.cmat");
    write_cmat(&path, &a).unwrap();
    let back = import_matrix(&path).unwrap();
    assert!(a
        .re()
        .iter()
        .zip(back.re())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a
        .im()
        .iter()
        .zip(back.im())
        .all(|(x, y)| x.to_bits() == y.to_bits()));

    let bytes = encode(&a).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    let err = import_matrix(&path).unwrap_err().to_string();
    assert!(err.contains("560") && err.contains("552"), "{err}");
    std::fs::write(&path, b"CMAT1 0 0\n").unwrap();
    assert!(matches!(
        import_matrix(&path),
        Err(HarnessError::Load(_, mmv_core::Error::EmptyMatrix { .. }))
    ));
}

#[test]
fn file_pilots_and_manifest_priors_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian_pilots(9, 30, true, &mut seeded_rng(5));
    write_cmat(dir.path().join("pilots.cmat"), &a).unwrap();
    write_real_vector(dir.path().join("eps.cmat"), &vec![0.15; 30]).unwrap();
    std::fs::write(
        dir.path().join("manifest.toml"),
        "gamma_star = 0.4\neps_file = \"eps.cmat\"\n",
    )
    .unwrap();
    let text = r#"
trials = 3
root_seed = 1
calibration_trials = 0
timing = false

[scenario]
activity = "iid"
n = 30
m = 4
l = 9
sigma2 = 0.1
p = 0.15
pilots = "file:pilots.cmat"

[sweep]
axis = "L/N"
values = [0.3]

[[solvers]]
kind = "amp"
manifest = "manifest.toml"
"#;
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let records = run_sweep(&cfg, &RunOptions::serial()).unwrap();
    let gamma = records.iter().find(|r| r.metric == "gamma_star").unwrap();
    assert_eq!(gamma.value, 0.4);
    assert!(records[0].pilot_source.starts_with("file:"));

    let wrong = cfg_path.with_file_name("wrong.toml");
    std::fs::write(
        &wrong,
        text.replace("l = 9", "l = 10")
            .replace("[0.3]", "[0.33333]"),
    )
    .unwrap();
    let err = run_sweep(
        &ExperimentConfig::load(&wrong).unwrap(),
        &RunOptions::serial(),
    );
    assert!(err.is_err());
}

#[test]
fn cli_roundtrip_check_and_sweep() {
    let bin = env!("CARGO_BIN_EXE_mmv");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cmat");
    write_cmat(&path, &gaussian_pilots(3, 4, false, &mut seeded_rng(9))).unwrap();
    let out = Command::new(bin)
        .arg("roundtrip-check")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 3x4"));

    std::fs::write(&path, b"CMAT1 2 2\n").unwrap();
    let out = Command::new(bin)
        .arg("roundtrip-check")
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());

    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "trials = 5\nroot_seed = 2\ncalibration_trials = 10\n[scenario]\nactivity = \"iid\"\nn = 20\nm = 2\nl = 6\nsigma2 = 0.1\n[sweep]\naxis = \"M\"\nvalues = [2.0]\n[[solvers]]\nkind = \"ml\"\n",
    )
    .unwrap();
    let csv_path = dir.path().join("out.csv");
    let status = Command::new(bin)
        .args([
            "sweep",
            "--no-timing",
            "--trials",
            "3",
            "--values",
            "2,4",
            "-c",
        ])
        .arg(&cfg)
        .arg("-o")
        .arg(&csv_path)
        .env("MMV_WORKERS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.contains(",3,0,") || l.contains(",10,0,")));

    let out = Command::new(bin)
        .args(["coherence", "--l", "8", "--n", "16", "--group-size", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 6);
}
