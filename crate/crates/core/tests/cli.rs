use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lowrank_laplace::experiment::compare_report;
use lowrank_laplace::metrics::{read_reports, AggregateRow};
use lowrank_laplace::subspace::ProjectorKind;

const CONFIG: &str = r#"
s_grid = [1, 2, 4]
seeds = [0, 1, 2, 3, 4]
methods = ["subset-magnitude", "subset-diagonal", "lowrank-diagonal", "lowrankopt-ggn", "none-full"]

[dataset]
kind = "sincos"
n = 60

[network]
hidden = [6]

[train]
epochs = 150
lr = 0.01
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lowrank-laplace"))
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

fn evaluate(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bin()
        .arg("evaluate")
        .arg("--config")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn evaluate_is_deterministic_and_aggregates_correctly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = evaluate(&config, &out_a, &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(evaluate(&config, &out_b, &[]).status.success());

    let metrics_a = fs::read(out_a.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, fs::read(out_b.join("metrics.csv")).unwrap());
    assert_eq!(
        fs::read(out_a.join("aggregate.csv")).unwrap(),
        fs::read(out_b.join("aggregate.csv")).unwrap()
    );
    // rerun on cached stages gives the same bytes
    assert!(evaluate(&config, &out_a, &[]).status.success());
    assert_eq!(metrics_a, fs::read(out_a.join("metrics.csv")).unwrap());

    // aggregate standard error recomputed from the per-run rows
    let (rows, skipped) = read_reports(&out_a.join("metrics.csv")).unwrap();
    assert_eq!(skipped, 0);
    let mut reader = csv::Reader::from_path(out_a.join("aggregate.csv")).unwrap();
    let agg: Vec<AggregateRow> = reader.deserialize().map(|r| r.unwrap()).collect();
    let row = agg
        .iter()
        .find(|r| r.method == ProjectorKind::SubsetMagnitude && r.s == 2)
        .unwrap();
    let traces: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == ProjectorKind::SubsetMagnitude && r.s == 2)
        .map(|r| r.trace)
        .collect();
    assert_eq!(traces.len(), 5);
    let mean = traces.iter().sum::<f64>() / 5.0;
    let var = traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 4.0;
    assert!((row.trace_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    assert!((row.trace_stderr.unwrap() - (var / 5.0).sqrt()).abs() <= 1e-12 * mean.abs().max(1.0));

    // full projector row with zero relative error
    assert!(rows
        .iter()
        .any(|r| r.method == ProjectorKind::Full && r.rel_error.unwrap() < 1e-8));

    // the optimal projector ranks first wherever it is present
    let report = compare_report(&out_a).unwrap();
    for g in &report.groups {
        if g.by_error.iter().any(|(k, _)| *k == ProjectorKind::LowrankOptGgn) {
            assert_eq!(g.by_error[0].0, ProjectorKind::LowrankOptGgn, "s = {}", g.s);
        }
    }
}

#[test]
fn report_skips_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    assert!(evaluate(&config, &out, &["--set", "seeds=[0]"]).status.success());
    let mut text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    text.push_str("sincos,not-a-method,3,0,0.1,1.0,0.0,1.0,\n");
    text.push_str("garbage\n");
    fs::write(out.join("metrics.csv"), text).unwrap();
    let report = bin().arg("report").arg(&out).output().unwrap();
    assert!(report.status.success());
    let stdout = String::from_utf8_lossy(&report.stdout);
    assert!(stdout.contains("skipped malformed: 2"), "{stdout}");
    assert!(stdout.contains("ordering agreement"));
}

#[test]
fn failed_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // one SWAG epoch cannot produce the two snapshots SWAG needs
    let out = evaluate(
        &config,
        &dir.path().join("run"),
        &["--set", "seeds=[0]", "--set", "methods=[\"subset-swag\", \"subset-magnitude\"]", "--set", "swag.epochs=1"],
    );
    assert_eq!(out.status.code(), Some(1));
    let (rows, _) = read_reports(&dir.path().join("run/metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.method == ProjectorKind::SubsetMagnitude));
    assert_eq!(rows.len(), 3);
}

#[test]
fn stage_subcommands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("stages");
    for cmd in ["train", "curvature", "project"] {
        let status = bin()
            .arg(cmd)
            .arg("--config")
            .arg(&config)
            .arg("--output-dir")
            .arg(&out)
            .args(["--set", "seeds=[3]"])
            .status()
            .unwrap();
        assert!(status.success(), "{cmd}");
    }
    let seed = out.join("seed-3");
    for file in ["model.json", "loss.csv", "curvature.bin", "projectors/lowrankopt-ggn-s2.bin"] {
        assert!(seed.join(file).is_file(), "{file}");
    }
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let bad = evaluate(&config, &dir.path().join("x"), &["--set", "s_grid=[4, 2]"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ascending"));
    let empty = bin().arg("report").arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(empty.status.code(), Some(2));
}
