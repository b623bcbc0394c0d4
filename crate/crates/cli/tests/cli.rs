//! Runs the `rsm` binary end to end and reloads what it writes.

use std::path::Path;
use std::process::{Command, Output};

use rsm_cli::ingest::ingest_path;
use rsm_core::evaluation::{read_scatter_csv, ContourGrid, EvalReport};
use rsm_core::kernels::KernelCurve;
use rsm_core::{DoseGrid, FittedModel};

fn rsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsm")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rsm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const FAST: [&str; 6] = ["--models", "polynomial,hill", "--designs", "D047,RD27", "--replicates", "2"];

#[test]
fn gen_synthetic_files_ingest_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["gen-synthetic", "--out", out, "--seed", "4"]);
    let grid_file = std::fs::File::open(dir.path().join("grid.csv")).unwrap();
    let grid = DoseGrid::read_csv(grid_file).unwrap();
    assert_eq!(grid, DoseGrid::default_grid());
    let sets = ingest_path(&dir.path().join("data.csv"), &grid).unwrap();
    let names: Vec<&str> = sets.iter().map(|s| s.0.as_str()).collect();
    assert_eq!(names, ["normal", "cancer"]);
    assert!(sets.iter().all(|s| s.1.n_runs() == 512));
    assert!(dir.path().join("manifest.txt").exists());
}

#[test]
fn kernel_curve_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["kernel-curve", "--out", out, "--thetas", "0.5,1,2", "--points", "31"]);
    let text = std::fs::read(dir.path().join("kernel_curve.csv")).unwrap();
    let curve = KernelCurve::read_csv(&text[..]).unwrap();
    assert_eq!(curve.h.len(), 31);
    assert_eq!(curve.thetas, vec![0.5, 1.0, 2.0]);
    let mut again = Vec::new();
    curve.write_csv(&mut again).unwrap();
    assert_eq!(again, text);
}

#[test]
fn compare_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["compare", "--out", out, "--synthetic", "cancer"];
    args.extend(FAST);
    let stdout = String::from_utf8(ok(&args).stdout).unwrap();
    assert!(stdout.contains("cancer_table.txt"));
    let table = std::fs::read_to_string(dir.path().join("cancer_table.txt")).unwrap();
    assert!(table.contains("D047") && table.contains("RD27"));
    let report = EvalReport::read_csv(std::fs::File::open(dir.path().join("cancer_report.csv")).unwrap()).unwrap();
    assert_eq!(format!("cancer\n{}", report.comparison_table()), table);
}

#[test]
fn fit_scatter_and_contour_outputs_reload() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = ["--out", out, "--synthetic", "normal", "--models", "polynomial,mlp", "--designs", "D047", "--restarts", "5"];
    for cmd in ["fit", "scatter", "contour"] {
        let mut args = vec![cmd];
        args.extend(common);
        ok(&args);
    }
    let doc = std::fs::read_to_string(dir.path().join("normal_mlp_D047.model.txt")).unwrap();
    let model = FittedModel::from_document(&doc.parse().unwrap()).unwrap();
    assert_eq!(model.to_document().to_string(), doc);

    let pairs = read_scatter_csv(std::fs::File::open(dir.path().join("normal_polynomial_D047_scatter.csv")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 512);

    let text = std::fs::read(dir.path().join("normal_polynomial_D047_contour.csv")).unwrap();
    let grid = ContourGrid::read_csv(&text[..]).unwrap();
    assert_eq!(grid.axis.len(), 101);
    assert_eq!(grid.values.len(), 101);
    assert!(grid.values.iter().all(|row| row.len() == 101));
    let mut again = Vec::new();
    grid.write_csv(&mut again).unwrap();
    assert_eq!(again, text);
}

#[test]
fn measured_data_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic_cells.csv");
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["compare", "--out", out, "--data", fixture.to_str().unwrap()];
    args.extend(FAST);
    ok(&args);
    assert!(dir.path().join("normal_table.txt").exists());
    assert!(dir.path().join("cancer_table.txt").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let bad = rsm(&["fit", "--out", out, "--tau2=-1"]);
    assert_eq!(bad.status.code(), Some(3));

    let missing = rsm(&["fit", "--out", out, "--data", "/nonexistent/data.csv"]);
    assert_eq!(missing.status.code(), Some(5));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "codeA,codeB,codeC,y\n0,0,0,1\n1,0,0,0.9\n2,0,0,1.7\n").unwrap();
    let ingest = rsm(&["fit", "--out", out, "--data", csv.to_str().unwrap()]);
    assert_eq!(ingest.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&ingest.stderr).contains("row 3"));

    let small = rsm(&["compare", "--out", out, "--models", "polynomial", "--designs", "RD8"]);
    assert_eq!(small.status.code(), Some(3));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    std::fs::write(&cfg, format!("out = {}\nthetas = 1\npoints = 11\n", out.display())).unwrap();
    ok(&["kernel-curve", "--config", cfg.to_str().unwrap(), "--points", "21"]);
    let curve = KernelCurve::read_csv(std::fs::File::open(out.join("kernel_curve.csv")).unwrap()).unwrap();
    assert_eq!(curve.h.len(), 21);
    assert_eq!(curve.thetas, vec![1.0]);
}
