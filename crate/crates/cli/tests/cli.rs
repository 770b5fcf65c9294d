use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array1;
use serde_json::Value;

use robust_sparse::io::{load_csv, ResponseColumn};
use robust_sparse::selection::bic_components;
use robust_sparse::simulation::{generate, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-sparse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a simulated dataset as `y,x0,..` with a few deliberately unscaled columns.
fn write_dataset(path: &Path, outlier: Option<(usize, f64)>) {
    let (ds, _) = generate(&Scenario::new(60, 8, 3, 0, 5)).unwrap();
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["y".to_string()];
    header.extend((0..ds.p()).map(|j| format!("x{j}")));
    w.write_record(&header).unwrap();
    for i in 0..ds.n() {
        let mut y = ds.y()[i];
        if let Some((row, shift)) = outlier {
            if row == i {
                y += shift;
            }
        }
        let mut rec = vec![y.to_string()];
        rec.extend((0..ds.p()).map(|j| (ds.x()[[i, j]] * (j + 1) as f64).to_string()));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

fn fit_report(dir: &Path, data: &Path, rule: &str) -> Value {
    let out = dir.join(format!("{rule}.json"));
    let o = run(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--rule",
        rule,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "fit failed: {}", stderr(&o));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn fit_report_is_complete_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_dataset(&data, None);
    let report = fit_report(dir.path(), &data, "scad:a=3.7");
    for key in [
        "beta",
        "beta_normalized",
        "gamma",
        "support_beta",
        "support_gamma",
        "tuning",
        "bic",
        "iterations",
        "objective_trace",
        "estimating_equation_residual",
        "grid",
        "preliminary",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["rule"], "scad:a=3.7");

    let ds = load_csv::<f64>(&data, &ResponseColumn::Name("y".into()), true).unwrap();
    let beta = Array1::from(floats(&report["beta_normalized"]));
    let gamma = Array1::from(floats(&report["gamma"]));
    let (fit, pen) = bic_components(&ds, beta.view(), gamma.view());
    let stored_fit = report["bic"]["residual_term"].as_f64().unwrap();
    let stored_pen = report["bic"]["complexity_term"].as_f64().unwrap();
    assert!((fit - stored_fit).abs() <= 1e-9);
    assert!((pen - stored_pen).abs() <= 1e-9);
    assert!((fit + pen - report["bic"]["total"].as_f64().unwrap()).abs() <= 1e-9);

    // Original-unit coefficients undo the column scaling.
    let orig = floats(&report["beta"]);
    let scales = floats(&report["column_scales"]);
    for j in 0..beta.len() {
        assert!((orig[j] - beta[j] * scales[j]).abs() <= 1e-12 * orig[j].abs().max(1.0));
    }
}

#[test]
fn fit_flags_injected_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_dataset(&data, Some((17, 25.0)));
    let report = fit_report(dir.path(), &data, "hard");
    let g: Vec<u64> = report["support_gamma"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(g.contains(&17), "support_gamma = {g:?}");
}

#[test]
fn fit_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_dataset(&data, Some((3, 10.0)));
    assert_eq!(fit_report(dir.path(), &data, "soft"), fit_report(dir.path(), &data, "soft"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_dataset(&data, None);
    let p = data.to_str().unwrap();

    let o = run(&["fit", "--input", p, "--response", "y", "--rule", "lasso"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("soft, hard, scad, garrote, mcp"), "{}", stderr(&o));

    let o = run(&["fit", "--input", p, "--response", "nope", "--rule", "soft"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("x0"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x\n1,2\n3,oops\n").unwrap();
    let o = run(&["fit", "--input", bad.to_str().unwrap(), "--response", "y", "--rule", "soft"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn degenerate_fit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("zero.csv");
    let mut text = String::from("y,a,b\n");
    for i in 0..10 {
        text.push_str(&format!("0,{},{}\n", i + 1, (i * i) % 7 + 1));
    }
    std::fs::write(&data, text).unwrap();
    let o = run(&["fit", "--input", data.to_str().unwrap(), "--response", "0", "--rule", "soft"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("weights stage"), "{}", stderr(&o));
}

#[test]
fn help_documents_exit_codes() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Exit codes"));
    assert!(text.contains("computational"));
}

fn curves(args: &[&str]) -> (Option<i32>, Vec<Vec<f64>>) {
    let o = run(&[&["curves"], args].concat());
    let rows = csv::Reader::from_reader(o.stdout.as_slice())
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    (o.status.code(), rows)
}

#[test]
fn curves_tabulate_rules() {
    let (code, rows) = curves(&["--rule", "soft", "--lambda", "1", "--range", "-3:3:0.5"]);
    assert_eq!(code, Some(0));
    assert_eq!(rows.len(), 13);
    let two = rows.iter().find(|r| r[0] == 2.0).unwrap();
    assert_eq!(&two[1..], &[1.0, 1.0, 1.5]);

    let (_, rows) = curves(&["--rule", "hard", "--lambda", "1", "--range", "-4:4:0.25"]);
    for r in rows.iter().filter(|r| r[0].abs() > 1.0) {
        assert_eq!(r[2], 0.0, "z = {}", r[0]);
    }

    let (code, rows) = curves(&["--rule", "garrote", "--lambda", "1", "--range", "0:1:5"]);
    assert_eq!(code, Some(0));
    assert_eq!(rows.len(), 1);

    assert_eq!(curves(&["--rule", "soft", "--lambda", "1", "--range", "0:1:0"]).0, Some(1));
    assert_eq!(curves(&["--rule", "soft", "--lambda", "1", "--range", "0:1:-1"]).0, Some(1));
}

#[test]
fn curves_write_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub/curve.csv");
    let o = run(&["curves", "--rule", "mcp:a=3", "--lambda", "0.5", "--range", "0:2:1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("z,theta,psi,Psi\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn diagnostics_reports_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let eye = dir.path().join("eye.csv");
    std::fs::write(&eye, "2,0,0\n0,2,0\n0,0,2\n0,0,0\n").unwrap();
    let o = run(&["diagnostics", "--input", eye.to_str().unwrap(), "--no-header", "--u", "2", "--uprime", "4", "--kappa", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["delta_min"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    assert!((v["delta_max"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    assert!(v["bound_35"].as_f64().unwrap() >= v["delta_max"].as_f64().unwrap());
    assert!((v["rho"].as_f64().unwrap() - 4.0).abs() <= 1e-12);
    assert_eq!(v["rho_at_least_one"], true);

    let wide = dir.path().join("wide.csv");
    let row: Vec<String> = (0..20).map(|j| ((j * 7) % 5 + 1).to_string()).collect();
    std::fs::write(&wide, format!("{}\n{}\n", row.join(","), row.iter().rev().cloned().collect::<Vec<_>>().join(","))).unwrap();
    let o = run(&["diagnostics", "--input", wide.to_str().unwrap(), "--no-header", "--u", "2", "--uprime", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("12"), "{}", stderr(&o));
}

#[test]
fn reproduce_uses_output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["reproduce", "figure1", "--reps", "1", "--seed", "3"])
        .env("ROBUST_SPARSE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("figure1.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // 8 outlier levels x 2 preliminary variants.
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| &r[2] == "prelim"));
}

#[test]
fn simulate_writes_summary() {
    let o = run(&["simulate", "--n", "40", "--p", "10", "--s", "2", "--outlier-pct", "10", "--reps", "2", "--rules", "soft,hard", "--baselines"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 + 2);
    assert!(text.contains(",lasso,") && text.contains(",oracle,"));
}
