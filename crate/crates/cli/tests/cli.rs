use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nsdreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsdreg"))
        .args(args)
        .env("NSDREG_THREADS", "2")
        .output()
        .expect("run nsdreg")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn fixed_design_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = nsdreg(&["simulate", "--time-model", "fixed", "--n", "10", "--a", "1", "--hurst", "0.5", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("sample.csv"));
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        let tau: f64 = row[1].parse().unwrap();
        assert_eq!(tau, (i + 1) as f64 / 10.0);
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn missing_hurst_is_a_usage_error() {
    let o = nsdreg(&["simulate", "--n", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--hurst"), "{}", stderr(&o));
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsdreg(&["simulate", "--n", "10", "--hurst", "1.5", "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurst"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nsdreg(&["simulate", "--n", "200", "--hurst", "0.3", "--seed", "42", "--out", path_str(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["sample.csv", "times.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn csv_and_json_summaries_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("json"), dir.path().join("csv"));
    for (out, format) in [(&a, "json"), (&b, "csv")] {
        let o = nsdreg(&[
            "montecarlo", "--n", "50", "--hurst", "0.3", "--replications", "30", "--seed", "5", "--format", format,
            "--out", path_str(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let json: Value = serde_json::from_str(&fs::read_to_string(a.join("N50_H0.3/summary.json")).unwrap()).unwrap();
    let rows = csv_rows(&b.join("N50_H0.3/summary.csv"));
    for row in rows {
        let value: f64 = row[1].parse().unwrap();
        let expected = match row[0].as_str() {
            "n" => json["config"]["time"]["n"].as_f64().unwrap(),
            "hurst" => json["config"]["hurst"].as_f64().unwrap(),
            "a" => json["config"]["a"].as_f64().unwrap(),
            "replications" => json["config"]["replications"].as_f64().unwrap(),
            name => json[name].as_f64().unwrap(),
        };
        assert_eq!(value, expected, "{}", row[0]);
    }
    assert_eq!(
        fs::read(a.join("N50_H0.3/replications.csv")).unwrap(),
        fs::read(b.join("N50_H0.3/replications.csv")).unwrap()
    );
}

#[test]
fn single_replication_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsdreg(&["montecarlo", "--n", "40", "--hurst", "0.5", "--replications", "1", "--out", path_str(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("N40_H0.5/summary.json")).unwrap()).unwrap();
    let rows = csv_rows(&dir.path().join("N40_H0.5/replications.csv"));
    let e: f64 = rows[0][3].parse().unwrap();
    assert_eq!(s["est_variance"].as_f64().unwrap(), e * e);
    assert!(s["ks_distance"].is_null());
}

#[test]
fn grid_writes_every_cell_and_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsdreg(&[
        "montecarlo", "--grid", "30,60:0.2,0.8", "--replications", "12", "--noise", "fbm-projected", "--out",
        path_str(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for cell in ["N30_H0.2", "N30_H0.8", "N60_H0.2", "N60_H0.8"] {
        for f in ["summary.json", "replications.csv", "hist_scaled_error.csv", "hist_ratio.csv"] {
            assert!(dir.path().join(cell).join(f).exists(), "{cell}/{f}");
        }
    }
    let tables = fs::read_to_string(dir.path().join("tables.txt")).unwrap();
    assert!(tables.contains("L1 risk") && tables.contains("H=0.8"));
    let hist = csv_rows(&dir.path().join("N30_H0.2/hist_scaled_error.csv"));
    assert_eq!(hist.len(), 30);
    assert_eq!(hist.iter().map(|r| r[2].parse::<u64>().unwrap()).sum::<u64>(), 12);
}

#[test]
fn verify_independent_durations_pass() {
    let o = nsdreg(&["verify", "--rho", "0", "--m", "3", "--draws", "20000", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let records = report.as_array().unwrap();
    assert!(records.len() >= 10);
    assert!(records.iter().all(|r| r["pass"].as_bool().unwrap()));
}

#[test]
fn verify_strict_six_is_not_psd() {
    let o = nsdreg(&["verify", "--m", "6", "--rho", "-0.25", "--strict", "--draws", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not positive semidefinite"), "{}", stderr(&o));
}

#[test]
fn convergence_with_quadratic_noise() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsdreg(&[
        "convergence", "--n-list", "50,200", "--deterministic-w", "t2", "--seeds", "4", "--time-model", "fixed",
        "--out", path_str(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("convergence.csv"));
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row[5].parse::<f64>().unwrap(), 2.0);
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0);
    }
    assert!(dir.path().join("hist_ratio_N200.csv").exists());
}

#[test]
fn convergence_needs_a_noise_choice() {
    let o = nsdreg(&["convergence", "--n-list", "50"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nsdreg(&["convergence", "--n-list", "50", "--deterministic-w", "interpolated"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = nsdreg(&[
        "convergence", "--n-list", "100,400", "--hurst", "0.4", "--resolution", "10", "--seeds", "3", "--out",
        path_str(&first),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("second");
    let o = nsdreg(&["replay", path_str(&first.join("manifest.json")), "--out", path_str(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "convergence");
    for f in ["convergence.csv", "hist_ratio_N100.csv", "hist_ratio_N400.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}
