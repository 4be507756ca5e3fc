use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrgap_core::evaluate::EvaluationReport;
use hrgap_core::features::FEATURE_CSV_HEADER;
use tempfile::TempDir;

const FAST_CONFIG: &str = r#"
[cv]
max_rows_per_participant = 400
importance = false

[train]
max_rows = 3000

[[models]]
kind = "baseline"

[[models]]
kind = "ridge"

[[models]]
kind = "svr"

[[models]]
kind = "forest"
n_trees = 20
"#;

fn hrgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrgap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hrgap(args);
    assert!(
        out.status.success(),
        "hrgap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("fast.toml"), FAST_CONFIG).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> PathBuf {
        self.path("fast.toml")
    }

    /// Simulates `n` participants for `days` into `name`.
    fn simulate(&self, name: &str, n: u32, days: f64, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let (n, days) = (n.to_string(), days.to_string());
        let mut args = vec!["simulate", "--participants", &n, "--days", &days, "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn csv_column(path: &Path, col: usize) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap_or("").to_string())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let fx = Fixture::new();
    let a = fx.simulate("a", 2, 0.25, &["--seed", "7", "--gap", "dropout:0.1"]);
    let b = fx.simulate("b", 2, 0.25, &["--seed", "7", "--gap", "dropout:0.1"]);
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, fb);
    let c = fx.simulate("c", 2, 0.25, &["--seed", "8", "--gap", "dropout:0.1"]);
    assert_ne!(fa, files_under(&c));
}

#[test]
fn default_duration_is_one_week() {
    let fx = Fixture::new();
    let out = fx.path("week");
    ok(&["simulate", "--participants", "1", "--out", s(&out)]);
    let hr = fs::read_to_string(out.join("P01/hr.csv")).unwrap();
    assert_eq!(hr.lines().count(), 1 + 7 * 86_400);
}

#[test]
fn usage_errors_exit_one() {
    let fx = Fixture::new();
    assert_eq!(code(&hrgap(&["simulate", "--participants", "0"])), 1);
    assert_eq!(code(&hrgap(&["frobnicate"])), 1);
    assert_eq!(code(&hrgap(&["--threads", "0", "config", "print-defaults"])), 1);
    let out = fx.path("x");
    assert_eq!(code(&hrgap(&["simulate", "--gap", "dropout:2", "--out", s(&out)])), 1);

    let bad = fx.path("bad.toml");
    fs::write(&bad, "[cv]\nfoldz = 3\n").unwrap();
    let r = hrgap(&["--config", s(&bad), "config", "print-defaults"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("foldz"));
    assert_eq!(code(&hrgap(&["--help"])), 0);
}

#[test]
fn printed_defaults_are_a_valid_config() {
    let fx = Fixture::new();
    let text = ok(&["config", "print-defaults"]);
    for section in ["[paths]", "[features]", "[cv]", "[train]", "[simulate]", "[gaps]", "[[models]]"] {
        assert!(text.contains(section), "missing {section}");
    }
    let path = fx.path("defaults.toml");
    fs::write(&path, &text).unwrap();
    assert_eq!(ok(&["--config", s(&path), "config", "print-defaults"]), text);
}

#[test]
fn missing_data_exits_two() {
    let fx = Fixture::new();
    let r = hrgap(&["align", "--data", s(&fx.path("nope")), "--out", s(&fx.path("o"))]);
    assert_eq!(code(&r), 2);
}

#[test]
fn evaluate_prints_four_model_rows() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 2, 1.0, &[]);
    let out = fx.path("eval");
    let stdout = ok(&["--config", s(&fx.config()), "evaluate", "--data", s(&data), "--out", s(&out)]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 6, "{stdout}");
    let rows = &lines[2..];
    let names: Vec<&str> = rows.iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["baseline", "ridge", "svr", "forest"]);
    for row in rows {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[1].parse::<f64>().is_ok() && cols[2].parse::<f64>().unwrap() >= 0.0);
    }
    let report = EvaluationReport::load(out.join("report.json")).unwrap();
    assert_eq!(report.participant_ids(), ["P01", "P02"]);
    assert!(out.join("metrics.csv").is_file() && out.join("summary.txt").is_file());
    assert!(out.join("traces/P01_forest.csv").is_file());

    // reruns write identical files
    let again = fx.path("eval2");
    ok(&["--config", s(&fx.config()), "evaluate", "--data", s(&data), "--out", s(&again)]);
    assert_eq!(files_under(&out), files_under(&again));
}

#[test]
fn single_participant_modes() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 1, 0.5, &[]);
    let out = fx.path("eval");
    ok(&["--config", s(&fx.config()), "evaluate", "--data", s(&data.join("P01")), "--out", s(&out)]);
    let report = EvaluationReport::load(out.join("report.json")).unwrap();
    assert_eq!(report.participant_ids(), ["P01"]);

    let r = hrgap(&["--config", s(&fx.config()), "evaluate", "--mode", "generalized", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("at least 2"));
}

#[test]
fn align_featurize_and_importance_write_artifacts() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 2, 0.25, &["--gap", "nightly:2:1"]);
    let out = fx.path("out");
    let stdout = ok(&["align", "--data", s(&data), "--out", s(&out)]);
    assert!(stdout.contains("P01: 21600 s"), "{stdout}");
    let aligned = out.join("aligned.csv");
    assert_eq!(fs::read_to_string(&aligned).unwrap().lines().count(), 1 + 2 * 21_600);

    // the aligned file is accepted wherever raw directories are
    ok(&["featurize", "--data", s(&aligned), "--out", s(&out)]);
    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(features.lines().next().unwrap(), FEATURE_CSV_HEADER);

    let stdout = ok(&["--config", s(&fx.config()), "importance", "--data", s(&aligned), "--out", s(&out)]);
    assert_eq!(stdout.lines().count(), 15);
    assert!(out.join("importance_pooled.csv").is_file());
    ok(&["--config", s(&fx.config()), "importance", "--participant", "P02", "--data", s(&aligned), "--out", s(&out)]);
    assert!(out.join("importance_P02.csv").is_file());
}

#[test]
fn fill_without_gaps_reproduces_input() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 1, 0.25, &[]);
    let out = fx.path("out");
    ok(&["--config", s(&fx.config()), "train", "--data", s(&data), "--out", s(&out)]);
    let filled = out.join("filled.csv");
    let stdout = ok(&["fill", "--data", s(&data), "--model", s(&out.join("model.json")), "--out", s(&out)]);
    assert!(stdout.contains("21600 observed, 0 estimated, 0 missing"), "{stdout}");
    assert!(csv_column(&filled, 3).iter().all(|p| p == "observed"));
    assert_eq!(csv_column(&filled, 2), csv_column(&data.join("P01/hr.csv"), 1));
}

#[test]
fn fill_labels_every_row_and_counts_missing_features() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 1, 0.5, &[]);
    let out = fx.path("out");
    ok(&["--config", s(&fx.config()), "train", "--data", s(&data), "--out", s(&out)]);

    // 200 s with GPS and no heart rate, then 100 s with neither
    let mut text = String::from("timestamp_s,participant_id,x,y,z,lat,lon,bpm\n");
    for t in 0..600i64 {
        let ts = 1_551_700_000 + t;
        let gps = if (300..400).contains(&t) { ",".to_string() } else { "38.0336,-78.508".to_string() };
        let bpm = if (200..400).contains(&t) { String::new() } else { "70".to_string() };
        text.push_str(&format!("{ts},Q,0,0,1,{gps},{bpm}\n"));
    }
    let aligned = fx.path("hand.csv");
    fs::write(&aligned, text).unwrap();
    let filled = fx.path("filled.csv");
    let stdout = ok(&["fill", "--data", s(&aligned), "--model", s(&out.join("model.json")), "--output", s(&filled)]);
    assert!(stdout.contains("Q: 400 observed, 100 estimated, 100 missing"), "{stdout}");

    let rows = fs::read_to_string(&filled).unwrap();
    for line in rows.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        match cols[3] {
            "observed" | "estimated" => assert!(cols[2].parse::<f64>().is_ok()),
            "missing" => assert!(cols[2].is_empty()),
            other => panic!("unexpected label {other}"),
        }
    }
}

#[test]
fn schema_mismatch_exits_two() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 1, 0.25, &[]);
    let out = fx.path("out");
    ok(&["--config", s(&fx.config()), "train", "--model", "ridge", "--data", s(&data), "--out", s(&out)]);
    let model = out.join("model.json");
    let text = fs::read_to_string(&model).unwrap().replacen("\"second\"", "\"seconds\"", 1);
    fs::write(&model, text).unwrap();
    let r = hrgap(&["fill", "--data", s(&data), "--model", s(&model), "--out", s(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn svr_that_cannot_converge_exits_three() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 1, 0.25, &[]);
    let cfg = fx.path("tight.toml");
    fs::write(&cfg, "[train]\nmax_rows = 500\n\n[[models]]\nkind = \"svr\"\nsvr_max_iter = 1\n").unwrap();
    let r = hrgap(&["--config", s(&cfg), "train", "--model", "svr", "--data", s(&data), "--out", s(&fx.path("o"))]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn zscore_model_fills_in_bpm() {
    let fx = Fixture::new();
    let data = fx.simulate("data", 2, 0.5, &["--gap", "nightly:3:1"]);
    let out = fx.path("out");
    ok(&["--config", s(&fx.config()), "train", "--target", "zscore", "--data", s(&data), "--out", s(&out)]);
    ok(&["fill", "--data", s(&data), "--model", s(&out.join("model.json")), "--out", s(&out)]);
    let filled = out.join("filled.csv");
    let labels = csv_column(&filled, 3);
    let bpm = csv_column(&filled, 2);
    let estimated: Vec<f64> = labels
        .iter()
        .zip(&bpm)
        .filter(|(l, _)| *l == "estimated")
        .map(|(_, b)| b.parse().unwrap())
        .collect();
    assert_eq!(estimated.len(), 2 * 3600);
    assert!(estimated.iter().all(|&b| (30.0..=220.0).contains(&b)));
}
