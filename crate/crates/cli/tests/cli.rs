use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deadtime"))
        .args(args)
        .env_remove("DEADTIME_THREADS")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Header and rows of a CSV artifact, skipping `#` metadata lines.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn predict_background_only_is_uniform() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"params": {"S": 0, "B": 2}}"#);
    let out = run_ok(&["predict", "--config", s(&cfg)]);
    let (header, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["bin_center", "probability"]);
    assert_eq!(rows.len(), 256);
    for r in &rows {
        let v: f64 = r[1].parse().unwrap();
        assert!((v - 1.0 / 256.0).abs() < 1e-10);
    }
}

#[test]
fn predict_artifact_is_reproducible_and_self_describing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"params": {"n_b": 64}}"#);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&["predict", "--config", s(&cfg), "--out", s(&a)]);
    run_ok(&["predict", "--config", s(&cfg), "--out", s(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with(&format!("# tool: deadtime {}\n", env!("CARGO_PKG_VERSION"))));
    assert!(text.contains(
        "# params: {\"t_r\":100.0,\"t_d\":75.0,\"sigma_t\":1.0,\"tau\":50.0,\"S\":3.0,\"B\":3.0,\"n_b\":64}"
    ));
    assert!(text.contains("# residual: "));
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.timing.json")).unwrap()).unwrap();
    assert!(timing["wall_ms"].as_f64().unwrap() > 0.0);
    let total: f64 = table(&text).1.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn json_format_and_thread_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"params": {"n_b": 32}}"#);
    let out = dir.path().join("p.json");
    let status = Command::new(env!("CARGO_BIN_EXE_deadtime"))
        .args(["predict", "--config", s(&cfg), "--format", "json", "--out", s(&out)])
        .env("DEADTIME_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["columns"], serde_json::json!(["bin_center", "probability"]));
    assert_eq!(doc["rows"].as_array().unwrap().len(), 32);
    assert_eq!(doc["params"]["n_b"], 32);
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p.json.timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 2);
}

#[test]
fn simulate_with_fixed_seed_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"params": {"n_b": 32}, "mc": {"runs": 3, "cycles": 2000}}"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    run_ok(&["simulate", "--config", s(&cfg), "--seed", "5", "--out", s(&a)]);
    run_ok(&["simulate", "--config", s(&cfg), "--seed", "5", "--out", s(&b)]);
    run_ok(&["simulate", "--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    let ta = fs::read(&a).unwrap();
    assert_eq!(ta, fs::read(&b).unwrap());
    assert_ne!(ta, fs::read(&c).unwrap());
    let (header, rows) = table(&String::from_utf8(ta).unwrap());
    assert_eq!(header, ["bin_center", "probability", "count"]);
    assert_eq!(rows.len(), 32);
}

#[test]
fn simulate_nearly_empty_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"params": {"S": 0, "B": 1e-6, "n_b": 16}, "mc": {"runs": 1, "cycles": 1}}"#,
    );
    let out = run_ok(&["simulate", "--config", s(&cfg)]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("warning:"), "{stderr}");
    let (_, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert!(rows.iter().all(|r| r[2] == "0"));
}

#[test]
fn simulate_exports_timestamps() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"params": {"n_b": 16}, "mc": {"runs": 1, "cycles": 500}}"#,
    );
    let ts = dir.path().join("ts.csv");
    let hist = dir.path().join("h.csv");
    run_ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--timestamps",
        s(&ts),
        "--out",
        s(&hist),
    ]);
    let values: Vec<f64> = fs::read_to_string(&ts)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|x| (0.0..100.0).contains(x)));
    let (_, rows) = table(&fs::read_to_string(&hist).unwrap());
    let total: u64 = rows.iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
    assert_eq!(total as usize, values.len());
}

#[test]
fn simulate_grid_reports_every_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"params": {"n_b": 32}, "mc": {"runs": 4, "cycles": 2000},
            "sweep": {"S": {"min": 0, "max": 10, "count": 3}, "B": {"min": 0, "max": 10, "count": 3}}}"#,
    );
    let out = run_ok(&["simulate", "--config", s(&cfg)]);
    let (header, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["S", "B", "rmse", "noise_floor"]);
    assert_eq!(rows.len(), 9);
    // S = B = 0 has no photons at all
    assert_eq!(rows[0][2], "NaN");
    assert!(rows[1..].iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));
    assert!(String::from_utf8(out.stderr).unwrap().contains("S=0 B=0"));
}

#[test]
fn spectrum_gap_decreases_with_background() {
    let dir = TempDir::new().unwrap();
    for td in [75.0, 95.0] {
        let cfg = write_config(
            &dir,
            "c.json",
            &format!(
                r#"{{"params": {{"t_d": {td}, "n_b": 64}},
                    "sweep": {{"S": {{"min": 1, "max": 9, "count": 3}}, "B": {{"min": 0.1, "max": 9, "count": 4}}}}}}"#
            ),
        );
        let out = run_ok(&["spectrum", "--config", s(&cfg)]);
        let (header, rows) = table(&String::from_utf8(out.stdout).unwrap());
        assert_eq!(header, ["S", "B", "gap", "phase", "mixing_steps"]);
        assert_eq!(rows.len(), 12);
        for r in &rows {
            let phase: f64 = r[3].parse().unwrap();
            assert!((0.0..=PI).contains(&phase));
            assert!(r[4].parse::<u64>().is_ok() || r[4] == "not_reached");
        }
        for per_s in rows.chunks(4) {
            let gaps: Vec<f64> = per_s.iter().map(|r| r[2].parse().unwrap()).collect();
            assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "t_d={td}: {gaps:?}");
        }
    }
}

#[test]
fn spectrum_records_failed_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"params": {"n_b": 16}, "sweep": {"S": {"min": 0, "max": 1, "count": 2}, "B": {"min": 0, "max": 0, "count": 1}}}"#,
    );
    let out = run_ok(&["spectrum", "--config", s(&cfg)]);
    let (_, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0][2..], ["NaN", "NaN", "failed"]);
    assert!(rows[1][2].parse::<f64>().unwrap().is_finite());
}

#[test]
fn bench_small_sizes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"bench": {"sizes": [32, 64], "min_sample_ms": 2}}"#);
    let out = run_ok(&["bench", "--config", s(&cfg)]);
    let (header, rows) = table(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["n_b", "baseline_ms", "fast_ms", "speedup"]);
    assert_eq!(rows[0][0], "32");
    assert!(rows[0][3].parse::<f64>().unwrap() >= 1.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad_json = write_config(&dir, "bad.json", "{ not json");
    assert_eq!(run(&["predict", "--config", s(&bad_json)]).status.code(), Some(2));

    let bad_params = write_config(&dir, "bp.json", r#"{"params": {"sigma_t": -1}}"#);
    assert_eq!(run(&["predict", "--config", s(&bad_params)]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["predict", "--config", s(&missing)]).status.code(), Some(4));

    let ok = write_config(&dir, "ok.json", r#"{"params": {"n_b": 16}}"#);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(
        run(&["predict", "--config", s(&ok), "--out", s(&unwritable)])
            .status
            .code(),
        Some(4)
    );

    let stiff = write_config(
        &dir,
        "nc.json",
        r#"{"params": {"n_b": 64}, "spectral": {"max_iters": 2}}"#,
    );
    let out = run(&["predict", "--config", s(&stiff)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("converge"));

    assert_eq!(run(&["predict"]).status.code(), Some(2));
    assert_eq!(
        run(&["predict", "--config", s(&ok), "--format", "xml"]).status.code(),
        Some(2)
    );
}
