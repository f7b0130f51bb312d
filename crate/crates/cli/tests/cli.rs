use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feller-ldp"))
}

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    bin().args(args).arg("--config").arg(&cfg).arg("--out").arg(&out).arg("--quiet").output().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const EXAMPLE: &str = r#"{"scale": {"kind": "delay_corner", "a": 1, "b": 3, "kappa": 0.5, "x1": 1, "x2": 2}"#;

#[test]
fn action_on_wiener_is_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["action"], r#"{"paths": [{"kind": "linear", "from": 0, "to": 1, "horizon": 1}]}"#, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("out/action.json"));
    assert_eq!(v["paths"][0]["action"]["value"].as_f64().unwrap(), 0.5);
    let csv = fs::read_to_string(dir.path().join("out/action.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "path,action,reduced,natural_scale");
}

#[test]
fn front_example_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{EXAMPLE}, "front": {{"xs": {{"lo": 1.5, "hi": 3, "n": 2}}}}}}"#);
    let o = run(&["front"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/front.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert!((rows[0][1] - 0.75).abs() < 1e-9);
    assert!((rows[1][1] - 2.0).abs() < 1e-9);
    assert!(!dir.path().join("out/w_grid.csv").exists());
}

#[test]
fn front_w_grid_needs_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{EXAMPLE}, "front": {{"xs": {{"lo": 1, "hi": 2, "n": 2}}}}}}"#);
    let o = run(&["front", "--w-grid"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let cfg = format!(
        r#"{EXAMPLE}, "front": {{"xs": {{"lo": 1, "hi": 2, "n": 2}}, "w_ts": {{"lo": 1, "hi": 2, "n": 2}}, "w_xs": {{"lo": 0, "hi": 3, "n": 4}}}}}}"#
    );
    let o = run(&["front", "--w-grid"], &cfg, dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("out/w_grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn exit_reports_estimate_and_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"numerics": {"eps": 1, "dt": 0.001}, "exit": {"x": 0, "a": -1, "b": 2}}"#;
    let o = run(&["exit", "--paths", "100000"], cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("out/exit.json"));
    let exact = v["exact"].as_f64().unwrap();
    let est = v["mc"]["estimate"].as_f64().unwrap();
    let se = v["mc"]["std_error"].as_f64().unwrap();
    assert!((exact - 1.0 / 3.0).abs() < 1e-15);
    assert!((est - exact).abs() <= 3.0 * se);
    assert_eq!(v["mc"]["n_total"].as_u64(), Some(100_000));
}

#[test]
fn outputs_are_deterministic() {
    let cfg = format!(
        r#"{EXAMPLE}, "numerics": {{"eps": 0.5, "n_paths": 500}}, "simulate": {{"x0": 1.2, "out_step": 0.05, "records": 3}}}}"#
    );
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["simulate"], &cfg, d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["paths.csv", "simulate.json"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    run(&["simulate", "--seed", "7"], &cfg, c.path());
    assert_ne!(fs::read(a.path().join("out/paths.csv")).unwrap(), fs::read(c.path().join("out/paths.csv")).unwrap());
}

#[test]
fn manifest_records_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"exit": {"x": 0, "a": -1, "b": 1}}"#;
    let o = run(&["exit", "--paths", "321", "--eps", "0.7", "--dt", "0.002", "--mollify-n", "50", "--seed", "9"], cfg, dir.path());
    assert!(o.status.success());
    let m = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["command"], "exit");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["numerics"]["n_paths"], 321);
    assert_eq!(m["config"]["numerics"]["eps"], 0.7);
    assert_eq!(m["config"]["numerics"]["dt"], 0.002);
    assert_eq!(m["config"]["numerics"]["n_mollify"], 50);
    assert_eq!(m["outputs"], serde_json::json!(["exit.json"]));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    // the manifest config alone reproduces the run
    let again = tempfile::tempdir().unwrap();
    let o = run(&["exit"], &serde_json::to_string(&m["config"]).unwrap(), again.path());
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("out/exit.json")).unwrap(), fs::read(again.path().join("out/exit.json")).unwrap());
    let leftovers: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.')).collect();
    assert!(leftovers.is_empty());
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["classify"], "{\n  \"seed\": 1,\n  \"scale\": {\"kind\": \"nope\"}\n}", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    let o = run(&["exit", "--eps", "-1"], r#"{"exit": {"x": 0, "a": -1, "b": 1}}"#, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["exit"], "{}", dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["exit"], r#"{"exit": {"x": 5, "a": -1, "b": 1}}"#, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("precondition"));
}

#[test]
fn classify_example_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["classify"], &format!(r#"{EXAMPLE}, "classify": {{"points": [0.5]}}}}"#), dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("out/classify.csv")).unwrap();
    let classes: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(classes, ["smooth", "jump_v", "corner_v"]);
}

#[test]
fn time_change_reports_flat_interval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{EXAMPLE}, "paths": [{{"kind": "nodes", "nodes": [[0, 2], [0.4, 1], [0.9, 1], [1.4, 0]]}}]}}"#);
    let o = run(&["time-change"], &cfg, dir.path());
    assert!(o.status.success());
    let v = read_json(&dir.path().join("out/time_change.json"));
    let flats = v["paths"][0]["flat_intervals"].as_array().unwrap();
    assert_eq!(flats.len(), 1);
    assert_eq!(flats[0][0], 0.4);
    assert_eq!(flats[0][1], 0.9);
    assert!(dir.path().join("out/sigma_0.csv").exists());
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], r#"{"verify": {"criteria": [1, 2, 4]}}"#, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v = read_json(&dir.path().join("out/verify.json"));
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 3);
    let o = run(&["verify"], r#"{"verify": {"criteria": [12]}}"#, dir.path());
    assert_eq!(o.status.code(), Some(2));
}
