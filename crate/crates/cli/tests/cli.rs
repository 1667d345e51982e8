use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const NORMAL: &str = r#"{"builtin": "normal"}"#;
const NORMAL_EXPR: &str = r#"{"expression": "-(x - th1)^2 / (2 * th2^2) - log(th2) - 0.5 * log(2 * pi)",
    "domain": [[null, null], [0, null]], "location": "th1", "scale": "th2"}"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, body: &str) -> PathBuf {
        let p = self.dir.path().join("config.json");
        fs::write(&p, body).unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_alpha-bundle"))
            .args(args)
            .arg("--out")
            .arg(self.out())
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn with_config(&self, cmd: &str, body: &str, extra: &[&str]) -> Output {
        let cfg = self.config(body);
        let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        self.exec(&args)
    }

    fn json(&self, name: &str) -> Value {
        read_json(&self.out().join(name))
    }

    fn csv(&self, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
        let text = fs::read_to_string(self.out().join(name)).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        (header, rows)
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn flat(v: &Value) -> Vec<f64> {
    match v {
        Value::Array(a) => a.iter().flat_map(flat).collect(),
        Value::Number(n) => vec![n.as_f64().unwrap()],
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn tensors_reports_golden_curvature() {
    let r = Run::new();
    let o = r.with_config("tensors", &format!(r#"{{"family": {NORMAL}, "theta": [0, 1], "alpha": 0}}"#), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = r.json("tensors.json");
    let p = &v["points"][0];
    assert_eq!(p["R_1212"].as_f64(), Some(1.0));
    assert_eq!(p["sectional_curvature"].as_f64(), Some(-0.5));
    assert_eq!(flat(&p["g"]), vec![1.0, 0.0, 0.0, 2.0]);
}

#[test]
fn missing_family_is_a_config_error() {
    let r = Run::new();
    let o = r.exec(&["tensors", "--theta", "0,1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing family"));
    let o = r.with_config("tensors", "{not json", &[]);
    assert_eq!(code(&o), 2);
    let o = r.with_config("tensors", &format!(r#"{{"family": {NORMAL}, "theta": [0, -1]}}"#), &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn expression_family_matches_builtin() {
    let grid = r#"[[0, 1], [1, 0.5], [-1, 2]]"#;
    let a = Run::new();
    let b = Run::new();
    let body = |fam: &str| format!(r#"{{"family": {fam}, "grid": {grid}, "alpha": 0.5}}"#);
    assert_eq!(code(&a.with_config("tensors", &body(NORMAL), &[])), 0);
    assert_eq!(code(&b.with_config("tensors", &body(NORMAL_EXPR), &["--strategy", "quad:64"])), 0);
    let (va, vb) = (a.json("tensors.json"), b.json("tensors.json"));
    for k in 0..3 {
        for key in ["g", "T", "gamma_lower", "gamma_mixed"] {
            let (x, y) = (flat(&va["points"][k][key]), flat(&vb["points"][k][key]));
            let d = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(d <= 1e-6, "{key} at point {k}: {d}");
        }
    }
}

#[test]
fn flags_override_config_and_csv_is_full_precision() {
    let r = Run::new();
    let o = r.with_config(
        "tensors",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1], "alpha": 0}}"#),
        &["--theta", "0,2", "--alpha", "-0.5", "--format", "csv"],
    );
    assert_eq!(code(&o), 0);
    let (header, rows) = r.csv("tensors.csv");
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(rows[0][col("theta_2")], 2.0);
    assert_eq!(rows[0][col("R_1212")], 0.75 / 16.0);
    let text = fs::read_to_string(r.out().join("tensors.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,2.0000000000000000e0,"));
}

#[test]
fn numeric_failure_reports_theta() {
    let r = Run::new();
    let o = r.with_config(
        "tensors",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1e-5]}}"#),
        &["--strategy", "quad:64"],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1e-5"));
}

#[test]
fn geodesic_outputs() {
    let r = Run::new();
    let o = r.with_config(
        "geodesic",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1], "geodesic": {{"v0": [1, 0], "t_end": 1, "dt": 1e-3}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 0);
    let (header, rows) = r.csv("geodesic.csv");
    assert_eq!(header, ["t", "theta_1", "theta_2", "thetadot_1", "thetadot_2", "residual"]);
    assert_eq!(rows.len(), 1001);
    // semicircle in (μ, √2σ) centred on μ = 0
    let inv = |row: &Vec<f64>| row[1] * row[1] + 2.0 * row[2] * row[2];
    assert!(rows.iter().all(|row| (inv(row) - 2.0).abs() / 2.0 <= 1e-5));
    let s = r.json("geodesic_summary.json");
    assert!(s["speed_drift"].as_f64().unwrap() <= 1e-5);
    assert_eq!(s["exited_domain"], Value::Bool(false));
}

#[test]
fn geodesic_edge_cases() {
    let r = Run::new();
    let o = r.with_config(
        "geodesic",
        &format!(r#"{{"family": {NORMAL}, "theta": [0.5, 1], "geodesic": {{"v0": [0, 0], "dt": 0.1}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 0);
    let (_, rows) = r.csv("geodesic.csv");
    assert!(rows.iter().all(|row| row[1] == 0.5 && row[2] == 1.0));

    let o = r.with_config(
        "geodesic",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 0.2], "alpha": -1, "geodesic": {{"v0": [0, -1], "t_end": 1, "dt": 0.01}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(r.json("geodesic_summary.json")["exited_domain"], Value::Bool(true));
}

fn transport(r: &Run, extra: &str) -> Output {
    r.with_config(
        "transport",
        &format!(
            r#"{{"family": {NORMAL}, "theta": [0, 1], "alpha": 0,
                "transport": {{"velocity": [1, 0], "v0": [1, 0], "t_end": 4.442882938158366, "dt": 1e-3{extra}}}}}"#
        ),
        &[],
    )
}

#[test]
fn transport_flips_vector_over_root_two_pi() {
    let r = Run::new();
    assert_eq!(code(&transport(&r, "")), 0);
    let v = floats(&r.json("transport_summary.json")["final_vector"]);
    assert!((v[0] + 1.0).abs() <= 1e-5 && v[1].abs() <= 1e-5, "{v:?}");
    let (header, rows) = r.csv("transport.csv");
    assert_eq!(header, ["t", "theta_1", "theta_2", "A_11", "A_12", "A_21", "A_22", "v_1", "v_2"]);
    assert_eq!(rows[0][3..], [1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn transport_does_not_depend_on_the_starting_frame() {
    let r = Run::new();
    assert_eq!(code(&transport(&r, r#", "frame": [[2, 1], [-0.5, 0.7]]"#)), 0);
    let v = floats(&r.json("transport_summary.json")["final_vector"]);
    assert!((v[0] + 1.0).abs() <= 1e-5 && v[1].abs() <= 1e-5, "{v:?}");
}

#[test]
fn transport_along_constant_curve_is_identity() {
    let r = Run::new();
    let o = r.with_config(
        "transport",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1], "alpha": 0.3,
            "transport": {{"velocity": [0, 0], "v0": [0.3, -0.7], "dt": 0.1}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(floats(&r.json("transport_summary.json")["final_vector"]), vec![0.3, -0.7]);
}

#[test]
fn transport_leaving_the_domain_is_numeric() {
    let r = Run::new();
    let o = r.with_config(
        "transport",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1],
            "transport": {{"velocity": [0, -2], "v0": [1, 0], "dt": 0.01}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 1);
    let o = r.with_config(
        "transport",
        &format!(r#"{{"family": {NORMAL}, "theta": [0, 1], "transport": {{"velocity": [1, 0], "v0": [1, 0], "frame": [[1, 1], [1, 1]]}}}}"#),
        &[],
    );
    assert_eq!(code(&o), 2);
}

const VERIFY: &str = r#"{"family": {"builtin": "normal"}, "theta": [0, 1], "seed": 11,
    "verify": {"samples": 2, "alphas": [-1, 0, 0.5]}}"#;

#[test]
fn verify_suite_passes_and_writes_reports() {
    let r = Run::new();
    let o = r.with_config("verify", VERIFY, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for name in [
        "bundle_chart_agreement",
        "structure_equations",
        "fundamental_fields",
        "lift_equivariance",
        "bianchi",
        "gauge_law",
        "geodesic_criterion",
    ] {
        let v = r.json(&format!("{name}.json"));
        assert_eq!(v["pass"], Value::Bool(true), "{name}");
        assert_eq!(v["seed"].as_u64().unwrap() == 11, name != "geodesic_criterion");
    }
    let b = r.json("bianchi.json");
    assert_eq!(b["samples"].as_array().unwrap().len(), 6);
    assert_eq!(b["samples"][0]["frame"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_passes_on_an_expression_family() {
    let r = Run::new();
    let body = format!(r#"{{"family": {NORMAL_EXPR}, "strategy": "quad:64", "verify": {{"samples": 1, "alphas": [0.5], "checks": ["bianchi", "gauge_law"]}}}}"#);
    let o = r.with_config("verify", &body, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(r.json("bianchi.json")["pass"], Value::Bool(true));
    assert_eq!(r.json("gauge_law.json")["pass"], Value::Bool(true));
}

#[test]
fn zero_tolerance_fails_verification() {
    let r = Run::new();
    let body = VERIFY.replace(r#""samples": 2"#, r#""samples": 1, "tolerance": 0, "checks": ["bianchi"]"#);
    let o = r.with_config("verify", &body, &[]);
    assert_eq!(code(&o), 3);
    assert_eq!(r.json("bianchi.json")["pass"], Value::Bool(false));
}

#[test]
fn infinite_tolerance_serializes_as_null() {
    let r = Run::new();
    let body = VERIFY.replace(r#""samples": 2"#, r#""samples": 1, "tolerance": "inf", "checks": ["bianchi"]"#);
    assert_eq!(code(&r.with_config("verify", &body, &[])), 0);
    assert_eq!(r.json("bianchi.json")["tolerance"], Value::Null);
}

#[test]
fn fixed_seed_gives_identical_report_bytes() {
    let (a, b, c) = (Run::new(), Run::new(), Run::new());
    let body = VERIFY.replace(r#""samples": 2"#, r#""samples": 1, "checks": ["bundle_chart_agreement", "structure_equations"]"#);
    for r in [&a, &b] {
        assert_eq!(code(&r.with_config("verify", &body, &[])), 0);
    }
    assert_eq!(code(&c.with_config("verify", &body, &["--seed", "12"])), 0);
    for name in ["bundle_chart_agreement.json", "structure_equations.json"] {
        let read = |r: &Run| fs::read(r.out().join(name)).unwrap();
        assert_eq!(read(&a), read(&b));
        assert_ne!(read(&a), read(&c));
    }
}

#[test]
fn unknown_check_is_a_config_error() {
    let r = Run::new();
    let body = VERIFY.replace(r#""samples": 2"#, r#""checks": ["nope"]"#);
    assert_eq!(code(&r.with_config("verify", &body, &[])), 2);
}
