use std::path::Path;

use parisi_core::cli::main_with_args;
use serde_json::Value;

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> i32 {
    let cfg = dir.join(format!("{command}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec!["parisi".to_string(), command.into(), "--config".into(), cfg.display().to_string()];
    args.extend(["--out".into(), out.display().to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn report(dir: &Path, command: &str) -> (String, Value) {
    let text = std::fs::read_to_string(dir.join("out/reports").join(format!("{command}.json"))).unwrap();
    let v = serde_json::from_str(&text).unwrap();
    (text, v)
}

const ZERO: &str = r#"{"type": "step", "values": [[[0.0]]]}"#;
const SMALL: &str = r#""variational": {"k": 2, "refine": 2, "n_starts": 20}"#;

#[test]
fn eval_psi_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "eval-psi", &format!(r#"{{"q": {ZERO}}}"#), &[]), 0);
    let (_, v) = report(dir.path(), "eval-psi");
    assert_eq!(v["result"]["psi"], serde_json::json!(0.0));
    assert_eq!(v["status"], "ok");
    assert_eq!(v["config"]["q"]["type"], "step");
    assert!(v["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn uniqueness_at_zero_is_reported_without_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"model": {{"kind": "scalar_mixed_pspin", "dim": 1, "coefficients": [0.0, 0.25]}}, "q": {ZERO}, "t": 1.0, {SMALL}}}"#);
    assert_eq!(run(dir.path(), "uniqueness", &cfg, &["--seed", "3"]), 0);
    let (text, v) = report(dir.path(), "uniqueness");
    assert!(text.contains(r#""assertion": "skipped (q not in Q_uparrow)""#), "{text}");
    assert_eq!(v["seed"], 3);
}

#[test]
fn schema_violations_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "eval-psi", &format!(r#"{{"q": {ZERO}, "qq": 1}}"#), &[]), 1);
    // stochastic command without a seed
    let cfg = format!(r#"{{"model": {{"kind": "scalar_mixed_pspin", "dim": 1, "coefficients": [0.0, 1.0]}}, "q": {ZERO}, "t": 1.0}}"#);
    assert_eq!(run(dir.path(), "parisi", &cfg, &[]), 1);
    assert_eq!(run(dir.path(), "parisi", "{", &["--seed", "1"]), 1);
    assert!(!dir.path().join("out/reports/parisi.json").exists());
}

#[test]
fn certify_path_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "certify-path", &format!(r#"{{"q": {ZERO}}}"#), &[]), 2);
    let (_, v) = report(dir.path(), "certify-path");
    assert_eq!(v["status"], "assertion_failed");
    let ramp = r#"{"q": {"type": "ramp_step", "values": [[[0.0]]], "ramp_c": 0.2}}"#;
    assert_eq!(run(dir.path(), "certify-path", ramp, &[]), 0);
}

#[test]
fn parisi_and_hopf_lax_reports_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"model": {{"kind": "scalar_mixed_pspin", "dim": 1, "coefficients": [0.0, 0.5]}},
            "q": {{"type": "ramp_step", "values": [[[0.0]]], "ramp_c": 0.2}}, "t": 0.5,
            "variational": {{"k": 2, "refine": 2, "n_starts": 4}}}}"#
    );
    assert_eq!(run(dir.path(), "parisi", &cfg, &["--seed", "5"]), 0);
    assert_eq!(run(dir.path(), "hopf-lax", &cfg, &["--seed", "5"]), 0);
    let p = report(dir.path(), "parisi").1["result"]["runs"][0]["report"]["value"].as_f64().unwrap();
    let h = report(dir.path(), "hopf-lax").1["result"]["runs"][0]["report"]["value"].as_f64().unwrap();
    assert!((p - h).abs() <= 5e-3 * (1.0 + p.abs()), "{p} vs {h}");
    assert!(dir.path().join("out/tables/parisi_starts.csv").exists());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cfg = format!(r#"{{"q": {{"type": "step", "breakpoints": [0.3], "values": [[[0.2]], [[0.6]]]}}, "mc": {{"m": 50, "n_samples": 500}}}}"#);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path(), "eval-psi", &cfg, &["--seed", "9"]), 0);
    assert_eq!(run(b.path(), "eval-psi", &cfg, &["--seed", "9", "--threads", "1"]), 0);
    let (ta, va) = report(a.path(), "eval-psi");
    assert_eq!(ta, report(b.path(), "eval-psi").0);
    assert!(va["result"]["mc"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn transport_writes_coupling_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "model": {"kind": "scalar_mixed_pspin", "dim": 1, "coefficients": [0.0, 1.0]},
        "t": 1.0,
        "transport": {
            "mu": {"atoms": [0.1, 0.5], "weights": [0.5, 0.5]},
            "nu": {"atoms": [0.2, 0.4, 0.9], "weights": [0.2, 0.3, 0.5]},
            "support": {"atoms": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]], "weights": [0.5, 0.5]}
        }
    }"#;
    assert_eq!(run(dir.path(), "transport", cfg, &[]), 0);
    let (_, v) = report(dir.path(), "transport");
    assert_eq!(v["result"]["support_order"]["ordered"], false);
    let csv = std::fs::read_to_string(dir.path().join("out/tables/coupling_t1.csv")).unwrap();
    assert!(csv.starts_with("row,column,mass"));
}

#[test]
fn suite_filter_runs_only_the_duality_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = main_with_args(["parisi", "suite", "--filter", "duality", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut names: Vec<String> = std::fs::read_dir(out.join("reports/suite"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "criterion_01_duality_identity.json",
            "criterion_02_conjugate_inversion.json",
            "criterion_03_closed_form_conjugates.json",
            "summary.json"
        ]
    );
}

#[test]
fn help_and_usage() {
    assert_eq!(main_with_args(["parisi", "--version"]), 0);
    assert_eq!(main_with_args(["parisi"]), 1);
    assert_eq!(main_with_args(["parisi", "eval-psi"]), 1);
}
