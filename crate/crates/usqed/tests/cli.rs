//! End-to-end checks of the installed binary: exit-code protocol,
//! byte stability, diagnostic JSON on stderr.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_usqed"))
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("usqed-cli-test-{}-{name}", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path
}

fn run_cmd(sub: &str, cfg: &PathBuf, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(cfg)
        .args(extra)
        .output()
        .unwrap()
}

const GAUGE_CFG: &str = r#"{
    "omega": 1.0, "splitting": 1.0,
    "g_grid": [0.0, 0.2],
    "orders": [2, 4],
    "n_levels": 3, "cutoff": 40, "tol": 1e-6
}"#;

#[test]
fn spectrum_csv_to_stdout() {
    let cfg = write_config(
        "spectrum.json",
        r#"{
            "model": {"omega": 1.0, "splitting": 0.6, "g": 0.0},
            "methods": ["exact", "jc"],
            "n_levels": 4
        }"#,
    );
    let out = run_cmd("spectrum", &cfg, &["--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# usqed "), "header: {text:.60}");
    assert!(text.lines().count() > 8);
    assert!(!text.contains('\r'));
}

#[test]
fn unknown_config_key_exits_2_with_diagnostic() {
    let cfg = write_config(
        "badkey.json",
        r#"{"omega": 1.0, "splitting": 1.0, "g_grid": [0.1],
            "orders": [2], "n_levels": 2, "cutoff": 20, "tol": 1e-6,
            "bogus": true}"#,
    );
    let out = run_cmd("gauge-scan", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let diag: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr is a JSON diagnostic");
    assert_eq!(diag["error_kind"], "Schema");
    assert!(diag["message"].as_str().unwrap().contains("bogus"));
}

#[test]
fn missing_config_file_exits_2() {
    let out = run_cmd("spectrum", &PathBuf::from("/nonexistent/usqed.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error_kind"], "Io");
}

#[test]
fn numerical_failure_exits_3_with_diagnostic() {
    // undriven cavity: the steady state emits nothing, so g2 is undefined
    let cfg = write_config(
        "dark.json",
        r#"{"system": "cavity", "detuning": 1.0, "f": 0.0, "kappa": 0.2,
            "cutoff": 8, "tau_grid": [0.0], "omega_grid": [1.0]}"#,
    );
    let out = run_cmd("g2", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error_kind"], "DarkSteadyState");
    assert!(diag["message"].as_str().unwrap().len() > 10);
}

#[test]
fn unconverged_gauge_entries_render_as_nan_flags() {
    // cutoff 6 cannot represent the g = 2 gauge translation unitarily;
    // the sweep reports the point as unconverged instead of failing
    let cfg = write_config(
        "truncation.json",
        r#"{"omega": 1.0, "splitting": 1.0, "g_grid": [2.0],
            "orders": [2], "n_levels": 2, "cutoff": 6, "tol": 1e-6}"#,
    );
    let out = run_cmd("gauge-scan", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "nan");
        assert_eq!(fields[3], "0");
    }
}

#[test]
fn output_is_byte_stable_across_runs_and_thread_counts() {
    let cfg = write_config("stable.json", GAUGE_CFG);
    let o1 = std::env::temp_dir().join(format!("usqed-out1-{}", std::process::id()));
    let o2 = std::env::temp_dir().join(format!("usqed-out2-{}", std::process::id()));
    let s1 = run_cmd("gauge-scan", &cfg, &["--out", o1.to_str().unwrap(), "--threads", "1"]);
    let s2 = run_cmd("gauge-scan", &cfg, &["--out", o2.to_str().unwrap(), "--threads", "4"]);
    assert_eq!(s1.status.code(), Some(0));
    assert_eq!(s2.status.code(), Some(0));
    let b1 = std::fs::read(&o1).unwrap();
    let b2 = std::fs::read(&o2).unwrap();
    assert!(!b1.is_empty());
    assert_eq!(b1, b2);
}

#[test]
fn json_format_carries_meta() {
    let cfg = write_config("json.json", GAUGE_CFG);
    let out = run_cmd("gauge-scan", &cfg, &["--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["columns"][1], "variant");
    assert!(v["rows"].as_array().unwrap().len() >= 6);
}

#[test]
fn fuzz_corpus_seeds_parse_cleanly() {
    const COMMANDS: [&str; 6] = [
        "spectrum",
        "validity-map",
        "steady",
        "g2",
        "floquet",
        "gauge-scan",
    ];
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/fuzz_config");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let data = std::fs::read(entry.unwrap().path()).unwrap();
        let (&sel, body) = data.split_first().unwrap();
        usqed::cli::check_config(COMMANDS[sel as usize % COMMANDS.len()], body)
            .expect("corpus seed must be a valid config");
        n += 1;
    }
    assert!(n >= 6, "expected at least one seed per command, found {n}");
}

#[test]
fn dim_cap_env_var_is_enforced() {
    let cfg = write_config(
        "cap.json",
        r#"{
            "model": {"omega": 1.0, "splitting": 1.0, "g": 0.5},
            "methods": ["exact"],
            "n_levels": 4
        }"#,
    );
    let out = bin()
        .arg("spectrum")
        .arg("--config")
        .arg(&cfg)
        .env("USQED_DIM_CAP", "16")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error_kind"], "DimensionOverflow");
}
