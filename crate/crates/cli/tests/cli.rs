//! End-to-end tests of the `stobeam` binary: exit-code contract,
//! reproducibility, config handling, and output-file schemas.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stobeam")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("STOBEAM_OUT")
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stobeam-cli-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_zero_model_writes_zero_csv() {
    // hinged-basic with a zero initial state is the zero model end to end.
    let out = tmp("simzero");
    std::fs::create_dir_all(&out).unwrap();
    let mut cfg = stobeam_cli::presets::preset("hinged-basic").unwrap();
    cfg.initial.kind = stobeam_cli::config::InitialKindConfig::Zero;
    cfg.initial.mode = None;
    cfg.initial.a = None;
    cfg.initial.b = None;
    let cfg_path = out.join("zero.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let status = run(&["simulate", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    let text = read(&out, "trajectory.csv");
    assert!(text.starts_with("# config_hash="));
    for line in text.lines().skip(2) {
        for col in line.split(',').skip(1) {
            assert_eq!(col.parse::<f64>().unwrap(), 0.0, "nonzero column in {line}");
        }
    }
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let out1 = tmp("rep1");
    let out2 = tmp("rep2");
    for out in [&out1, &out2] {
        let s = run(&[
            "simulate",
            "--config",
            "damped-beam",
            "--seed",
            "777",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    }
    assert_eq!(read(&out1, "trajectory.csv"), read(&out2, "trajectory.csv"));
    assert_eq!(read(&out1, "trajectory.json"), read(&out2, "trajectory.json"));
}

#[test]
fn damped_beam_envelope_is_nonincreasing() {
    let out = tmp("envelope");
    let s = run(&["simulate", "--config", "damped-beam", "--out", out.to_str().unwrap()]);
    assert!(s.status.success());
    let text = read(&out, "trajectory.csv");
    let mut norms = Vec::new();
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let t: f64 = cols[0].parse().unwrap();
        let h: f64 = cols[cols.len() - 3].parse().unwrap();
        norms.push((t, h));
    }
    // Sample the envelope on windows of one fundamental period.
    let period = 2.0 * std::f64::consts::PI / (std::f64::consts::PI * std::f64::consts::PI);
    let mut window_max = Vec::new();
    let mut current = f64::MIN;
    let mut next_cut = period;
    for (t, h) in norms {
        if t > next_cut {
            window_max.push(current);
            current = f64::MIN;
            next_cut += period;
        }
        current = current.max(h);
    }
    for w in window_max.windows(2) {
        assert!(w[1] <= w[0] * 1.001, "envelope grew: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn bad_config_exits_2() {
    let out = tmp("bad");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n[basis]\nbc = \"hinged\"\n").unwrap();
    let s = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(2), "{}", String::from_utf8_lossy(&s.stderr));

    let s = run(&["simulate", "--config", "no-such-preset", "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(2));
}

#[test]
fn picard_without_truncation_exits_2_and_small_iter_exits_5() {
    let out = tmp("pc");
    std::fs::create_dir_all(&out).unwrap();
    // khasminskii-demo has no truncation radius.
    let s = run(&["picard-compare", "--config", "khasminskii-demo", "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(2));

    // Truncated config with a starved iteration budget and λ below the
    // contraction threshold: exit 5 and the factor printed.
    let text = {
        let s = preset_toml("damped-beam");
        s.replace("picard_max_iter = 200", "picard_max_iter = 1")
            .replace("picard_lambda = 0.5", "picard_lambda = 0.1")
            .replace("picard_tol = 1e-10", "picard_tol = 1e-14")
    };
    let cfg = out.join("starved.toml");
    std::fs::write(&cfg, text).unwrap();
    let s = run(&["picard-compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(5), "{}", String::from_utf8_lossy(&s.stderr));
    let err = String::from_utf8_lossy(&s.stderr);
    assert!(err.contains("contraction factor"), "stderr: {err}");
}

fn preset_toml(name: &str) -> String {
    stobeam_cli::presets::preset(name).unwrap().to_toml().unwrap()
}

#[test]
fn ensemble_single_path_skips_checks() {
    let out = tmp("single");
    let s = run(&[
        "ensemble",
        "--config",
        "khasminskii-demo",
        "--paths",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&out, "report.json")).unwrap();
    let checks = &report["runs"][0]["checks"];
    assert!(checks[0]["skipped"].as_str().unwrap().contains("degenerate"));
}

#[test]
fn ensemble_outputs_validate_against_schema_and_reproduce() {
    let out1 = tmp("ens1");
    let out2 = tmp("ens2");
    for out in [&out1, &out2] {
        let s = run(&[
            "ensemble",
            "--config",
            "khasminskii-demo",
            "--paths",
            "64",
            "--seed",
            "4242",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    }
    assert_eq!(read(&out1, "report.json"), read(&out2, "report.json"));
    assert_eq!(read(&out1, "curves_khasminskii.csv"), read(&out2, "curves_khasminskii.csv"));

    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&read(&out1, "report.json")).unwrap();
    let mut errors = Vec::new();
    validate(&schema, &report, "$", &mut errors);
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

/// Minimal structural JSON-Schema validator covering the subset the shipped
/// schema uses: type, required, properties, items, enum.
fn validate(schema: &serde_json::Value, value: &serde_json::Value, path: &str, errors: &mut Vec<String>) {
    use serde_json::Value;
    if let Some(ty) = schema.get("type").and_then(Value::as_str) {
        let ok = match ty {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected {ty}, got {value}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in {allowed:?}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if value.get(key).is_none() {
                errors.push(format!("{path}: missing required key {key}"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                if !v.is_null() {
                    validate(sub, v, &format!("{path}.{key}"), errors);
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate(items, v, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

#[test]
fn verify_passes_on_presets() {
    for preset in ["hinged-basic", "stability-K0", "stability-Kpos"] {
        let out = tmp(&format!("verify-{preset}"));
        let s = run(&["verify", "--config", preset, "--out", out.to_str().unwrap()]);
        assert_eq!(
            s.status.code(),
            Some(0),
            "{preset}: {}",
            String::from_utf8_lossy(&s.stderr)
        );
    }
}

#[test]
fn config_file_is_not_mutated() {
    let out = tmp("nomut");
    std::fs::create_dir_all(&out).unwrap();
    let text = preset_toml("khasminskii-demo");
    let cfg = out.join("keep.toml");
    std::fs::write(&cfg, &text).unwrap();
    let s = run(&[
        "ensemble",
        "--config",
        cfg.to_str().unwrap(),
        "--paths",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(s.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&cfg).unwrap(), text);
}
