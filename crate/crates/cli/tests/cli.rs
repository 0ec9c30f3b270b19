use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rt_spectrum::params::FluidConfig;
use tempfile::TempDir;

fn reference() -> FluidConfig {
    FluidConfig {
        rho_plus: 2.0,
        rho_minus: 1.0,
        mu_plus: 1.0,
        mu_minus: 1.0,
        g: 1.0,
        sigma_plus: 0.0,
        sigma_minus: 0.0,
        b: 1.0,
        l1: 1.0,
        l2: 1.0,
    }
}

fn write_config(dir: &TempDir, name: &str, cfg: &FluidConfig) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_vec(cfg).unwrap()).unwrap();
    p
}

fn run(config: Option<&Path>, args: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rt-spectrum"));
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn classify_reports_regime() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let text = stdout(&run(Some(&cfg), &["classify"]));
    assert!(text.starts_with("regime UnstableNoST\n"), "{text}");
    assert!(text.contains("xi_c inf"));

    let stable = write_config(
        &dir,
        "s.json",
        &FluidConfig {
            sigma_plus: 2.0,
            sigma_minus: 2.0,
            ..reference()
        },
    );
    let text = stdout(&run(Some(&stable), &["classify"]));
    assert!(text.contains("regime StableExp"), "{text}");
    assert!(text.contains("subcritical_frequencies 0"), "{text}");
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(None, &["classify"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"rho_plus\": 2,").unwrap();
    let o = run(Some(&bad), &["classify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    let unpaired = write_config(
        &dir,
        "u.json",
        &FluidConfig {
            sigma_minus: 0.5,
            ..reference()
        },
    );
    assert_eq!(run(Some(&unpaired), &["classify"]).status.code(), Some(2));
    let cfg = write_config(&dir, "c.json", &reference());
    assert_eq!(run(Some(&cfg), &["--mesh", "1", "classify"]).status.code(), Some(2));
    assert_eq!(run(Some(&cfg), &["mode", "--xi", "0", "0"]).status.code(), Some(2));
    assert_eq!(run(Some(&cfg), &["dispersion", "--xi-max", "0"]).status.code(), Some(2));
}

#[test]
fn stable_regime_exits_3_for_rate_commands() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        &FluidConfig {
            rho_plus: 1.0,
            rho_minus: 2.0,
            ..reference()
        },
    );
    assert_eq!(run(Some(&cfg), &["--mesh", "8", "sharp-rate"]).status.code(), Some(3));
    assert_eq!(run(Some(&cfg), &["--mesh", "8", "mode", "--xi", "1", "0"]).status.code(), Some(3));
    let text = stdout(&run(Some(&cfg), &["--mesh", "8", "dispersion", "--xi-max", "2"]));
    let rows = csv_rows(&text);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[5] == "stable"), "{text}");
}

#[test]
fn degenerate_flattening_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let o = run(Some(&cfg), &["--mesh", "16", "mode", "--xi", "1", "0", "--grid", "4,4,5", "--physical", "--time", "100"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerates"));
}

#[test]
fn dispersion_rows_respect_bounds() {
    let dir = TempDir::new().unwrap();
    let c = FluidConfig {
        sigma_plus: 0.3,
        sigma_minus: 0.3,
        ..reference()
    };
    let cfg = write_config(&dir, "c.json", &c);
    let text = stdout(&run(Some(&cfg), &["--mesh", "24", "dispersion", "--xi-max", "2.5"]));
    let rows = csv_rows(&text);
    let mut unstable = 0;
    for r in &rows {
        if r[5] == "unstable" {
            unstable += 1;
            let lambda: f64 = r[6].parse().unwrap();
            let ceiling: f64 = r[9].parse().unwrap();
            let proof: f64 = r[10].parse().unwrap();
            assert!(lambda <= ceiling.min(proof) + 1e-8, "{r:?}");
        }
    }
    assert!(unstable > 0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let a = stdout(&run(Some(&cfg), &["--mesh", "16", "dispersion", "--xi-max", "3"]));
    let b = stdout(&run(Some(&cfg), &["--mesh", "16", "--threads", "3", "dispersion", "--xi-max", "3"]));
    assert_eq!(a, b);
}

#[test]
fn out_file_gets_a_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let out = dir.path().join("d.csv");
    let o = run(Some(&cfg), &["--mesh", "8", "--out", out.to_str().unwrap(), "dispersion", "--xi-max", "2"]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("d.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "dispersion");
    assert_eq!(m["mesh"]["n_lower"], 8);
    assert_eq!(m["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn sharp_rate_reports_truncation_without_tension() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let v: serde_json::Value = serde_json::from_str(&stdout(&run(Some(&cfg), &["--mesh", "12", "sharp-rate"]))).unwrap();
    assert!(v["truncation"].is_object());
    let value = v["value"].as_f64().unwrap();
    assert!(value > 0.0 && value <= v["ceiling_bound"].as_f64().unwrap());
    assert!(v["continuous_envelope"].as_f64().unwrap() >= value);
}

fn mode_csv(cfg: &Path, time: &str) -> Vec<Vec<f64>> {
    let text = stdout(&run(Some(cfg), &["--mesh", "16", "mode", "--xi", "1", "1", "--grid", "4,4,5", "--time", time]));
    csv_rows(&text)
        .into_iter()
        .map(|r| r.iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn mode_fields_grow_by_exact_factor() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let lambda: f64 = {
        let text = stdout(&run(Some(&cfg), &["--mesh", "16", "dispersion", "--xi-max", "1.5"]));
        let rows = csv_rows(&text);
        let r = rows.iter().find(|r| r[0] == "1" && r[1] == "1").unwrap();
        r[6].parse().unwrap()
    };
    let zero = mode_csv(&cfg, "0");
    let later = mode_csv(&cfg, "1.5");
    assert_eq!(zero.len(), 4 * 4 * 5);
    let factor = (1.5 * lambda).exp();
    let mut compared = 0;
    for (a, b) in zero.iter().zip(&later) {
        // leading columns are coordinates
        for (x, y) in a.iter().zip(b).skip(3) {
            if x.abs() > 1e-12 {
                assert!((y / x - factor).abs() <= 1e-10 * factor, "{y} / {x} vs {factor}");
                compared += 1;
            }
        }
    }
    assert!(compared > 0);
}

#[test]
fn binary_mode_output_has_consistent_header() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let out = dir.path().join("m.json");
    let o = run(Some(&cfg), &["--mesh", "16", "--out", out.to_str().unwrap(), "mode", "--xi", "1", "0", "--grid", "4,4,5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let bin = std::fs::read(dir.path().join("m.json.bin")).unwrap();
    let arrays = h["arrays"].as_array().unwrap();
    let total: u64 = arrays.iter().map(|a| a["len"].as_u64().unwrap()).sum();
    assert_eq!(bin.len() as u64, 8 * total);
    for a in arrays {
        let end = a["offset"].as_u64().unwrap() + 8 * a["len"].as_u64().unwrap();
        assert!(end <= bin.len() as u64);
    }
}

#[test]
fn convergence_table_shows_high_order() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &reference());
    let v: serde_json::Value =
        serde_json::from_str(&stdout(&run(Some(&cfg), &["convergence", "--xi", "1", "0", "--meshes", "8,16,32"]))).unwrap();
    assert!(v["order"].as_f64().unwrap() >= 2.0);
    assert_eq!(v["monotone"], true);

    let v: serde_json::Value =
        serde_json::from_str(&stdout(&run(Some(&cfg), &["convergence", "--xi", "1", "0", "--meshes", "8,8,16"]))).unwrap();
    assert_eq!(v["rows"][1]["delta"].as_f64(), Some(0.0));
    assert_eq!(run(Some(&cfg), &["convergence", "--xi", "1", "0", "--meshes", "8,16"]).status.code(), Some(2));
}
