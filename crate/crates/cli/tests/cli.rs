use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn meint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meint")).args(args).output().expect("run meint")
}

fn ok(args: &[&str]) -> Output {
    let out = meint(args);
    assert!(
        out.status.success(),
        "meint {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| header.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn key_values(path: &Path) -> BTreeMap<String, String> {
    read_csv(path).into_iter().map(|row| (row["key"].clone(), row["value"].clone())).collect()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("data").join("manifest.toml")
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        simulate(dir, &["--seed", "1", "--scale", "0.2"]);
    }
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    assert!(files.iter().any(|f| f.ends_with("truth/effects.csv")));
    for f in &files {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        if f.as_os_str() == "run_manifest.toml" {
            // Only the recorded output directory differs.
            let strip = |t: Vec<u8>| {
                String::from_utf8(t).unwrap().lines().filter(|l| !l.starts_with("output_dir")).collect::<Vec<_>>().join("\n")
            };
            assert_eq!(strip(x), strip(y));
        } else {
            assert_eq!(x, y, "{} differs between runs", f.display());
        }
    }

    let c = tmp.path().join("c");
    simulate(&c, &["--seed", "2", "--scale", "0.2"]);
    assert_ne!(fs::read(a.join("data/genes.csv")).unwrap(), fs::read(c.join("data/genes.csv")).unwrap());
}

#[test]
fn simulate_reports_scaled_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--scale", "0.2"]);
    let kv = key_values(&tmp.path().join("simulation.csv"));
    assert_eq!(kv["p"], "100");
    assert_eq!(kv["q"], "100");
    assert_eq!(kv["modules"], "3");
    let main: usize = kv["important_main"].parse().unwrap();
    let inter: usize = kv["important_interactions"].parse().unwrap();
    assert_eq!(kv["important_total"], (main + inter).to_string());
    assert_eq!(read_csv(&tmp.path().join("truth/effects.csv")).len(), main + inter);
}

#[test]
fn invalid_enum_value_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = meint(&["simulate", "--corr", "R4", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("R1") && err.contains("R2") && err.contains("R3"), "{err}");

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[simulate]\nscale_factor = -1.0\n").unwrap();
    let out = meint(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scale_factor"));

    fs::write(&cfg, "[simulate]\nplacment = \"P2\"\n").unwrap();
    let out = meint(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("placment"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[simulate]\nscale_factor = 0.2\nm = 3\n").unwrap();
    let out = tmp.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--m", "2", "--out", s(&out)]);
    let kv = key_values(&out.join("simulation.csv"));
    assert_eq!(kv["seed"], "9");
    assert_eq!(kv["m"], "2");
    assert_eq!(kv["p"], "100");

    // The emitted config replays the run exactly.
    let replay = tmp.path().join("r");
    ok(&["simulate", "--config", s(&out.join("config.toml")), "--out", s(&replay)]);
    assert_eq!(fs::read(out.join("data/genes.csv")).unwrap(), fs::read(replay.join("data/genes.csv")).unwrap());
}

#[test]
fn fit_writes_artifacts_and_passes_hierarchy_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("sim"), &["--seed", "3", "--scale", "0.2", "--signal", "B2"]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--seed", "3"]);
    for f in [
        "modules.csv",
        "module_stats.csv",
        "regulation.csv",
        "coefficients.csv",
        "environment.csv",
        "objective_trace.csv",
        "ebic.csv",
        "timing.csv",
        "model.json",
        "audit.csv",
        "run_manifest.toml",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("weights.csv").exists());

    let coef = read_csv(&out.join("coefficients.csv"));
    assert!(!coef.is_empty(), "empty coefficient table");
    // Own pass over the table: every group with an interaction has a main effect.
    let env: Vec<String> = (1..=5).map(|k| format!("e{k}")).collect();
    let mut groups: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for row in &coef {
        let nz = |c: &str| !row[c].is_empty() && row[c].parse::<f64>().unwrap() != 0.0;
        let g = groups.entry(row["group"].as_str()).or_default();
        g.0 |= nz("main");
        g.1 |= env.iter().any(|e| nz(e));
    }
    assert!(groups.values().all(|(main, inter)| !inter || *main));
    assert_eq!(key_values(&out.join("audit.csv"))["status"], "pass");

    let stages: Vec<String> = read_csv(&out.join("timing.csv")).into_iter().map(|r| r["stage"].clone()).collect();
    assert_eq!(stages, ["standardize", "regulation", "modules", "integration", "interaction"]);
}

#[test]
fn run_manifest_hashes_match_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--scale", "0.2"]);
    let text = fs::read_to_string(tmp.path().join("run_manifest.toml")).unwrap();
    let manifest: toml::Table = toml::from_str(&text).unwrap();
    assert_eq!(manifest["command"].as_str(), Some("simulate"));
    assert_eq!(manifest["config"]["simulate"]["scale_factor"].as_float(), Some(0.2));
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let listed: Vec<&str> = artifacts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    let on_disk: Vec<PathBuf> = files_under(tmp.path()).into_iter().filter(|f| f.as_os_str() != "run_manifest.toml").collect();
    assert_eq!(listed.len(), on_disk.len());
    for a in artifacts {
        let bytes = fs::read(tmp.path().join(a["path"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(a["sha256"].as_str().unwrap(), hex);
    }
}

#[test]
fn survival_fit_emits_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("sim"), &["--scale", "0.1", "--censoring", "0.3"]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--variant", "alt3"]);
    let w = read_csv(&out.join("weights.csv"));
    assert_eq!(w.len(), 250);
    let total: f64 = w.iter().map(|r| r["weight"].parse::<f64>().unwrap()).sum();
    // Mass past the last event is lost when the largest time is censored.
    assert!(total > 0.0 && total <= 1.0 + 1e-9, "KM weights sum to {total}");
    assert!(w.iter().any(|r| r["weight"] == "0"));
}

#[test]
fn alt4_skips_module_outputs_and_predict_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("sim"), &["--scale", "0.2", "--signal", "B2"]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--variant", "alt4", "--prescreen", "40"]);
    assert!(!out.join("modules.csv").exists());
    assert!(!out.join("audit.csv").exists(), "alt4 is not hierarchical");
    let screen = read_csv(&out.join("prescreen.csv"));
    assert_eq!(screen.len(), 200);
    assert_eq!(screen.iter().filter(|r| r["kept"] == "1").count(), 40);

    // The model was fit on 40 columns; predict matches them by name.
    let pred = tmp.path().join("pred");
    ok(&["predict", "--model", s(&out.join("model.json")), "--manifest", s(&manifest), "--out", s(&pred)]);
    assert_eq!(read_csv(&pred.join("predictions.csv")).len(), 250);
    let pmse: f64 = key_values(&pred.join("metrics.csv"))["pmse"].parse().unwrap();
    assert!(pmse.is_finite() && pmse > 0.0);
}

#[test]
fn stage_and_usage_errors_set_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("sim"), &["--scale", "0.1"]);
    // Truncate one file so row counts disagree.
    let genes = tmp.path().join("sim/data/genes.csv");
    let text = fs::read_to_string(&genes).unwrap();
    fs::write(&genes, text.lines().take(10).collect::<Vec<_>>().join("\n")).unwrap();
    let out = meint(&["fit", "--manifest", s(&manifest), "--out", s(&tmp.path().join("f"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage 'load'") && err.contains("row-count mismatch"), "{err}");

    let out = meint(&["fit", "--manifest", s(&manifest), "--lambda1", "0.5", "--out", s(&tmp.path().join("g"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_writes_split_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("sim"), &["--scale", "0.1", "--signal", "B2"]);
    let out = tmp.path().join("eval");
    ok(&["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--variant", "alt4", "--splits", "3"]);
    let kv = key_values(&out.join("evaluation.csv"));
    assert_eq!(kv["metric"], "pmse");
    assert_eq!(kv["ratio"], "0.9");
    assert_eq!(read_csv(&out.join("splits.csv")).len(), 3);
    assert!(out.join("ooi.csv").exists());
}

#[test]
fn benchmark_rows_and_reproducible_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&["benchmark", "--out", s(&out), "--scale", "0.1", "--replicates", "2", "--variants", "alt3,alt4", "--seed", "4"]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let rows = read_csv(&a.join("benchmark.csv"));
    assert_eq!(rows.len(), 4);
    let summary = read_csv(&a.join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|r| r["failures"] == "0"));
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
}
