use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use foresight::cli::run_command;

const SMALL: &str = r#"{
  "grid": { "n_trees": 5, "max_depth": [3, 6], "min_samples_leaf": [5], "features_per_split": ["sqrt"], "inner_folds": 2 },
  "synth": { "n_participants": 3, "session_length": 400, "n_blocks": 2, "cue_probability": 0.8 }
}"#;

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, SMALL).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("foresight").chain(args.iter().copied()))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_foresight");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["frobnicate"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["--version"]), Some(0));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["eval", "--task", "nap"]), 1);
    assert_eq!(run(&["eval", "--seed", "x"]), 1);
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(run(&["stats", "--out", out]), 1, "no corpus given");
    assert_eq!(run(&["eval", "--out", out, "--target-window", "3"]), 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let missing = tmp.path().join("nope");
    assert_eq!(run(&["stats", "--out", out, "--data", missing.to_str().unwrap()]), 2);
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["stats", "--out", out, "--data", empty.to_str().unwrap()]), 2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["synth", "--out", out, "--config", bad.to_str().unwrap()]), 2);
}

/// Paths whose contents differ between two snapshots.
fn differing(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let keys: BTreeSet<&PathBuf> = a.keys().chain(b.keys()).collect();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}

#[test]
fn synth_twice_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("corpus");
    let synth = || run(&["synth", "--seed", "7", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(synth(), 0);
    let first = files(&out);
    assert_eq!(first.keys().filter(|p| p.ends_with("manifest.json")).count(), 3);
    assert!(first.contains_key(Path::new("P01/ground_truth.json")));
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(synth(), 0);
    assert_eq!(differing(&first, &files(&out)), Vec::<PathBuf>::new());
}

#[test]
fn every_subcommand_writes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let data = tmp.path().join("data");
    let data = data.to_str().unwrap();
    assert_eq!(run(&["synth", "--config", cfg, "--out", data, "--seed", "3"]), 0);
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    for sub in ["stats", "features", "examples", "train", "eval"] {
        assert_eq!(run(&[sub, "--config", cfg, "--data", data, "--out", o, "--group", "phone", "--workers", "2"]), 0, "{sub}");
    }
    for f in ["stats.json", "folds.json", "model.json", "report.json"] {
        let v = json(&out.join(f));
        assert_eq!(v["config"]["group"], "phone", "{f}");
        assert_eq!(v["config"]["grid"]["n_trees"], 5, "{f}");
    }
    for f in ["features.jsonl", "examples.jsonl"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["config"]["seed"], 0);
        assert!(text.lines().count() > 10, "{f}");
    }
    for f in ["stats.txt", "report.txt"] {
        assert!(fs::read_to_string(out.join(f)).unwrap().starts_with("config {"), "{f}");
    }
    assert!(fs::read_to_string(out.join("confusion.csv")).unwrap().starts_with("# config {"));
    let report = json(&out.join("report.json"));
    assert_eq!(report["report"]["folds"].as_array().unwrap().len() + report["report"]["skipped"].as_array().unwrap().len(), 3);
}

#[test]
fn run_reports_four_groups() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let v = json(&out.join("run_report.json"));
    let reports = v["reports"].as_array().unwrap();
    let groups: Vec<&str> = reports.iter().map(|r| r["group"].as_str().unwrap()).collect();
    assert_eq!(groups, ["egocentric", "phone", "proposed", "proposed_plus_gaze"]);
    for r in reports {
        assert_eq!(r["folds"].as_array().unwrap().len() + r["skipped"].as_array().unwrap().len(), 3);
    }
    assert_eq!(v["config"]["synth"]["seed"], v["config"]["seed"]);
}
