use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sharechain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn arg(&self, rel: &str) -> String {
        self.path(rel).to_str().unwrap().to_string()
    }
}

const CONFIG: &str = "seed = 5\n[dataset]\ninitial_qualities = [70]\n";

/// Sources, dataset and per-split features.
fn dataset() -> Fixture {
    let f = Fixture {
        dir: tempfile::tempdir().unwrap(),
    };
    fs::write(f.path("cfg.toml"), CONFIG).unwrap();
    ok(&["synth-sources", "--out", &f.arg("src"), "--count", "6", "--width", "48", "--height", "48"]);
    ok(&["simulate", "--config", &f.arg("cfg.toml"), "--sources", &f.arg("src"), "--out", &f.arg("ds")]);
    for split in ["train", "val", "test"] {
        ok(&[
            "extract",
            "--manifest",
            &f.arg("ds/manifest.json"),
            "--split",
            split,
            "--out",
            &f.arg(&format!("{split}.jsonl")),
        ]);
    }
    f
}

fn trained() -> Fixture {
    let f = dataset();
    ok(&[
        "train",
        "--config",
        &f.arg("cfg.toml"),
        "--train",
        &f.arg("train.jsonl"),
        "--val",
        &f.arg("val.jsonl"),
        "--out",
        &f.arg("model.json"),
    ]);
    f
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn simulate_writes_manifest_deterministically() {
    let f = dataset();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("ds/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], 1);
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 6 * 39);
    ok(&["simulate", "--config", &f.arg("cfg.toml"), "--sources", &f.arg("src"), "--out", &f.arg("ds2")]);
    assert_eq!(fs::read(f.path("ds/manifest.json")).unwrap(), fs::read(f.path("ds2/manifest.json")).unwrap());
    let entry = manifest["entries"][0]["path"].as_str().unwrap();
    assert_eq!(fs::read(f.path("ds").join(entry)).unwrap(), fs::read(f.path("ds2").join(entry)).unwrap());
}

#[test]
fn simulate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&["simulate", "--sources", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "L = 0\n").unwrap();
    let out = run(&["simulate", "--config", p(&cfg), "--sources", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn extract_one_line_per_entry_and_rejects_unknown_features() {
    let f = dataset();
    ok(&["extract", "--features", "header", "--manifest", &f.arg("ds/manifest.json"), "--out", &f.arg("all.jsonl")]);
    assert_eq!(lines(&f.path("all.jsonl")), 6 * 39);
    let split_total: usize = ["train", "val", "test"].iter().map(|s| lines(&f.path(&format!("{s}.jsonl")))).sum();
    assert_eq!(split_total, 6 * 39);
    let first = fs::read_to_string(f.path("all.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(rec.get("header").is_some() && rec.get("dct").is_none());

    let out = run(&["extract", "--features", "dct,sift", "--manifest", &f.arg("ds/manifest.json"), "--out", &f.arg("x.jsonl")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_round_trips_and_records_informed_stop() {
    let f = trained();
    let text = fs::read_to_string(f.path("model.json")).unwrap();
    let model = sharechain::cascade::CascadeModel::from_json(&text).unwrap();
    assert_eq!(model.to_json(), text);
    assert_eq!(model.universe().omega_size(3), 39);

    ok(&[
        "train",
        "--train",
        &f.arg("train.jsonl"),
        "--val",
        &f.arg("val.jsonl"),
        "--out",
        &f.arg("informed.json"),
        "--informed",
        "TW",
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("informed.json")).unwrap()).unwrap();
    assert_eq!(v["informed_stop"], "TW");
}

#[test]
fn train_with_empty_validation_is_a_usage_error() {
    let f = dataset();
    fs::write(f.path("empty.jsonl"), "").unwrap();
    let out = run(&["train", "--train", &f.arg("train.jsonl"), "--val", &f.arg("empty.jsonl"), "--out", &f.arg("m.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
    assert!(!f.path("m.json").exists());
}

#[test]
fn infer_prints_tab_separated_lines() {
    let f = trained();
    let mut images: Vec<String> = fs::read_dir(f.path("ds/test/FB_TW"))
        .unwrap()
        .map(|e| e.unwrap().path().to_str().unwrap().to_string())
        .collect();
    images.sort();
    let mut args = vec!["infer".to_string(), "--model".into(), f.arg("model.json")];
    args.extend(images.iter().cloned());
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), images.len());
    for (row, img) in rows.iter().zip(&images) {
        assert_eq!(row.len(), 3);
        assert_eq!(row[0], img);
        assert!(row[2] == "0" || row[2] == "1");
        // The newest step is container-determined.
        assert!(row[1].ends_with("TW"), "{row:?}");
    }

    let mut child = bin()
        .args(["infer", "--model", &f.arg("model.json"), "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all((images.join("\n") + "\n").as_bytes()).unwrap();
    let piped = child.wait_with_output().unwrap();
    assert!(piped.status.success());
    assert_eq!(String::from_utf8(piped.stdout).unwrap(), stdout);
}

#[test]
fn infer_reports_missing_files() {
    let f = trained();
    let missing = f.arg("missing.jpg");
    let good = fs::read_dir(f.path("ds/test/FL")).unwrap().next().unwrap().unwrap().path();
    let out = run(&["infer", "--model", &f.arg("model.json"), &missing, p(&good)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jpg"));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

#[test]
fn evaluate_reports_every_block() {
    let f = trained();
    ok(&[
        "evaluate",
        "--model",
        &f.arg("model.json"),
        "--test",
        &f.arg("test.jsonl"),
        "--out",
        &f.arg("fused.json"),
        "--confusion-dir",
        &f.arg("conf"),
    ]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("fused.json")).unwrap()).unwrap();
    assert_eq!(r["version"], 1);
    assert_eq!(r["mode"], "fused");
    let steps = r["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 3);
    let sizes: Vec<u64> = steps.iter().map(|s| s["label_space_size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![3, 12, 39]);
    assert!((steps[2]["random_guess"].as_f64().unwrap() - 1.0 / 39.0).abs() < 1e-12);
    assert!(f.path("conf/confusion_block2.csv").exists());

    ok(&[
        "evaluate",
        "--model",
        &f.arg("model.json"),
        "--test",
        &f.arg("test.jsonl"),
        "--out",
        &f.arg("dct.json"),
        "--single-feature",
        "dct",
    ]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("dct.json")).unwrap()).unwrap();
    assert_eq!(r["mode"], "dct");
    assert_eq!(r["steps"][2]["n_rejected"], 0);
}

#[test]
fn separability_groups_and_errors() {
    let f = dataset();
    ok(&["separability", "--features", &f.arg("test.jsonl"), "--metric", "lsr", "--out", &f.arg("raw.json")]);
    ok(&[
        "separability",
        "--features",
        &f.arg("test.jsonl"),
        "--standardize",
        "--out",
        &f.arg("z.json"),
        "--csv",
        &f.arg("z.csv"),
    ]);
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("raw.json")).unwrap()).unwrap();
    let z: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("z.json")).unwrap()).unwrap();
    let names: Vec<&str> = raw["groups"].as_array().unwrap().iter().map(|g| g["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"C[0]=TW") && names.contains(&"C[-1]=FB"));
    assert_ne!(raw["per_sample_lsr"], z["per_sample_lsr"]);
    let counts = |v: &serde_json::Value| -> Vec<u64> {
        v["groups"].as_array().unwrap().iter().map(|g| g["count"].as_u64().unwrap()).collect()
    };
    assert_eq!(counts(&raw), counts(&z));
    assert_eq!(lines(&f.path("z.csv")), lines(&f.path("test.jsonl")) + 1);

    let single: String = fs::read_to_string(f.path("test.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"label\":\"FB\""))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(!single.is_empty());
    fs::write(f.path("single.jsonl"), single).unwrap();
    let out = run(&["separability", "--features", &f.arg("single.jsonl"), "--out", &f.arg("s.json")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["infer"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--model", "m", "--test", "t", "--out", "o", "--single-feature", "sift"]).status.code(), Some(2));
}
