use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mrhvid"));
    cmd.env("RUST_LOG", "error");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mrhvid")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

struct Fixture {
    dir: PathBuf,
}

impl Fixture {
    fn manifest(&self) -> String {
        self.dir.join("ds/manifest.json").display().to_string()
    }
    fn dict(&self) -> String {
        self.dir.join("dict.bin").display().to_string()
    }
    fn sigs(&self) -> String {
        self.dir.join("sigs").display().to_string()
    }
}

/// A small dataset, dictionary and signature directory shared by all tests.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-fixture");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let f = Fixture { dir };
        let ds = f.dir.join("ds").display().to_string();
        ok_json(&[
            "synth", "--out", &ds, "--persons", "4", "--videos-per-person", "4",
            "--enroll-videos", "2", "--frames-per-video", "8", "--train-persons", "6", "--seed", "3",
        ]);
        ok_json(&[
            "train-dict", "--manifest", &f.manifest(), "--out", &f.dict(), "--dict-components", "8",
            "--train-frames", "4",
        ]);
        ok_json(&["extract", "--manifest", &f.manifest(), "--dict", &f.dict(), "--out", &f.sigs()]);
        f
    })
}

fn evaluate(extra: &[&str]) -> Value {
    let f = fixture();
    let (m, s) = (f.manifest(), f.sigs());
    let mut args = vec!["evaluate", "--manifest", &m, "--signatures", &s];
    args.extend_from_slice(extra);
    ok_json(&args)
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["frobnicate"],
        vec!["evaluate", "--no-such-flag"],
        vec!["select", "--manifest", "m.json", "--select-method", "best"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn conflicting_pipelines_are_usage_errors() {
    let f = fixture();
    let out = run(&[
        "evaluate", "--manifest", &f.manifest(), "--signatures", &f.sigs(), "--cluster-k", "2",
        "--select-m", "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let out = run(&["evaluate", "--manifest", "/definitely/missing.json", "--dict", "d.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let f = fixture();
    let out = run(&["evaluate", "--manifest", &f.manifest(), "--dict", &f.manifest()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn end_to_end_default_report() {
    let f = fixture();
    let report = ok_json(&["evaluate", "--manifest", &f.manifest(), "--dict", &f.dict()]);
    let mer = report["report"]["mer"].as_f64().unwrap();
    assert!((0.0..=0.5).contains(&mer), "{mer}");
    assert_eq!(report["report"]["trial_counts"]["genuine"], 8);
    assert_eq!(report["report"]["trial_counts"]["impostor"], 24);
    assert_eq!(report["report"]["config"]["pipeline"]["kind"], "all_faces_average");
    // images and stored signatures give the same answer
    assert_eq!(report["report"], evaluate(&[])["report"]);
}

#[test]
fn single_cluster_matches_average() {
    let k1 = evaluate(&["--cluster-k", "1"]);
    let avg = evaluate(&["--all-faces-average"]);
    assert_eq!(k1["report"]["mer"], avg["report"]["mer"]);
    assert_eq!(k1["report"]["threshold_star"], avg["report"]["threshold_star"]);
}

#[test]
fn selection_is_echoed() {
    let r = evaluate(&["--select-method", "confidence", "--select-m", "4"]);
    assert_eq!(r["config"]["select_method"], "confidence");
    assert_eq!(r["config"]["select_m"], 4);
    let spec = &r["report"]["config"]["pipeline"]["spec"];
    assert_eq!(spec["method"], "confidence");
    assert_eq!(spec["m"], 4);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture();
    let cfg = f.dir.join("layered.json");
    std::fs::write(&cfg, r#"{"select_method": "random", "select_m": 2, "cohorts": 3, "persons": 99}"#).unwrap();
    let cfg = cfg.display().to_string();
    let r = evaluate(&["--config", &cfg, "--select-m", "5"]);
    assert_eq!(r["config"]["select_method"], "random");
    assert_eq!(r["config"]["select_m"], 5);
    assert_eq!(r["config"]["cohorts"], 3);
    assert_eq!(r["report"]["cohorts"], 3);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let f = fixture();
    let run_with = |threads: &str| {
        let out = run(&[
            "--threads", threads, "evaluate", "--manifest", &f.manifest(), "--dict", &f.dict(),
            "--cluster-k", "2", "--cluster-mode", "single",
        ]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run_with("1"), run_with("4"));
}

#[test]
fn match_scores_feed_evaluate() {
    let f = fixture();
    let scores = f.dir.join("scores.csv").display().to_string();
    let out = run(&[
        "match", "--manifest", &f.manifest(), "--signatures", &f.sigs(), "--select-m", "3",
        "--out", &scores,
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&scores).unwrap();
    assert!(text.starts_with("probe_id,gallery_person_id,is_genuine,distance\n"));
    assert_eq!(text.lines().count(), 1 + 32);
    let from_csv = ok_json(&["evaluate", "--scores", &scores]);
    let direct = evaluate(&["--select-m", "3"]);
    assert_eq!(from_csv["report"]["mer"], direct["report"]["mer"]);

    let curve = run(&["evaluate", "--scores", &scores, "--format", "csv"]);
    let curve = String::from_utf8(curve.stdout).unwrap();
    assert!(curve.starts_with("threshold,far,frr\n"));
    // below-min, above-max and one row per distinct score and midpoint
    assert!(curve.lines().count() >= 4);
}

#[test]
fn select_lists_every_video() {
    let f = fixture();
    let r = ok_json(&[
        "select", "--manifest", &f.manifest(), "--select-method", "confidence", "--select-m", "3",
    ]);
    let sel = r["selections"].as_array().unwrap();
    assert_eq!(sel.len(), 4 * 4 + 6);
    assert!(sel.iter().all(|s| s["indices"].as_array().unwrap().len() == 3));
    assert!(sel.iter().all(|s| s["truncated"] == false));
    let many = ok_json(&["select", "--manifest", &f.manifest(), "--select-m", "50"]);
    assert!(many["selections"].as_array().unwrap().iter().all(|s| s["truncated"] == true));
}

#[test]
fn cluster_writes_centroids() {
    let f = fixture();
    let a = format!("{}/p000/enroll00.mrh", f.sigs());
    let b = format!("{}/p000/enroll01.mrh", f.sigs());
    let out = f.dir.join("centroids.mrh").display().to_string();
    let r = ok_json(&[
        "cluster", "--input", &a, "--input", &b, "--cluster-k", "2", "--cluster-mode", "single",
        "--out", &out,
    ]);
    assert_eq!(r["centroids"], 4);
    assert_eq!(r["models"].as_array().unwrap().len(), 2);
    let r = ok_json(&["cluster", "--input", &a, "--input", &b, "--cluster-k", "3", "--out", &out]);
    assert_eq!(r["centroids"], 3);
    assert!(r["models"][0]["iterations"].as_u64().unwrap() <= 20);
}

#[test]
fn per_face_counts_all_pairs() {
    let r = evaluate(&["--per-face"]);
    // each probe video has 8 faces and each gallery 16
    assert_eq!(r["report"]["cost"]["max_pairs_per_trial"], 8 * 16);
    assert_eq!(r["report"]["cost"]["distance_evaluations"], 32 * 8 * 16);
}
