//! The `pfm` binary: staging, failure isolation, exit codes and determinism.

mod common;

use common::*;
use pfm_core::evaluation::{EvalReport, CurveRow};
use tempfile::tempdir;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn three_slide_preprocess_writes_three_masks() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 3, 3, 1, 8);
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let manifest = dir.path().join("c/manifest.csv");
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for i in 0..3 {
        assert!(out.join(format!("masks/slide_00{i}.json")).exists());
    }
    let status = std::fs::read_to_string(out.join("masks/status.csv")).unwrap();
    assert_eq!(status.lines().filter(|l| l.contains(",ok,")).count(), 3);
    assert!(out.join("masks/run_meta.json").exists());
}

#[test]
fn one_corrupt_slide_is_isolated() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 3, 3, 1, 8);
    std::fs::write(dir.path().join("c/slide_001.png"), b"not a png").unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let manifest = dir.path().join("c/manifest.csv");
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("masks/slide_000.json").exists());
    assert!(!out.join("masks/slide_001.json").exists());
    assert!(out.join("masks/slide_002.json").exists());
    let failures = std::fs::read_to_string(out.join("failures/preprocess.csv")).unwrap();
    let rows: Vec<&str> = failures.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("slide_001,"), "{failures}");
}

#[test]
fn every_slide_failing_exits_3() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 2, 2, 1, 8);
    for i in 0..2 {
        std::fs::write(dir.path().join(format!("c/slide_00{i}.png")), b"junk").unwrap();
    }
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let manifest = dir.path().join("c/manifest.csv");
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn empty_manifest_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "slide_id,patient_id,grade,image_path,magnification\n").unwrap();
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--output", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 2, 2, 1, 8);
    let manifest = dir.path().join("c/manifest.csv");
    let out = dir.path().join("out");
    assert_eq!(pfm(&["frobnicate"]).status.code(), Some(2));
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--workers", "0", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pfm(&["embed", "--manifest", s(&manifest), "--provider", "gpu:0", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let cfg = write_config(dir.path(), &serde_json::json!({"patch_sise": 32}));
    let o = pfm(&["preprocess", "--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pfm(&["preprocess", "--manifest", s(&dir.path().join("absent.csv")), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn stages_name_the_missing_upstream_artifact() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 3, 3, 1, 8);
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let manifest = dir.path().join("c/manifest.csv");
    let base = ["--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)];
    let run = |cmd: &str| pfm(&[&[cmd][..], &base[..]].concat());

    let o = run("embed");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&out.join("masks/slide_000.json"))), "{}", stderr(&o));

    assert_eq!(run("preprocess").status.code(), Some(0));
    let o = run("evaluate");
    assert_eq!(o.status.code(), Some(2));
    let want = out.join("embeddings/synthetic/task/slide_000.pfme");
    assert!(stderr(&o).contains("missing upstream artifact"), "{}", stderr(&o));
    assert!(stderr(&o).contains(s(&want)), "{}", stderr(&o));
}

#[test]
fn external_provider_with_wrong_dimension_fails_per_slide() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 3, 3, 1, 8);
    let cfg = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let manifest = dir.path().join("c/manifest.csv");
    let base = ["--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)];
    assert_eq!(pfm(&[&["preprocess"][..], &base[..]].concat()).status.code(), Some(0));

    let provider = format!("external:'{ECHO_RUNNER}' --grant-dim 9");
    let o = pfm(&[&["embed", "--provider", &provider][..], &base[..]].concat());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let failures = std::fs::read_to_string(out.join("failures/embed.csv")).unwrap();
    assert_eq!(failures.lines().skip(1).filter(|l| l.contains("dimension mismatch")).count(), 3, "{failures}");

    let provider = format!("external:'{ECHO_RUNNER}'");
    let o = pfm(&[&["embed", "--provider", &provider][..], &base[..]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("failures/embed.csv")).unwrap().lines().count(), 1);
    for kind in ["task", "aligned"] {
        assert!(out.join(format!("embeddings/synthetic/{kind}/slide_002.pfme")).exists());
    }
}

fn run_all(manifest: &std::path::Path, cfg: &std::path::Path, out: &std::path::Path, workers: &str) {
    let o = pfm(&["run", "--manifest", s(manifest), "--config", s(cfg), "--output", s(out), "--workers", workers]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn full_pipeline_is_deterministic_across_reruns_and_workers() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 20, 16, 10, 8);
    let cfg = write_config(dir.path(), &small_config());
    let manifest = dir.path().join("c/manifest.csv");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c4"));
    run_all(&manifest, &cfg, &a, "1");
    run_all(&manifest, &cfg, &b, "1");
    run_all(&manifest, &cfg, &c, "4");

    for method in ["zeroshot", "logreg", "abmil"] {
        let r: EvalReport =
            serde_json::from_slice(&std::fs::read(a.join(format!("eval/synthetic/{method}.json"))).unwrap()).unwrap();
        assert_eq!(r.folds.len(), 5, "{method}");
        assert_eq!(r.predictions.len(), 20, "{method}");
    }
    for stage in ["masks", "embeddings/synthetic", "zeroshot/synthetic", "cluster/synthetic", "train/synthetic", "eval/synthetic", "render/synthetic"] {
        assert!(a.join(stage).join("run_meta.json").exists(), "{stage}");
    }
    assert!(a.join("render/synthetic/slide_000/thumbnail.png").exists());
    assert!(a.join("render/synthetic/clusters/cluster_0.png").exists());

    let ta = tree(&a);
    assert!(ta.len() > 100);
    assert_eq!(tree_diff(&ta, &tree(&b)), Vec::<std::path::PathBuf>::new(), "rerun differs");
    assert_eq!(tree_diff(&ta, &tree(&c)), Vec::<std::path::PathBuf>::new(), "4 workers differ");
}

#[test]
fn full_fraction_of_the_curve_reproduces_training() {
    let dir = tempdir().unwrap();
    small_cohort(&dir.path().join("c"), 20, 16, 10, 8);
    let mut config = small_config();
    config["evaluation"] = serde_json::json!({"fractions_permille": [500, 1000]});
    let cfg = write_config(dir.path(), &config);
    let manifest = dir.path().join("c/manifest.csv");
    let out = dir.path().join("out");
    run_all(&manifest, &cfg, &out, "2");
    let o = pfm_env(
        &["curve", "--manifest", s(&manifest), "--config", s(&cfg), "--output", s(&out)],
        &[("PFM_WORKERS", "3")],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let read = |p: std::path::PathBuf| -> Vec<CurveRow> {
        csv::Reader::from_path(p).unwrap().deserialize().map(|r| r.unwrap()).collect()
    };
    let report = read(out.join("eval/synthetic/report.csv"));
    let curve = read(out.join("curve/synthetic/curve.csv"));
    for method in ["logreg", "abmil"] {
        let full: Vec<&CurveRow> = curve.iter().filter(|r| r.method == method && r.fraction == 1.0).collect();
        let trained: Vec<&CurveRow> = report.iter().filter(|r| r.method == method).collect();
        assert_eq!(full, trained, "{method}");
        assert_eq!(curve.iter().filter(|r| r.method == method && r.fraction == 0.5).count(), 7);
    }
    assert!(out.join("curve/synthetic/reports/abmil_0500.json").exists());
}
