//! Helpers shared by the CLI and acceptance test targets.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pfm_core::synth::{generate_cohort, CohortSpec, SyntheticSlide};

pub const PFM: &str = env!("CARGO_BIN_EXE_pfm");
pub const ECHO_RUNNER: &str = env!("CARGO_BIN_EXE_pfm-echo-runner");

/// A small cohort: `grid × grid` cells of 32 px with 2–4 planted cells in
/// each positive slide.
pub fn small_cohort(dir: &Path, n_slides: usize, n_patients: usize, n_positive: usize, grid: u32) -> Vec<SyntheticSlide> {
    let spec = CohortSpec {
        n_slides,
        n_patients,
        n_positive,
        grid,
        patch_size: 32,
        planted: (2, 4),
        seed: 99,
    };
    generate_cohort(dir, &spec).unwrap()
}

/// Writes a config JSON and returns its path.
pub fn write_config(dir: &Path, json: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(json).unwrap()).unwrap();
    path
}

/// Config for the 32 px cohorts: 32 px patches reduced to 16 px, small
/// models, few epochs.
pub fn small_config() -> serde_json::Value {
    serde_json::json!({
        "patch_size": 32,
        "target_size": 16,
        "embedding_dim": 16,
        "seed": 5,
        "cluster": {"k": 6},
        "abmil": {"attention_hidden": 16, "max_epochs": 6, "patience": 3},
        "render": {"thumbnail_max_dim": 64, "scale": 2, "nearest_patches": 4}
    })
}

pub fn pfm(args: &[&str]) -> Output {
    pfm_env(args, &[])
}

pub fn pfm_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(PFM);
    cmd.args(args).env_remove("PFM_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("pfm runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `root`, relative path to contents.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Paths whose bytes differ between two trees, plus paths present in only
/// one of them.
pub fn tree_diff(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let mut diff: Vec<PathBuf> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect();
    diff.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    diff
}
