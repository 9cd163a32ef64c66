//! On-disk artifact layout under the output root.
//!
//! ```text
//! masks/<slide>.json                         tissue masks, status.csv
//! embeddings/<model>/<kind>/<slide>.pfme     + .pfme.json sidecars
//! zeroshot/<model>/scores.csv                + text_embeddings.json
//! folds/<model>/plans.json                   fold plans with and without validation
//! cluster/<model>/fold_<f>/                  model.bin, histograms.json, assignments.csv
//! cluster/<model>/pooled/                    the same over every labelled slide
//! train/<model>/<method>/fold_<f>/           predictions.json, model.bin, history.csv
//! eval/<model>/<method>.json                 + report.csv
//! curve/<model>/curve.csv                    + reports/<method>_<permille>.json
//! render/<model>/<slide>/*.png               + clusters/cluster_<j>.png
//! failures/<stage>.csv
//! ```
//!
//! Every stage directory also receives a `run_meta.json`.

use std::path::{Path, PathBuf};

use super::config::Method;
use crate::embedding::EmbeddingKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
    pub model_id: String,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            model_id: model_id.into(),
        }
    }

    fn model_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage).join(&self.model_id)
    }

    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("masks")
    }

    pub fn mask(&self, slide: &str) -> PathBuf {
        self.masks_dir().join(format!("{slide}.json"))
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.model_dir("embeddings")
    }

    pub fn embedding(&self, kind: EmbeddingKind, slide: &str) -> PathBuf {
        self.embeddings_dir().join(kind.as_str()).join(format!("{slide}.pfme"))
    }

    pub fn zeroshot_dir(&self) -> PathBuf {
        self.model_dir("zeroshot")
    }

    pub fn zeroshot_scores(&self) -> PathBuf {
        self.zeroshot_dir().join("scores.csv")
    }

    pub fn text_embeddings(&self) -> PathBuf {
        self.zeroshot_dir().join("text_embeddings.json")
    }

    pub fn folds_dir(&self) -> PathBuf {
        self.model_dir("folds")
    }

    pub fn fold_plans(&self) -> PathBuf {
        self.folds_dir().join("plans.json")
    }

    pub fn cluster_root(&self) -> PathBuf {
        self.model_dir("cluster")
    }

    pub fn cluster_fold(&self, fold: usize) -> PathBuf {
        self.cluster_root().join(format!("fold_{fold}"))
    }

    pub fn cluster_pooled(&self) -> PathBuf {
        self.cluster_root().join("pooled")
    }

    pub fn train_root(&self) -> PathBuf {
        self.model_dir("train")
    }

    pub fn train_fold(&self, method: Method, fold: usize) -> PathBuf {
        self.train_root().join(method.as_str()).join(format!("fold_{fold}"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.model_dir("eval")
    }

    pub fn eval_report(&self, method: Method) -> PathBuf {
        self.eval_dir().join(format!("{}.json", method.as_str()))
    }

    pub fn curve_dir(&self) -> PathBuf {
        self.model_dir("curve")
    }

    pub fn render_dir(&self) -> PathBuf {
        self.model_dir("render")
    }

    pub fn render_slide(&self, slide: &str) -> PathBuf {
        self.render_dir().join(slide)
    }

    pub fn failures(&self, stage: &str) -> PathBuf {
        self.root.join("failures").join(format!("{stage}.csv"))
    }
}

/// Creates the parent directory of `path` if needed.
pub(crate) fn ensure_parent(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p),
        _ => Ok(()),
    }
}
