//! Run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::hex;
use super::{OrchestratorError, Result};
use crate::embedding::EmbeddingKind;
use crate::evaluation::OperatingTargets;
use crate::learners::{TrainConfig, DEFAULT_L2, DEFAULT_MAX_ITER};
use crate::render::Normalization;
use crate::slide_io::{Grade, DEFAULT_CHUNK_BUDGET};
use crate::zeroshot::ZeroShotConfig;

/// Which stages `pfm run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preprocess,
    Embed,
    /// Every stage except the learning curve.
    #[default]
    All,
}

/// A slide-level scoring method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Zeroshot,
    Logreg,
    Abmil,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zeroshot => "zeroshot",
            Method::Logreg => "logreg",
            Method::Abmil => "abmil",
        }
    }

    /// Whether the method has a training step.
    pub fn is_trained(self) -> bool {
        self != Method::Zeroshot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Number of clusters when `k_candidates` is empty.
    pub k: usize,
    /// When non-empty, k is chosen per fold by silhouette over these values.
    pub k_candidates: Vec<usize>,
    pub max_iter: usize,
    /// k-means++ starts per fit; the lowest-inertia fit is kept.
    pub n_init: usize,
    pub silhouette_cap: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 25,
            k_candidates: Vec::new(),
            max_iter: crate::clustering::DEFAULT_MAX_ITER,
            n_init: crate::clustering::DEFAULT_N_INIT,
            silhouette_cap: crate::clustering::DEFAULT_SILHOUETTE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogregConfig {
    pub l2: f64,
    pub max_iter: usize,
}

impl Default for LogregConfig {
    fn default() -> Self {
        Self {
            l2: DEFAULT_L2,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub positive: Vec<Grade>,
    pub negative: Vec<Grade>,
    pub methods: Vec<Method>,
    pub targets: OperatingTargets,
    /// Learning-curve training fractions in permille.
    pub fractions_permille: Vec<u32>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            positive: vec![Grade::Moderate, Grade::Poor],
            negative: vec![Grade::Well],
            methods: vec![Method::Zeroshot, Method::Logreg, Method::Abmil],
            targets: OperatingTargets::default(),
            fractions_permille: (1..=10).map(|i| i * 100).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub thumbnail_max_dim: u32,
    /// Pixels per patch in heatmaps and cluster maps.
    pub scale: u32,
    pub attention: Normalization,
    pub zeroshot: Normalization,
    /// Clusters with the highest univariate AUROC drawn red.
    pub highlight_clusters: usize,
    pub nearest_patches: usize,
    pub grid_cols: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            thumbnail_max_dim: 1024,
            scale: 8,
            attention: Normalization::MinmaxPerSlide,
            zeroshot: Normalization::Fixed { lo: -2.0, hi: 2.0 },
            highlight_clusters: 4,
            nearest_patches: 9,
            grid_cols: 3,
        }
    }
}

/// Everything that determines a run's outputs, plus the execution knobs
/// `workers`, `output` and `stage`, which are left out of the digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub patch_size: u32,
    pub target_size: u32,
    #[serde(skip_serializing)]
    pub workers: usize,
    pub seed: u64,
    pub model_id: String,
    pub embedding_dim: usize,
    pub kinds: Vec<EmbeddingKind>,
    #[serde(skip_serializing)]
    pub output: PathBuf,
    #[serde(skip_serializing)]
    pub stage: Stage,
    pub chunk_budget: usize,
    /// Patches per provider request.
    pub embed_batch: usize,
    /// L2-normalise task embeddings before clustering and MIL.
    pub normalize_task_embeddings: bool,
    pub zeroshot: ZeroShotConfig,
    pub cluster: ClusterConfig,
    pub logreg: LogregConfig,
    /// ABMIL settings; the seed is replaced per fold by one derived from
    /// the run seed.
    pub abmil: TrainConfig,
    pub evaluation: EvalConfig,
    pub render: RenderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_size: 448,
            target_size: 224,
            workers: 1,
            seed: 0,
            model_id: "synthetic".into(),
            embedding_dim: 64,
            kinds: vec![EmbeddingKind::Task, EmbeddingKind::Aligned],
            output: PathBuf::from("pfm_out"),
            stage: Stage::All,
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            embed_batch: 64,
            normalize_task_embeddings: false,
            zeroshot: ZeroShotConfig::default(),
            cluster: ClusterConfig::default(),
            logreg: LogregConfig::default(),
            abmil: TrainConfig::default(),
            evaluation: EvalConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| OrchestratorError::Usage(format!("{}: {e}", path.display())))?;
        let c: Self = serde_json::from_slice(&bytes)
            .map_err(|e| OrchestratorError::Usage(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OrchestratorError::Usage(m));
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.target_size == 0 || self.patch_size % self.target_size != 0 {
            return bad(format!(
                "target_size {} must divide patch_size {}",
                self.target_size, self.patch_size
            ));
        }
        if self.model_id.is_empty() || self.model_id.contains(['/', '\\']) {
            return bad(format!("model_id '{}' must be a plain name", self.model_id));
        }
        if self.embedding_dim == 0 || self.embed_batch == 0 {
            return bad("embedding_dim and embed_batch must be positive".into());
        }
        if self.kinds.is_empty() {
            return bad("no embedding kinds requested".into());
        }
        if self.cluster.k == 0 || self.cluster.k_candidates.contains(&0) || self.cluster.k_candidates.contains(&1) {
            return bad("cluster counts must be >= 1 (candidates >= 2)".into());
        }
        if self.cluster.n_init == 0 {
            return bad("cluster.n_init must be >= 1".into());
        }
        let s = &self.abmil.schedule;
        if !(s.lr_min >= 0.0 && s.lr_min <= s.lr_max) || s.half_cycle == 0 {
            return bad("abmil schedule needs 0 <= lr_min <= lr_max and half_cycle >= 1".into());
        }
        if let Some(p) = self.evaluation.fractions_permille.iter().find(|&&p| p == 0 || p > 1000) {
            return bad(format!("learning-curve fraction {p} permille outside (0, 1000]"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        use sha2::Digest;
        hex(&sha2::Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }

    pub fn has_kind(&self, kind: EmbeddingKind) -> bool {
        self.kinds.contains(&kind)
    }
}
