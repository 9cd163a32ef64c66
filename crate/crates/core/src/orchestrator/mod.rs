//! Manifests, run configuration, the worker pool and the staged pipeline.
//!
//! Stages communicate only through files under the output root (see
//! [`layout`]), so any stage can be rerun on its own once its inputs exist.
//! Slide-level stages (preprocess, embed, zeroshot, render) isolate
//! failures: a slide that fails is written to `failures/<stage>.csv` and the
//! rest carry on. Output bytes never depend on the worker count.

mod analysis;
pub mod config;
mod figures;
pub mod layout;
mod manifest;
mod pool;
mod slides;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use analysis::{FoldPlans, FoldPredictions, ScoredSlide};
pub use config::{ClusterConfig, EvalConfig, LogregConfig, Method, RenderConfig, RunConfig, Stage};
pub use layout::Layout;
pub use manifest::{read_manifest, Manifest};
pub use pool::{parallel_map, parallel_map_with};

use crate::embedding::{EmbedError, PatchEmbedder, SyntheticEmbedder, ExternalProvider, FEATURE_COUNT};
use layout::ensure_parent;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("missing upstream artifact: {}", path.display())]
    MissingUpstreamArtifact { path: PathBuf },
    #[error("all {failed} slides failed in stage {stage}")]
    AllFailed { stage: String, failed: usize },
    #[error(transparent)]
    Slide(#[from] crate::slide_io::SlideError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    ZeroShot(#[from] crate::zeroshot::ZeroShotError),
    #[error(transparent)]
    Cluster(#[from] crate::clustering::ClusterError),
    #[error(transparent)]
    Learn(#[from] crate::learners::LearnError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = OrchestratorError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

impl OrchestratorError {
    /// `2` for problems with the invocation or its inputs, `3` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Usage(_)
            | OrchestratorError::Manifest(_)
            | OrchestratorError::MissingUpstreamArtifact { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

/// Where patch and prompt embeddings come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Synthetic { seed: u64 },
    /// A runner command started with `sh -c`.
    External { command: String },
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(seed) = s.strip_prefix("synthetic:") {
            let seed = seed.parse().map_err(|_| format!("invalid synthetic seed '{seed}'"))?;
            Ok(ProviderSpec::Synthetic { seed })
        } else if let Some(cmd) = s.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err("external provider needs a command".into());
            }
            Ok(ProviderSpec::External { command: cmd.to_string() })
        } else {
            Err(format!("provider '{s}' is neither synthetic:SEED nor external:CMD"))
        }
    }
}

impl std::fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderSpec::Synthetic { seed } => write!(f, "synthetic:{seed}"),
            ProviderSpec::External { command } => write!(f, "external:{command}"),
        }
    }
}

impl ProviderSpec {
    /// A fresh embedder; external runners start on first use.
    pub fn build(&self, dim: usize) -> Result<Box<dyn PatchEmbedder>> {
        Ok(match self {
            ProviderSpec::Synthetic { seed } => {
                if dim < FEATURE_COUNT {
                    return Err(OrchestratorError::Usage(format!(
                        "the synthetic provider needs embedding_dim >= {FEATURE_COUNT}"
                    )));
                }
                Box::new(SyntheticEmbedder::new(*seed, dim))
            }
            ProviderSpec::External { command } => Box::new(ExternalProvider::new(command.clone(), dim)),
        })
    }
}

/// A single pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Preprocess,
    Embed,
    Zeroshot,
    Cluster,
    Train,
    Evaluate,
    Curve,
    Render,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Embed => "embed",
            Command::Zeroshot => "zeroshot",
            Command::Cluster => "cluster",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Curve => "curve",
            Command::Render => "render",
        }
    }
}

/// Outcome of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub command: Command,
    /// Work items attempted (slides, or fold cells).
    pub items: usize,
    pub failed: usize,
}

/// Provenance written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub stage: String,
    pub config_sha256: String,
    pub manifest_sha256: String,
    pub seed: u64,
    pub model_id: String,
    pub provider: String,
    pub mask_format_version: u32,
    pub embedding_format_version: u32,
    pub package_version: String,
    /// The configuration that produced the artifacts.
    pub config: RunConfig,
}

/// A configured run over one manifest.
pub struct Pipeline {
    pub config: RunConfig,
    pub manifest: Manifest,
    pub layout: Layout,
    pub provider: ProviderSpec,
}

impl Pipeline {
    pub fn new(config: RunConfig, manifest: Manifest, provider: ProviderSpec) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.output.clone(), config.model_id.clone());
        Ok(Self {
            config,
            manifest,
            layout,
            provider,
        })
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    pub fn run(&self, command: Command) -> Result<StageReport> {
        log::info!("stage {} with {} worker(s)", command.as_str(), self.workers());
        match command {
            Command::Preprocess => slides::preprocess(self),
            Command::Embed => slides::embed(self),
            Command::Zeroshot => slides::zeroshot(self),
            Command::Cluster => analysis::cluster(self),
            Command::Train => analysis::train(self),
            Command::Evaluate => analysis::evaluate(self),
            Command::Curve => analysis::curve(self),
            Command::Render => figures::render(self),
        }
    }

    /// Commands executed by `pfm run` for a stage selection.
    pub fn commands_for(&self, stage: Stage) -> Vec<Command> {
        match stage {
            Stage::Preprocess => vec![Command::Preprocess],
            Stage::Embed => vec![Command::Embed],
            Stage::All => {
                let zs = self.config.evaluation.methods.contains(&Method::Zeroshot);
                let mut v = vec![Command::Preprocess, Command::Embed];
                if zs {
                    v.push(Command::Zeroshot);
                }
                v.extend([Command::Cluster, Command::Train, Command::Evaluate, Command::Render]);
                v
            }
        }
    }

    pub fn run_stage(&self, stage: Stage) -> Result<Vec<StageReport>> {
        self.commands_for(stage).into_iter().map(|c| self.run(c)).collect()
    }

    pub(crate) fn write_run_meta(&self, stage: Command, dir: &Path) -> Result<()> {
        let meta = RunMeta {
            stage: stage.as_str().into(),
            config_sha256: self.config.digest(),
            manifest_sha256: self.manifest.sha256.clone(),
            seed: self.config.seed,
            model_id: self.config.model_id.clone(),
            provider: self.provider.to_string(),
            mask_format_version: crate::slide_io::MASK_FORMAT_VERSION,
            embedding_format_version: crate::embedding::EMBEDDING_FORMAT_VERSION,
            package_version: env!("CARGO_PKG_VERSION").into(),
            config: self.config.clone(),
        };
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("run_meta.json"), &meta)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => OrchestratorError::MissingUpstreamArtifact { path: path.to_path_buf() },
        _ => e.into(),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Fails with the first expected path when none of `paths` exists.
pub(crate) fn require_any(paths: impl IntoIterator<Item = PathBuf>) -> Result<()> {
    let mut first = None;
    for p in paths {
        if p.exists() {
            return Ok(());
        }
        first.get_or_insert(p);
    }
    match first {
        Some(path) => Err(OrchestratorError::MissingUpstreamArtifact { path }),
        None => Ok(()),
    }
}

/// Fails with the first missing path.
pub(crate) fn require_all(paths: impl IntoIterator<Item = PathBuf>) -> Result<()> {
    for path in paths {
        if !path.exists() {
            return Err(OrchestratorError::MissingUpstreamArtifact { path });
        }
    }
    Ok(())
}

/// Writes `slide_id,error` rows (header only when nothing failed).
pub(crate) fn write_failures(path: &Path, failures: &[(String, String)]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["slide_id", "error"])?;
    for (id, e) in failures {
        w.write_record([id, e])?;
    }
    w.flush()?;
    Ok(())
}
