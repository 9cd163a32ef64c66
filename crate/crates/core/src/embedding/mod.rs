//! Patch and text embeddings.
//!
//! Two embedding kinds are first-class: `task` embeddings feed clustering and
//! MIL training, `aligned` embeddings share a space with text prompts and are
//! used for zero-shot grading. Aligned rows are stored L2-normalised; task
//! rows are stored as produced.
//!
//! Storage is `f32`; callers that do arithmetic convert rows to `f64`.

mod file;
mod provider;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::raster::RgbRaster;

pub use file::{read_embeddings, sidecar_path, write_embeddings, EMBEDDING_FORMAT_VERSION};
pub use provider::{echo_digest, ExternalProvider, PROTOCOL_MAGIC};
pub use synthetic::{synthetic_embed, synthetic_embed_text, SyntheticEmbedder, FEATURE_COUNT};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("bad magic bytes in embedding file")]
    BadMagic,
    #[error("embedding payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("sidecar lists {coords} coords but the header declares {rows} rows")]
    SidecarMismatch { coords: usize, rows: usize },
    #[error("invalid embedding header: {0}")]
    InvalidHeader(String),
    #[error("embedding contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("expected {expected} embeddings, got {got}")]
    KindMismatch { expected: EmbeddingKind, got: EmbeddingKind },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot normalise a zero vector")]
    ZeroVector,
    #[error("provider protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("embedding runner exited unexpectedly: {0}")]
    RunnerCrashed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EmbedError> = std::result::Result<T, E>;

/// Which model head produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// Optimised for downstream learning (clustering, MIL).
    Task,
    /// Aligned with a language encoder (zero-shot).
    Aligned,
}

impl EmbeddingKind {
    pub fn as_byte(self) -> u8 {
        match self {
            EmbeddingKind::Task => 0,
            EmbeddingKind::Aligned => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EmbeddingKind::Task),
            1 => Some(EmbeddingKind::Aligned),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Task => "task",
            EmbeddingKind::Aligned => "aligned",
        }
    }
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "task" => Ok(EmbeddingKind::Task),
            "aligned" => Ok(EmbeddingKind::Aligned),
            other => Err(format!("unknown embedding kind '{other}'")),
        }
    }
}

/// `n × dim` patch embeddings of one slide, row `i` belonging to `coords[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub slide_id: String,
    pub model_id: String,
    pub kind: EmbeddingKind,
    pub dim: usize,
    data: Vec<f32>,
    pub coords: Vec<(u32, u32)>,
}

impl EmbeddingMatrix {
    pub fn new(
        slide_id: impl Into<String>,
        model_id: impl Into<String>,
        kind: EmbeddingKind,
        dim: usize,
        data: Vec<f32>,
        coords: Vec<(u32, u32)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::InvalidHeader("dim must be positive".into()));
        }
        if data.len() != dim * coords.len() {
            return Err(EmbedError::SidecarMismatch {
                coords: coords.len(),
                rows: data.len() / dim,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(Self {
            slide_id: slide_id.into(),
            model_id: model_id.into(),
            kind,
            dim,
            data,
            coords,
        })
    }

    /// Builds a matrix from per-row vectors.
    pub fn from_rows(
        slide_id: impl Into<String>,
        model_id: impl Into<String>,
        kind: EmbeddingKind,
        dim: usize,
        rows: &[Vec<f32>],
        coords: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(slide_id, model_id, kind, dim, data, coords)
    }

    pub fn n_rows(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// All rows widened to `f64`.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn expect_kind(&self, kind: EmbeddingKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(EmbedError::KindMismatch {
                expected: kind,
                got: self.kind,
            })
        }
    }
}

/// A prompt embedding from a model's language encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub prompt: String,
    pub model_id: String,
    pub vector: Vec<f32>,
}

impl TextEmbedding {
    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

/// Something that turns model-ready patches (and prompts) into vectors.
pub trait PatchEmbedder {
    fn dim(&self) -> usize;

    /// One vector per patch, in input order.
    fn embed_batch(&mut self, patches: &[RgbRaster], kind: EmbeddingKind) -> Result<Vec<Vec<f32>>>;

    fn embed_text(&mut self, prompt: &str) -> Result<Vec<f32>>;
}

/// Returns `v / ‖v‖₂`.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}
