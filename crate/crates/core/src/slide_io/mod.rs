//! Slide access, patch grids and tissue segmentation.
//!
//! A [`SlideHandle`] reads rectangular regions of a PNG or TIFF slide through
//! a bounded chunk cache, so a gigapixel image is never decoded in full. On
//! top of it sit the patch grid, the Otsu tissue mask computed from per-patch
//! mean grayscale, and extraction of block-averaged, model-ready patches.

mod grid;
mod handle;
mod patch;
mod tissue;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use grid::{compute_patch_grid, PatchGrid};
pub use handle::{open_slide, open_slide_with_budget, SlideHandle, DEFAULT_CHUNK_BUDGET};
pub use patch::{downsample_block_mean, extract_patch};
pub(crate) use patch::round_half_even;
pub use tissue::{mean_gray, otsu_threshold, segment_tissue, TissueMask, MASK_FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum SlideError {
    #[error("slide file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("region ({x}, {y}) {w}x{h} lies outside the {width}x{height} slide")]
    OutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
    #[error("chunk of {needed} bytes exceeds the {budget}-byte chunk budget")]
    ChunkTooLarge { needed: usize, budget: usize },
    #[error("all values fall into a single histogram bin")]
    DegenerateDistribution,
    #[error("gray value {0} is outside [0, 255]")]
    InvalidGrayValue(f64),
    #[error("invalid patch geometry: {0}")]
    InvalidGeometry(String),
    #[error("patch grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SlideError> = std::result::Result<T, E>;

/// Histological grade label of a slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Well,
    Moderate,
    Poor,
    Unknown,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Well => "well",
            Grade::Moderate => "moderate",
            Grade::Poor => "poor",
            Grade::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grade {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "well" => Ok(Grade::Well),
            "moderate" => Ok(Grade::Moderate),
            "poor" => Ok(Grade::Poor),
            "unknown" => Ok(Grade::Unknown),
            other => Err(format!("unknown grade '{other}'")),
        }
    }
}

/// One slide of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideRecord {
    pub slide_id: String,
    pub patient_id: String,
    pub grade: Grade,
    pub image_path: PathBuf,
    /// Nominal scan magnification; metadata only.
    pub base_magnification: f64,
}

impl SlideRecord {
    /// Whether the slide carries a label usable for training or evaluation.
    pub fn is_labeled(&self) -> bool {
        self.grade != Grade::Unknown
    }
}
