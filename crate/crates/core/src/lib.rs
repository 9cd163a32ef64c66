//! Toolkit for working with pathology foundation-model embeddings.
//!
//! The crate covers the whole path from a gigapixel slide on disk to an
//! evaluation report:
//!
//! * [`slide_io`]: chunked slide access, patch grids, Otsu tissue masks and
//!   model-ready patch extraction.
//! * [`embedding`]: the embedding data model, the `PFME` file format, a
//!   deterministic synthetic embedder and the stdio provider protocol used
//!   by external model runners.
//! * [`zeroshot`]: two-stage image/text similarity grading.
//! * [`clustering`]: k-means, silhouette, per-slide cluster histograms.
//! * [`learners`]: L2 logistic regression and gated-attention MIL.
//! * [`evaluation`]: grouped cross-validation, AUROC, DeLong intervals,
//!   operating points and learning curves.
//! * [`render`]: heatmaps, cluster maps, patch mosaics and thumbnails.
//! * [`orchestrator`]: manifests, run configuration, the worker pool and
//!   the staged CLI pipeline.

pub mod clustering;
pub mod embedding;
pub mod evaluation;
pub mod learners;
pub mod orchestrator;
pub mod raster;
pub mod render;
pub mod rng;
pub mod slide_io;
pub mod synth;
pub mod zeroshot;

pub use raster::RgbRaster;
