//! Deterministic stand-in for a foundation model.
//!
//! Components `0..8` are hand-crafted image statistics scaled to `[-1, 1]`:
//!
//! | idx | feature | scaling |
//! |-----|---------|---------|
//! | 0-2 | mean R, G, B | `m / 127.5 - 1` |
//! | 3 | mean luma | `m / 127.5 - 1` |
//! | 4 | luma variance (population) | `2 v / 127.5² - 1` |
//! | 5 | mean \|ΔL\| between horizontal neighbours | `g / 127.5 - 1` |
//! | 6 | same, vertical neighbours | `g / 127.5 - 1` |
//! | 7 | fraction of neighbour pairs with \|ΔL\| > 32 | `2 f - 1` |
//!
//! Components `8..` are uniform noise in `±NOISE_AMPLITUDE` drawn from a
//! ChaCha stream keyed by `sha256(seed ‖ kind ‖ sha256(patch))`, so they
//! depend on nothing but the patch content, the seed and the kind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbeddingKind, PatchEmbedder, Result};
use crate::raster::RgbRaster;
use crate::synth::{texture_patch, CellKind};

pub const FEATURE_COUNT: usize = 8;
const NOISE_AMPLITUDE: f64 = 0.25;
const EDGE_THRESHOLD_MILLI: u64 = 32_000;
const MAX_VARIANCE: f64 = 127.5 * 127.5;
/// Size of the prototype patches behind synthetic text embeddings.
const PROMPT_PATCH_SIZE: u32 = 32;
const PROMPT_NOISE: f64 = 0.05;
const PROTOTYPE_SEED: u64 = 0x7E47_0001;

fn luma_milli(px: &[u8]) -> u64 {
    299 * px[0] as u64 + 587 * px[1] as u64 + 114 * px[2] as u64
}

fn image_features(patch: &RgbRaster) -> [f64; FEATURE_COUNT] {
    let (w, h) = (patch.width() as usize, patch.height() as usize);
    let n = (w * h) as f64;
    let mut rgb = [0u64; 3];
    let luma: Vec<u64> = patch
        .as_bytes()
        .chunks_exact(3)
        .map(|px| {
            for c in 0..3 {
                rgb[c] += px[c] as u64;
            }
            luma_milli(px)
        })
        .collect();
    if luma.is_empty() {
        return [-1.0; FEATURE_COUNT];
    }
    let luma_sum: u64 = luma.iter().sum();
    let mean = luma_sum as f64 / (1000.0 * n);
    let var = luma
        .iter()
        .map(|&l| {
            let d = l as f64 / 1000.0 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let (mut gx, mut gy, mut edges) = (0u64, 0u64, 0u64);
    for y in 0..h {
        for x in 0..w {
            let l = luma[y * w + x];
            if x + 1 < w {
                let d = l.abs_diff(luma[y * w + x + 1]);
                gx += d;
                edges += (d > EDGE_THRESHOLD_MILLI) as u64;
            }
            if y + 1 < h {
                let d = l.abs_diff(luma[(y + 1) * w + x]);
                gy += d;
                edges += (d > EDGE_THRESHOLD_MILLI) as u64;
            }
        }
    }
    let nx = ((w - 1) * h) as f64;
    let ny = (w * (h - 1)) as f64;
    let mean_grad = |g: u64, pairs: f64| if pairs > 0.0 { g as f64 / (1000.0 * pairs) } else { 0.0 };
    let edge_frac = if nx + ny > 0.0 { edges as f64 / (nx + ny) } else { 0.0 };
    [
        rgb[0] as f64 / n / 127.5 - 1.0,
        rgb[1] as f64 / n / 127.5 - 1.0,
        rgb[2] as f64 / n / 127.5 - 1.0,
        mean / 127.5 - 1.0,
        2.0 * var / MAX_VARIANCE - 1.0,
        mean_grad(gx, nx) / 127.5 - 1.0,
        mean_grad(gy, ny) / 127.5 - 1.0,
        2.0 * edge_frac - 1.0,
    ]
}

fn noise_rng(key: &[u8]) -> ChaCha8Rng {
    let digest: [u8; 32] = Sha256::digest(key).into();
    ChaCha8Rng::from_seed(digest)
}

fn patch_digest(patch: &RgbRaster) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(patch.width().to_le_bytes());
    h.update(patch.height().to_le_bytes());
    h.update(patch.as_bytes());
    h.finalize().into()
}

fn normalize_or_axis(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    }
}

fn synthetic_embed_f64(patch: &RgbRaster, seed: u64, dim: usize, kind: EmbeddingKind) -> Vec<f64> {
    assert!(dim >= FEATURE_COUNT, "synthetic embeddings need dim >= {FEATURE_COUNT}");
    let mut v = Vec::with_capacity(dim);
    v.extend_from_slice(&image_features(patch));
    if dim > FEATURE_COUNT {
        let mut key = Vec::with_capacity(41);
        key.extend_from_slice(&seed.to_le_bytes());
        key.push(kind.as_byte());
        key.extend_from_slice(&patch_digest(patch));
        let mut rng = noise_rng(&key);
        v.extend((FEATURE_COUNT..dim).map(|_| NOISE_AMPLITUDE * rng.random_range(-1.0..1.0)));
    }
    if kind == EmbeddingKind::Aligned {
        normalize_or_axis(&mut v);
    }
    v
}

/// Embeds one patch. Pure in `(patch pixels, seed, dim, kind)`.
///
/// # Panics
///
/// If `dim < 8`.
pub fn synthetic_embed(patch: &RgbRaster, seed: u64, dim: usize, kind: EmbeddingKind) -> Vec<f32> {
    synthetic_embed_f64(patch, seed, dim, kind)
        .into_iter()
        .map(|x| x as f32)
        .collect()
}

/// Texture a prompt describes, by keyword. Checked in order, so
/// "non-neoplastic" wins over "neoplastic" and grade words over "carcinoma".
fn prompt_prototype(prompt: &str) -> Option<CellKind> {
    let p = prompt.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| p.contains(w));
    if has(&["non-neoplastic", "non neoplastic", "normal", "benign", "healthy"]) {
        Some(CellKind::Stroma)
    } else if has(&["poor", "high grade", "high-grade", "undifferentiated"]) {
        Some(CellKind::Signature)
    } else if has(&["well", "low grade", "low-grade"]) {
        Some(CellKind::Nuclei)
    } else if has(&["carcinoma", "cancer", "tumor", "tumour", "malignant", "neoplastic"]) {
        Some(CellKind::Signature)
    } else {
        None
    }
}

/// Text embedding of the synthetic model's "language encoder".
///
/// Prompts naming a tissue class map to the aligned embedding of a canonical
/// texture for that class, nudged by a small prompt-specific perturbation so
/// that paraphrases differ. Other prompts map to a pseudo-random direction.
/// The result is unit length.
pub fn synthetic_embed_text(prompt: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut key = b"prompt:".to_vec();
    key.extend_from_slice(&seed.to_le_bytes());
    key.extend_from_slice(prompt.as_bytes());
    let mut rng = noise_rng(&key);
    let mut v = match prompt_prototype(prompt) {
        Some(kind) => {
            let proto = texture_patch(kind, PROMPT_PATCH_SIZE, PROTOTYPE_SEED, 0, 0);
            let mut v = synthetic_embed_f64(&proto, seed, dim, EmbeddingKind::Aligned);
            v.iter_mut()
                .for_each(|x| *x += PROMPT_NOISE * rng.random_range(-1.0..1.0));
            v
        }
        None => (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    normalize_or_axis(&mut v);
    v.into_iter().map(|x| x as f32).collect()
}

/// [`PatchEmbedder`] backed by [`synthetic_embed`].
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl SyntheticEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= FEATURE_COUNT, "synthetic embeddings need dim >= {FEATURE_COUNT}");
        Self { seed, dim }
    }
}

impl PatchEmbedder for SyntheticEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&mut self, patches: &[RgbRaster], kind: EmbeddingKind) -> Result<Vec<Vec<f32>>> {
        Ok(patches
            .iter()
            .map(|p| synthetic_embed(p, self.seed, self.dim, kind))
            .collect())
    }

    fn embed_text(&mut self, prompt: &str) -> Result<Vec<f32>> {
        Ok(synthetic_embed_text(prompt, self.seed, self.dim))
    }
}
