use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PatchGrid, Result, SlideError, SlideHandle};
use crate::raster::RgbRaster;

pub const MASK_FORMAT_VERSION: u32 = 1;

/// BT.601 luma weights scaled by 1000 so sums stay exact integers.
const LUMA_MILLI: [u64; 3] = [299, 587, 114];

#[inline]
fn luma_milli(px: &[u8]) -> u64 {
    LUMA_MILLI[0] * px[0] as u64 + LUMA_MILLI[1] * px[1] as u64 + LUMA_MILLI[2] * px[2] as u64
}

/// Mean BT.601 luma (0.299 R + 0.587 G + 0.114 B) over all pixels, in [0, 255].
///
/// The sum is accumulated exactly in integers, so the result does not depend
/// on pixel order. An empty raster yields 0.
pub fn mean_gray(patch: &RgbRaster) -> f64 {
    let n = patch.width() as u64 * patch.height() as u64;
    if n == 0 {
        return 0.0;
    }
    let sum: u64 = patch.as_bytes().chunks_exact(3).map(luma_milli).sum();
    sum as f64 / (1000 * n) as f64
}

/// Between-class separation of a split, kept as an exact fraction
/// `num / den` with `num = (n1·S0 − n0·S1)²` and `den = n0·n1`.
///
/// Between-class variance equals `num / (den · N²)`, and N is fixed for one
/// histogram, so comparing these fractions ranks candidate thresholds.
#[derive(Clone, Copy)]
struct Separation {
    quot: u128,
    rem: u128,
    den: u128,
}

impl Separation {
    const ZERO: Self = Self {
        quot: 0,
        rem: 0,
        den: 1,
    };

    fn new(n0: u128, n1: u128, s0: u128, s1: u128) -> Self {
        if n0 == 0 || n1 == 0 {
            return Self::ZERO;
        }
        let d = (n1 * s0).abs_diff(n0 * s1);
        let num = d * d;
        let den = n0 * n1;
        Self {
            quot: num / den,
            rem: num % den,
            den,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.quot
            .cmp(&other.quot)
            .then_with(|| (self.rem * other.den).cmp(&(other.rem * self.den)))
    }
}

/// Bin of a gray value: bin 0 holds exactly 0, bin `i > 0` holds `(i-1, i]`.
///
/// With this binning "bin ≤ t" and "value ≤ t" coincide for every integer
/// `t`, so the returned threshold can be applied to raw values directly.
fn gray_bin(v: f64) -> Result<usize> {
    if !v.is_finite() || !(0.0..=255.0).contains(&v) {
        return Err(SlideError::InvalidGrayValue(v));
    }
    Ok(v.ceil() as usize)
}

/// Otsu threshold over a 256-bin histogram of values in `[0, 255]`.
///
/// Returns the integer threshold `t` maximising between-class variance of
/// the split `{v ≤ t} | {v > t}`; ties go to the smaller `t`. Candidate
/// scores are compared exactly, so the result is reproducible from the
/// value multiset alone.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    let mut hist = [0u64; 256];
    for &v in values {
        hist[gray_bin(v)?] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(SlideError::DegenerateDistribution);
    }
    let total_n: u128 = values.len() as u128;
    let total_s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best = Separation::ZERO;
    let mut best_t = 0usize;
    for (t, &c) in hist.iter().enumerate() {
        n0 += c as u128;
        s0 += t as u128 * c as u128;
        let sep = Separation::new(n0, total_n - n0, s0, total_s - s0);
        if sep.cmp(&best) == Ordering::Greater {
            best = sep;
            best_t = t;
        }
    }
    Ok(best_t as f64)
}

/// Per-patch tissue decision for one slide.
///
/// `keep[i]` is `mean_gray[i] <= threshold`: tissue is darker than the
/// bright scan background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueMask {
    pub format_version: u32,
    pub slide_id: String,
    pub patch_size: u32,
    pub target_size: u32,
    pub slide_width: u32,
    pub slide_height: u32,
    pub threshold: f64,
    /// Set when Otsu could not split the distribution; every patch is kept.
    pub degenerate: bool,
    pub coords: Vec<[u32; 2]>,
    pub mean_gray: Vec<f64>,
    pub keep: Vec<bool>,
}

impl TissueMask {
    /// Applies Otsu to per-patch means; falls back to keeping everything.
    pub fn from_mean_gray(grid: &PatchGrid, mean_gray: Vec<f64>) -> Result<Self> {
        assert_eq!(grid.len(), mean_gray.len(), "one mean per grid patch");
        let (threshold, degenerate) = match otsu_threshold(&mean_gray) {
            Ok(t) => (t, false),
            Err(SlideError::DegenerateDistribution) => {
                log::warn!("degenerate gray distribution, keeping all patches");
                (255.0, true)
            }
            Err(e) => return Err(e),
        };
        let keep = mean_gray.iter().map(|&m| m <= threshold).collect();
        Ok(Self {
            format_version: MASK_FORMAT_VERSION,
            slide_id: String::new(),
            patch_size: grid.patch_size,
            target_size: grid.target_size,
            slide_width: grid.slide_width,
            slide_height: grid.slide_height,
            threshold,
            degenerate,
            coords: grid.coords.iter().map(|&(x, y)| [x, y]).collect(),
            mean_gray,
            keep,
        })
    }

    pub fn with_slide_id(mut self, id: impl Into<String>) -> Self {
        self.slide_id = id.into();
        self
    }

    /// Rebuilds the grid the mask was computed on.
    pub fn grid(&self) -> PatchGrid {
        PatchGrid::new(self.slide_width, self.slide_height, self.patch_size, self.target_size)
            .expect("mask geometry was validated when the grid was built")
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }

    pub fn kept_coords(&self) -> Vec<(u32, u32)> {
        self.kept_indices()
            .into_iter()
            .map(|i| (self.coords[i][0], self.coords[i][1]))
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, bytes)
    }

    pub fn read_json(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Computes per-patch mean gray through band reads and applies Otsu.
///
/// Each band is one patch row tall, so only one row of patches (plus the
/// handle's chunk cache) is resident at a time.
pub fn segment_tissue(handle: &mut SlideHandle, grid: &PatchGrid) -> Result<TissueMask> {
    if grid.is_empty() {
        return Err(SlideError::EmptyGrid);
    }
    let ps = grid.patch_size;
    let band_width = grid.cols * ps;
    let pixels_per_patch = (ps as u64 * ps as u64) * 1000;
    let mut means = Vec::with_capacity(grid.len());
    let mut sums = vec![0u64; grid.cols as usize];
    for r in 0..grid.rows {
        let band = handle.read_region(0, r * ps, band_width, ps)?;
        sums.iter_mut().for_each(|s| *s = 0);
        for y in 0..ps {
            let row = band.row(y);
            for (c, sum) in sums.iter_mut().enumerate() {
                let px = &row[c * ps as usize * 3..(c + 1) * ps as usize * 3];
                *sum += px.chunks_exact(3).map(luma_milli).sum::<u64>();
            }
        }
        means.extend(sums.iter().map(|&s| s as f64 / pixels_per_patch as f64));
    }
    TissueMask::from_mean_gray(grid, means)
}
