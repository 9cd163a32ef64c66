//! Image artifacts: heatmaps, cluster maps, patch mosaics and thumbnails.
//!
//! Every function is pure and returns an [`RgbRaster`]; encode it with
//! [`RgbRaster::to_png`], whose encoder settings are fixed so identical
//! inputs always give identical PNG bytes.

#[rustfmt::skip]
mod colormap;

use serde::{Deserialize, Serialize};

use crate::raster::RgbRaster;
use crate::slide_io::{round_half_even, SlideError, SlideHandle, TissueMask};

pub use colormap::RAMP;

pub const BACKGROUND: [u8; 3] = [0, 0, 0];
pub const EXCLUDED: [u8; 3] = [128, 128, 128];
pub const HIGHLIGHT: [u8; 3] = [220, 20, 20];
pub const GUTTER: [u8; 3] = [255, 255, 255];
pub const GUTTER_WIDTH: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Slide(#[from] SlideError),
}

pub type Result<T, E = RenderError> = std::result::Result<T, E>;

/// How heatmap values are mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Per-slide min-max over the values present.
    #[default]
    MinmaxPerSlide,
    /// A fixed range shared across slides; values outside are clamped.
    Fixed { lo: f64, hi: f64 },
}

/// Rendering options shared by all heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OverlayStyle {
    pub normalization: Normalization,
}

/// Ramp colour at `t ∈ [0, 1]` (clamped); NaN maps to the midpoint.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.5 } else { t.clamp(0.0, 1.0) };
    RAMP[(t * 255.0).round() as usize]
}

/// Maps values onto `[0, 1]`. A constant field (or an empty range) maps to 0.5.
pub fn normalize(values: &[f64], norm: Normalization) -> Vec<f64> {
    let (lo, hi) = match norm {
        Normalization::MinmaxPerSlide => values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        Normalization::Fixed { lo, hi } => (lo, hi),
    };
    values
        .iter()
        .map(|&v| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 })
        .collect()
}

/// Paints one `scale × scale` cell per grid patch, coloured by `paint` for
/// kept patches (indexed in kept order) and black elsewhere.
fn paint_grid(mask: &TissueMask, scale: u32, mut paint: impl FnMut(usize) -> [u8; 3]) -> Result<RgbRaster> {
    if scale == 0 {
        return Err(RenderError::InvalidArgument("scale must be >= 1".into()));
    }
    let grid = mask.grid();
    let mut img = RgbRaster::filled(grid.cols * scale, grid.rows * scale, BACKGROUND);
    let mut kept = 0;
    for (i, &(x, y)) in grid.coords.iter().enumerate() {
        if !mask.keep[i] {
            continue;
        }
        let (c, r) = grid.cell_of((x, y));
        img.fill_rect(c * scale, r * scale, scale, scale, paint(kept));
        kept += 1;
    }
    Ok(img)
}

/// Heatmap over the kept patches of a slide.
///
/// `values` holds one entry per kept patch in row-major order; `None` marks
/// tissue outside the scored subset, drawn gray. Background is black.
/// Normalisation only sees the `Some` values.
pub fn render_heatmap(mask: &TissueMask, values: &[Option<f64>], style: &OverlayStyle, scale: u32) -> Result<RgbRaster> {
    let expected = mask.kept_count();
    if values.len() != expected {
        return Err(RenderError::LengthMismatch {
            expected,
            got: values.len(),
        });
    }
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let mut normalized = normalize(&present, style.normalization).into_iter();
    let colors: Vec<[u8; 3]> = values
        .iter()
        .map(|v| match v {
            Some(_) => colormap(normalized.next().expect("one normalised value per present value")),
            None => EXCLUDED,
        })
        .collect();
    paint_grid(mask, scale, |k| colors[k])
}

/// Cluster map: kept patches whose label is in `highlight` are red, other
/// tissue gray, background black.
pub fn render_cluster_map(mask: &TissueMask, labels: &[usize], highlight: &[usize], scale: u32) -> Result<RgbRaster> {
    let expected = mask.kept_count();
    if labels.len() != expected {
        return Err(RenderError::LengthMismatch {
            expected,
            got: labels.len(),
        });
    }
    paint_grid(mask, scale, |k| {
        if highlight.contains(&labels[k]) {
            HIGHLIGHT
        } else {
            EXCLUDED
        }
    })
}

/// Tiles patches row-major into `⌈m / cols⌉` rows separated by 2-px white
/// gutters. Cells take the size of the largest patch; smaller patches and
/// unused cells in the last row stay white.
pub fn render_patch_grid(patches: &[RgbRaster], cols: u32) -> Result<RgbRaster> {
    if patches.is_empty() || cols == 0 {
        return Err(RenderError::InvalidArgument("need at least one patch and one column".into()));
    }
    let cols = cols.min(patches.len() as u32);
    let rows = (patches.len() as u32).div_ceil(cols);
    let cw = patches.iter().map(|p| p.width()).max().unwrap_or(0);
    let ch = patches.iter().map(|p| p.height()).max().unwrap_or(0);
    let mut img = RgbRaster::filled(
        cols * cw + (cols - 1) * GUTTER_WIDTH,
        rows * ch + (rows - 1) * GUTTER_WIDTH,
        GUTTER,
    );
    for (i, p) in patches.iter().enumerate() {
        let (c, r) = (i as u32 % cols, i as u32 / cols);
        img.blit(p, c * (cw + GUTTER_WIDTH), r * (ch + GUTTER_WIDTH));
    }
    Ok(img)
}

/// Downscale factor that brings `max(width, height)` to at most `max_dim`.
pub fn thumbnail_factor(width: u32, height: u32, max_dim: u32) -> u32 {
    width.max(height).div_ceil(max_dim).max(1)
}

/// Block-averaged thumbnail read band by band through the slide handle.
///
/// With factor `f = ⌈max(W, H) / max_dim⌉` the output is `⌈W/f⌉ × ⌈H/f⌉`.
/// Blocks at the right and bottom edges average only their in-bounds
/// pixels, so a constant slide gives a constant thumbnail.
pub fn render_thumbnail(handle: &mut SlideHandle, max_dim: u32) -> Result<RgbRaster> {
    if max_dim < 16 {
        return Err(RenderError::InvalidArgument(format!("max_dim {max_dim} is below 16")));
    }
    let (w, h) = handle.dimensions();
    let f = thumbnail_factor(w, h, max_dim);
    let (tw, th) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = RgbRaster::new(tw, th);
    let mut acc = vec![[0u64; 3]; tw as usize];
    for ty in 0..th {
        let y0 = ty * f;
        let bh = f.min(h - y0);
        let band = handle.read_region(0, y0, w, bh)?;
        acc.iter_mut().for_each(|a| *a = [0; 3]);
        for y in 0..bh {
            for (x, px) in band.row(y).chunks_exact(3).enumerate() {
                let a = &mut acc[x / f as usize];
                a[0] += px[0] as u64;
                a[1] += px[1] as u64;
                a[2] += px[2] as u64;
            }
        }
        for tx in 0..tw {
            let bw = f.min(w - tx * f);
            let n = (bw * bh) as u64;
            let a = acc[tx as usize];
            out.put(
                tx,
                ty,
                [
                    round_half_even(a[0], n),
                    round_half_even(a[1], n),
                    round_half_even(a[2], n),
                ],
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide_io::{open_slide, PatchGrid};
    use crate::synth::{checkerboard, write_png};
    use proptest::prelude::*;

    /// 4×3 grid of 8-px patches with the listed cells excluded.
    fn mask(excluded: &[usize]) -> TissueMask {
        let grid = PatchGrid::new(32, 24, 8, 8).unwrap();
        let gray = (0..grid.len()).map(|i| if excluded.contains(&i) { 250.0 } else { 100.0 }).collect();
        let m = TissueMask::from_mean_gray(&grid, gray).unwrap();
        assert_eq!(m.kept_count(), grid.len() - excluded.len());
        m
    }

    #[test]
    fn ramp_is_monotone() {
        assert!(RAMP.windows(2).all(|w| w[1][0] >= w[0][0] && w[1][2] <= w[0][2]));
        assert_eq!(RAMP[0], [0, 0, 255]);
        assert_eq!(RAMP[255], [255, 0, 0]);
    }

    #[test]
    fn constant_field_is_mid_ramp() {
        let m = mask(&[0, 5]);
        let vals = vec![Some(0.3); m.kept_count()];
        let img = render_heatmap(&m, &vals, &OverlayStyle::default(), 4).unwrap();
        assert_eq!((img.width(), img.height()), (16, 12));
        assert_eq!(img.get(0, 0), BACKGROUND);
        assert_eq!(img.get(5, 1), colormap(0.5));
        assert_eq!(img.get(15, 11), colormap(0.5));
    }

    #[test]
    fn two_values_hit_the_ramp_ends() {
        let m = mask(&[]);
        let vals: Vec<Option<f64>> = (0..12).map(|i| Some((i % 2) as f64)).collect();
        let img = render_heatmap(&m, &vals, &OverlayStyle::default(), 3).unwrap();
        assert_eq!(img.get(1, 1), RAMP[0]);
        assert_eq!(img.get(4, 1), RAMP[255]);
    }

    #[test]
    fn unscored_tissue_is_gray() {
        let m = mask(&[11]);
        let mut vals: Vec<Option<f64>> = (0..11).map(|i| Some(i as f64)).collect();
        vals[2] = None;
        let img = render_heatmap(&m, &vals, &OverlayStyle::default(), 1).unwrap();
        assert_eq!(img.get(2, 0), EXCLUDED);
        assert_eq!(img.get(3, 2), BACKGROUND);
        assert_eq!(img.get(0, 0), RAMP[0]);
        assert_eq!(img.get(2, 2), RAMP[255]);
    }

    #[test]
    fn heatmap_checks_length() {
        let m = mask(&[1]);
        assert!(matches!(
            render_heatmap(&m, &[Some(1.0)], &OverlayStyle::default(), 1),
            Err(RenderError::LengthMismatch { expected: 11, got: 1 })
        ));
    }

    #[test]
    fn fixed_range_clamps() {
        let n = normalize(&[-5.0, 0.0, 1.0, 5.0], Normalization::Fixed { lo: -2.0, hi: 2.0 });
        assert_eq!(n, vec![0.0, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn cluster_map_highlights() {
        let m = mask(&[4]);
        let labels: Vec<usize> = (0..11).map(|i| i % 3).collect();
        let all = render_cluster_map(&m, &labels, &[0, 1, 2], 1).unwrap();
        let none = render_cluster_map(&m, &labels, &[], 1).unwrap();
        for k in 0..12u32 {
            let (x, y) = (k % 4, k / 4);
            let expect_tissue = k != 4;
            assert_eq!(all.get(x, y), if expect_tissue { HIGHLIGHT } else { BACKGROUND });
            assert_eq!(none.get(x, y), if expect_tissue { EXCLUDED } else { BACKGROUND });
        }
        let mut one = vec![0; 11];
        one[7] = 1;
        let img = render_cluster_map(&m, &one, &[1], 1).unwrap();
        let red = img.as_bytes().chunks_exact(3).filter(|p| *p == HIGHLIGHT).count();
        assert_eq!(red, 1);
    }

    #[test]
    fn patch_grid_dimensions() {
        let p = RgbRaster::filled(224, 224, [10, 20, 30]);
        let nine = render_patch_grid(&vec![p.clone(); 9], 3).unwrap();
        assert_eq!((nine.width(), nine.height()), (3 * 224 + 4, 3 * 224 + 4));
        assert_eq!(nine.get(224, 0), GUTTER);
        assert_eq!(nine.get(226, 0), [10, 20, 30]);
        let one = render_patch_grid(std::slice::from_ref(&p), 3).unwrap();
        assert_eq!(one, p);
        let four = render_patch_grid(&vec![p.clone(); 4], 3).unwrap();
        assert_eq!((four.width(), four.height()), (3 * 224 + 4, 2 * 224 + 2));
        assert_eq!(four.get(100, 300), [10, 20, 30]);
        assert_eq!(four.get(300, 300), GUTTER);
    }

    #[test]
    fn thumbnail_sizes_and_constant_colour() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        write_png(&path, &RgbRaster::filled(896, 448, [200, 100, 50])).unwrap();
        let mut h = open_slide(&path).unwrap();
        let t = render_thumbnail(&mut h, 224).unwrap();
        assert_eq!((t.width(), t.height()), (224, 112));
        assert!(t.as_bytes().chunks_exact(3).all(|p| p == [200, 100, 50]));

        let odd = dir.path().join("odd.png");
        write_png(&odd, &RgbRaster::filled(100, 37, [7, 8, 9])).unwrap();
        let t = render_thumbnail(&mut open_slide(&odd).unwrap(), 30).unwrap();
        assert_eq!((t.width(), t.height()), (25, 10));
        assert!(t.as_bytes().chunks_exact(3).all(|p| p == [7, 8, 9]));
    }

    #[test]
    fn thumbnail_without_scaling_is_a_copy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let img = checkerboard(40, 24, 5);
        write_png(&path, &img).unwrap();
        let t = render_thumbnail(&mut open_slide(&path).unwrap(), 64).unwrap();
        assert_eq!(t, img);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let m = mask(&[3]);
        let vals: Vec<Option<f64>> = (0..11).map(|i| Some((i as f64).sin())).collect();
        let a = render_heatmap(&m, &vals, &OverlayStyle::default(), 5).unwrap().to_png();
        let b = render_heatmap(&m, &vals, &OverlayStyle::default(), 5).unwrap().to_png();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn patch_centres_carry_the_mapped_colour(
            vals in proptest::collection::vec(-10.0f64..10.0, 12),
            scale in 1u32..7,
        ) {
            let m = mask(&[]);
            let opt: Vec<Option<f64>> = vals.iter().copied().map(Some).collect();
            let img = render_heatmap(&m, &opt, &OverlayStyle::default(), scale).unwrap();
            prop_assert_eq!((img.width(), img.height()), (4 * scale, 3 * scale));
            let norm = normalize(&vals, Normalization::MinmaxPerSlide);
            for (k, t) in norm.iter().enumerate() {
                let (c, r) = (k as u32 % 4, k as u32 / 4);
                prop_assert_eq!(img.get(c * scale + scale / 2, r * scale + scale / 2), colormap(*t));
            }
        }
    }
}
