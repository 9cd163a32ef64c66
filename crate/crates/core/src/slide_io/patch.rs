use super::{Result, SlideError, SlideHandle};
use crate::raster::RgbRaster;

/// Integer mean with round-half-to-even.
#[inline]
pub(crate) fn round_half_even(sum: u64, n: u64) -> u8 {
    let (q, r) = (sum / n, sum % n);
    let q = match (2 * r).cmp(&n) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    };
    q as u8
}

/// Downsamples by averaging non-overlapping `factor × factor` blocks per
/// channel. Trailing pixels that do not fill a whole block are dropped.
pub fn downsample_block_mean(src: &RgbRaster, factor: u32) -> RgbRaster {
    assert!(factor >= 1, "downsampling factor must be positive");
    if factor == 1 {
        return src.clone();
    }
    let (w, h) = (src.width() / factor, src.height() / factor);
    let n = factor * factor;
    let mut out = RgbRaster::new(w, h);
    let mut acc = vec![[0u32; 3]; w as usize];
    for oy in 0..h {
        acc.iter_mut().for_each(|a| *a = [0; 3]);
        for dy in 0..factor {
            let row = src.row(oy * factor + dy);
            for (ox, a) in acc.iter_mut().enumerate() {
                let start = ox * factor as usize * 3;
                for px in row[start..start + factor as usize * 3].chunks_exact(3) {
                    a[0] += px[0] as u32;
                    a[1] += px[1] as u32;
                    a[2] += px[2] as u32;
                }
            }
        }
        let dst = out.row_mut(oy);
        for (ox, a) in acc.iter().enumerate() {
            dst[ox * 3] = round_half_even(a[0] as u64, n as u64);
            dst[ox * 3 + 1] = round_half_even(a[1] as u64, n as u64);
            dst[ox * 3 + 2] = round_half_even(a[2] as u64, n as u64);
        }
    }
    out
}

/// Reads the `patch_size²` region at `coord` and block-averages it down to
/// `target_size²`.
pub fn extract_patch(
    handle: &mut SlideHandle,
    coord: (u32, u32),
    patch_size: u32,
    target_size: u32,
) -> Result<RgbRaster> {
    if patch_size == 0 || target_size == 0 || patch_size % target_size != 0 {
        return Err(SlideError::InvalidGeometry(format!(
            "target_size {target_size} must divide patch_size {patch_size}"
        )));
    }
    let (width, height) = handle.dimensions();
    let (x, y) = coord;
    if x as u64 + patch_size as u64 > width as u64 || y as u64 + patch_size as u64 > height as u64 {
        return Err(SlideError::OutOfBounds {
            x,
            y,
            w: patch_size,
            h: patch_size,
            width,
            height,
        });
    }
    let region = handle.read_region(x, y, patch_size, patch_size)?;
    Ok(downsample_block_mean(&region, patch_size / target_size))
}
