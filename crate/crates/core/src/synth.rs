//! Synthetic slides and cohorts for tests, benchmarks and demos.
//!
//! Pixels are a pure function of `(seed, x, y, cell kind)`, so slides of any
//! size can be streamed to disk strip by strip without holding the image.
//! Cell kinds mimic H&E appearance: bright background, pink stroma, purple
//! nucleus-dense tissue, and a high-contrast striped "signature" texture that
//! marks positive slides.

use std::fs::File;
use std::io::{BufWriter, Seek, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use tiff::encoder::{DirectoryEncoder, TiffEncoder, TiffKindStandard};
use tiff::tags::Tag;

use crate::raster::RgbRaster;
use crate::rng::{mix64, stream};
use crate::slide_io::Grade;

/// Appearance class of one patch-sized cell of a synthetic slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Background,
    Stroma,
    Nuclei,
    Signature,
}

#[inline]
fn noise(seed: u64, x: u32, y: u32) -> u64 {
    mix64(seed ^ ((x as u64) << 32 | y as u64))
}

#[inline]
fn jitter(base: [u8; 3], amp: i32, h: u64) -> [u8; 3] {
    let span = (2 * amp + 1) as u64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let d = ((h >> (c * 16)) % span) as i32 - amp;
        *o = (base[c] as i32 + d).clamp(0, 255) as u8;
    }
    out
}

/// Color of pixel `(x, y)` (slide coordinates) inside a cell of `kind`.
pub fn texture_pixel(kind: CellKind, seed: u64, x: u32, y: u32) -> [u8; 3] {
    let h = noise(seed, x, y);
    match kind {
        CellKind::Background => jitter([243, 241, 246], 3, h),
        CellKind::Stroma => {
            // slow diagonal banding of collagen fibres
            let band = ((x + y) / 24) % 2 == 0;
            let base = if band { [226, 156, 186] } else { [214, 140, 176] };
            jitter(base, 10, h)
        }
        CellKind::Nuclei => {
            let blob = (h >> 56) < 40;
            let base = if blob { [88, 50, 130] } else { [168, 110, 178] };
            jitter(base, 12, h)
        }
        CellKind::Signature => {
            let dark = (x / 4) % 2 == 0;
            let base = if dark { [58, 18, 92] } else { [232, 204, 232] };
            jitter(base, 6, h)
        }
    }
}

/// Renders a full raster from a row-major cell layout.
pub fn render_cells(cells: &[CellKind], cols: u32, rows: u32, cell: u32, seed: u64) -> RgbRaster {
    let mut img = RgbRaster::new(cols * cell, rows * cell);
    for y in 0..rows * cell {
        fill_row(cells, cols, cell, seed, y, img.row_mut(y));
    }
    img
}

fn fill_row(cells: &[CellKind], cols: u32, cell: u32, seed: u64, y: u32, row: &mut [u8]) {
    let r = y / cell;
    let width = row.len() as u32 / 3;
    for x in 0..width {
        let c = x / cell;
        let kind = if c < cols {
            cells[(r * cols + c) as usize]
        } else {
            CellKind::Background
        };
        let px = texture_pixel(kind, seed, x, y);
        row[x as usize * 3..x as usize * 3 + 3].copy_from_slice(&px);
    }
}

/// A single patch-sized sample of a texture, with its origin at `(ox, oy)`.
pub fn texture_patch(kind: CellKind, size: u32, seed: u64, ox: u32, oy: u32) -> RgbRaster {
    let mut r = RgbRaster::new(size, size);
    for y in 0..size {
        for x in 0..size {
            r.put(x, y, texture_pixel(kind, seed, ox + x, oy + y));
        }
    }
    r
}

/// Black/white checkerboard; the top-left cell is black.
pub fn checkerboard(width: u32, height: u32, cell: u32) -> RgbRaster {
    let mut r = RgbRaster::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let v = if ((x / cell) + (y / cell)) % 2 == 0 { 0 } else { 255 };
            r.put(x, y, [v, v, v]);
        }
    }
    r
}

pub fn write_png(path: &Path, img: &RgbRaster) -> std::io::Result<()> {
    let w = BufWriter::new(File::create(path)?);
    img.write_png(w).map_err(std::io::Error::other)
}

fn tiff_err(e: tiff::TiffError) -> std::io::Error {
    std::io::Error::other(e)
}

/// Writes an in-memory raster as a striped RGB TIFF.
pub fn write_tiff_striped(path: &Path, img: &RgbRaster, rows_per_strip: u32, deflate: bool) -> std::io::Result<()> {
    let w = img.width();
    stream_tiff_striped(path, w, img.height(), rows_per_strip, deflate, |y, row| {
        row.copy_from_slice(img.row(y))
    })
}

/// Streams a striped RGB TIFF row by row; `fill(y, row)` writes one row.
pub fn stream_tiff_striped(
    path: &Path,
    width: u32,
    height: u32,
    rows_per_strip: u32,
    deflate: bool,
    fill: impl FnMut(u32, &mut [u8]),
) -> std::io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_striped_into(&mut file, width, height, rows_per_strip, deflate, fill).map_err(tiff_err)?;
    file.flush()
}

fn encode_chunk(raw: &[u8], deflate: bool) -> std::io::Result<Vec<u8>> {
    if !deflate {
        return Ok(raw.to_vec());
    }
    let mut z = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::fast());
    z.write_all(raw)?;
    z.finish()
}

/// Tags shared by the striped and tiled writers.
fn write_rgb_tags<W: Write + Seek>(
    dir: &mut DirectoryEncoder<'_, W, TiffKindStandard>,
    width: u32,
    height: u32,
    deflate: bool,
) -> tiff::TiffResult<()> {
    dir.write_tag(Tag::ImageWidth, width)?;
    dir.write_tag(Tag::ImageLength, height)?;
    dir.write_tag(Tag::BitsPerSample, &[8u16, 8, 8][..])?;
    dir.write_tag(Tag::Compression, if deflate { 8u16 } else { 1u16 })?;
    dir.write_tag(Tag::PhotometricInterpretation, 2u16)?;
    dir.write_tag(Tag::SamplesPerPixel, 3u16)?;
    dir.write_tag(Tag::PlanarConfiguration, 1u16)?;
    Ok(())
}

fn write_striped_into<W: Write + Seek>(
    w: W,
    width: u32,
    height: u32,
    rows_per_strip: u32,
    deflate: bool,
    mut fill: impl FnMut(u32, &mut [u8]),
) -> tiff::TiffResult<()> {
    let mut enc = TiffEncoder::new(w)?;
    let mut dir = enc.image_directory()?;
    let row_len = width as usize * 3;
    let mut offsets = Vec::new();
    let mut counts = Vec::new();
    let mut strip = Vec::new();
    let mut y = 0u32;
    while y < height {
        let rows = rows_per_strip.min(height - y);
        strip.resize(rows as usize * row_len, 0);
        for (i, row) in strip.chunks_exact_mut(row_len).enumerate() {
            fill(y + i as u32, row);
        }
        let bytes = encode_chunk(&strip, deflate)?;
        offsets.push(dir.write_data(&bytes[..])? as u32);
        counts.push(bytes.len() as u32);
        y += rows;
    }
    write_rgb_tags(&mut dir, width, height, deflate)?;
    dir.write_tag(Tag::RowsPerStrip, rows_per_strip)?;
    dir.write_tag(Tag::StripOffsets, &offsets[..])?;
    dir.write_tag(Tag::StripByteCounts, &counts[..])?;
    dir.finish()?;
    Ok(())
}

/// Writes a tiled RGB TIFF; edge tiles are padded with white.
pub fn write_tiff_tiled(path: &Path, img: &RgbRaster, tile: u32, deflate: bool) -> std::io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_tiled_into(&mut file, img, tile, deflate).map_err(tiff_err)?;
    file.flush()
}

fn write_tiled_into<W: Write + Seek>(w: W, img: &RgbRaster, tile: u32, deflate: bool) -> tiff::TiffResult<()> {
    let mut enc = TiffEncoder::new(w)?;
    let mut dir = enc.image_directory()?;
    let (across, down) = (img.width().div_ceil(tile), img.height().div_ceil(tile));
    let mut offsets = Vec::new();
    let mut counts = Vec::new();
    for ty in 0..down {
        for tx in 0..across {
            let mut t = RgbRaster::filled(tile, tile, [255; 3]);
            for y in 0..tile {
                let sy = ty * tile + y;
                if sy >= img.height() {
                    break;
                }
                for x in 0..tile {
                    let sx = tx * tile + x;
                    if sx < img.width() {
                        t.put(x, y, img.get(sx, sy));
                    }
                }
            }
            let bytes = encode_chunk(t.as_bytes(), deflate)?;
            offsets.push(dir.write_data(&bytes[..])? as u32);
            counts.push(bytes.len() as u32);
        }
    }
    write_rgb_tags(&mut dir, img.width(), img.height(), deflate)?;
    dir.write_tag(Tag::TileWidth, tile)?;
    dir.write_tag(Tag::TileLength, tile)?;
    dir.write_tag(Tag::TileOffsets, &offsets[..])?;
    dir.write_tag(Tag::TileByteCounts, &counts[..])?;
    dir.finish()?;
    Ok(())
}

/// Streams a large square-ish synthetic slide (tissue ellipse with mixed
/// stroma/nuclei cells on background) to a deflate-compressed striped TIFF.
pub fn write_large_slide(path: &Path, width: u32, height: u32, cell: u32, seed: u64) -> std::io::Result<()> {
    let (cols, rows) = (width.div_ceil(cell), height.div_ceil(cell));
    let cells = ellipse_layout(cols, rows, seed);
    stream_tiff_striped(path, width, height, 64, true, |y, row| {
        fill_row(&cells, cols, cell, seed, y, row)
    })
}

fn ellipse_layout(cols: u32, rows: u32, seed: u64) -> Vec<CellKind> {
    let (cx, cy) = (cols as f64 / 2.0, rows as f64 / 2.0);
    let (rx, ry) = (cols as f64 * 0.42, rows as f64 * 0.38);
    let mut out = Vec::with_capacity((cols * rows) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let dx = (c as f64 + 0.5 - cx) / rx;
            let dy = (r as f64 + 0.5 - cy) / ry;
            out.push(if dx * dx + dy * dy <= 1.0 {
                if noise(seed, c, r) % 3 == 0 {
                    CellKind::Nuclei
                } else {
                    CellKind::Stroma
                }
            } else {
                CellKind::Background
            });
        }
    }
    out
}

/// Parameters of a planted-signal cohort.
#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub n_slides: usize,
    pub n_patients: usize,
    pub n_positive: usize,
    pub grid: u32,
    pub patch_size: u32,
    /// Inclusive range of signature patches planted in each positive slide.
    pub planted: (u32, u32),
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_slides: 60,
            n_patients: 50,
            n_positive: 30,
            grid: 16,
            patch_size: 64,
            planted: (6, 20),
            seed: 2024,
        }
    }
}

/// One generated slide and its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSlide {
    pub slide_id: String,
    pub patient_id: String,
    pub grade: Grade,
    pub path: PathBuf,
    pub cells: Vec<CellKind>,
    pub planted: usize,
    pub tissue: usize,
}

impl SyntheticSlide {
    pub fn is_positive(&self) -> bool {
        matches!(self.grade, Grade::Moderate | Grade::Poor)
    }
}

/// Generates a cohort of PNG slides plus `manifest.csv` under `dir`.
///
/// Slides `0..n_patients` belong to distinct patients; the remainder are
/// second tumours of the first patients. Every slide has a one-cell
/// background border and about 190 tissue cells; positive slides get a
/// random number of signature cells in place of ordinary tissue.
pub fn generate_cohort(dir: &Path, spec: &CohortSpec) -> std::io::Result<Vec<SyntheticSlide>> {
    assert!(spec.n_patients >= 1 && spec.n_patients <= spec.n_slides);
    assert!(spec.n_positive <= spec.n_slides);
    std::fs::create_dir_all(dir)?;
    let mut order_rng = stream(spec.seed, &[0xC0, 0]);
    let mut positive = vec![false; spec.n_slides];
    positive[..spec.n_positive].iter_mut().for_each(|p| *p = true);
    positive.shuffle(&mut order_rng);

    let g = spec.grid;
    let mut slides = Vec::with_capacity(spec.n_slides);
    for i in 0..spec.n_slides {
        let mut rng = stream(spec.seed, &[0xC0, 1 + i as u64]);
        let mut cells = vec![CellKind::Background; (g * g) as usize];
        let mut tissue_idx = Vec::new();
        for r in 1..g - 1 {
            for c in 1..g - 1 {
                let idx = (r * g + c) as usize;
                cells[idx] = if rng.random_bool(0.35) {
                    CellKind::Nuclei
                } else {
                    CellKind::Stroma
                };
                tissue_idx.push(idx);
            }
        }
        // knock out a few tissue cells so slides differ in size
        let drop = rng.random_range(0..=8usize);
        tissue_idx.shuffle(&mut rng);
        for &idx in &tissue_idx[..drop] {
            cells[idx] = CellKind::Background;
        }
        let tissue_idx = &tissue_idx[drop..];
        let planted = if positive[i] {
            let k = rng.random_range(spec.planted.0..=spec.planted.1) as usize;
            for &idx in &tissue_idx[..k] {
                cells[idx] = CellKind::Signature;
            }
            k
        } else {
            0
        };
        let grade = if positive[i] {
            if rng.random_bool(0.5) {
                Grade::Poor
            } else {
                Grade::Moderate
            }
        } else {
            Grade::Well
        };
        let slide_id = format!("slide_{i:03}");
        let patient_id = format!("patient_{:03}", i % spec.n_patients);
        let path = dir.join(format!("{slide_id}.png"));
        let img = render_cells(&cells, g, g, spec.patch_size, mix64(spec.seed ^ i as u64));
        write_png(&path, &img)?;
        slides.push(SyntheticSlide {
            slide_id,
            patient_id,
            grade,
            path,
            cells,
            planted,
            tissue: tissue_idx.len(),
        });
    }
    write_manifest(&dir.join("manifest.csv"), &slides)?;
    Ok(slides)
}

fn write_manifest(path: &Path, slides: &[SyntheticSlide]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["slide_id", "patient_id", "grade", "image_path", "magnification"])?;
    for s in slides {
        let file = s.path.file_name().expect("slide file name").to_string_lossy();
        w.write_record([
            s.slide_id.as_str(),
            s.patient_id.as_str(),
            s.grade.as_str(),
            file.as_ref(),
            "40",
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide_io::mean_gray;

    #[test]
    fn textures_order_by_brightness() {
        let bg = mean_gray(&texture_patch(CellKind::Background, 32, 1, 0, 0));
        let st = mean_gray(&texture_patch(CellKind::Stroma, 32, 1, 0, 0));
        let nu = mean_gray(&texture_patch(CellKind::Nuclei, 32, 1, 0, 0));
        let sig = mean_gray(&texture_patch(CellKind::Signature, 32, 1, 0, 0));
        assert!(bg > 230.0);
        for t in [st, nu, sig] {
            assert!(t < 200.0, "tissue luma {t}");
        }
    }

    #[test]
    fn cohort_shape() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec {
            n_slides: 6,
            n_patients: 4,
            n_positive: 3,
            grid: 8,
            patch_size: 16,
            planted: (3, 5),
            seed: 1,
        };
        let slides = generate_cohort(dir.path(), &spec).unwrap();
        assert_eq!(slides.len(), 6);
        assert_eq!(slides.iter().filter(|s| s.is_positive()).count(), 3);
        for s in &slides {
            assert_eq!(s.planted > 0, s.is_positive());
            assert!(s.path.exists());
        }
        assert!(dir.path().join("manifest.csv").exists());
    }
}
