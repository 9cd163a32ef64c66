use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use tiff::decoder::{ChunkType, Decoder, DecodingResult};
use tiff::tags::Tag;

use super::{Result, SlideError};
use crate::raster::{expand_to_rgb, RgbRaster};

/// Default upper bound on decoded chunk bytes held by one handle (256 MiB).
pub const DEFAULT_CHUNK_BUDGET: usize = 256 * 1024 * 1024;

/// Rows per synthetic band when streaming PNG slides.
const PNG_BAND_ROWS: u32 = 64;

const WHITE: u8 = 255;

/// Tile-addressable reader over one slide file.
///
/// Decoded chunks (TIFF strips/tiles, or row bands for PNG) live in a FIFO
/// cache whose total size never exceeds the chunk budget. A handle is meant
/// for one consumer; open one per worker.
pub struct SlideHandle {
    path: PathBuf,
    width: u32,
    height: u32,
    chunk_width: u32,
    chunk_height: u32,
    source: Source,
    cache: ChunkCache,
}

impl std::fmt::Debug for SlideHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlideHandle")
            .field("path", &self.path)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("chunk", &(self.chunk_width, self.chunk_height))
            .finish()
    }
}

enum Source {
    Tiff {
        decoder: Box<Decoder<BufReader<File>>>,
        samples: Samples,
        tiled: bool,
        chunks_across: u32,
    },
    Png {
        reader: Option<Box<png::Reader<BufReader<File>>>>,
        next_row: u32,
        color: png::ColorType,
    },
}

#[derive(Clone, Copy)]
enum Samples {
    Gray,
    GrayAlpha,
    Rgb,
    Rgba,
}

impl Samples {
    fn count(self) -> usize {
        match self {
            Samples::Gray => 1,
            Samples::GrayAlpha => 2,
            Samples::Rgb => 3,
            Samples::Rgba => 4,
        }
    }

    fn expand(self, src: &[u8], dst: &mut [u8]) {
        let color = match self {
            Samples::Gray => png::ColorType::Grayscale,
            Samples::GrayAlpha => png::ColorType::GrayscaleAlpha,
            Samples::Rgb => png::ColorType::Rgb,
            Samples::Rgba => png::ColorType::Rgba,
        };
        expand_to_rgb(src, color, dst);
    }
}

struct ChunkCache {
    budget: usize,
    used: usize,
    peak: usize,
    entries: VecDeque<((u32, u32), RgbRaster)>,
}

impl ChunkCache {
    fn new(budget: usize) -> Self {
        Self {
            budget,
            used: 0,
            peak: 0,
            entries: VecDeque::new(),
        }
    }

    fn position(&self, key: (u32, u32)) -> Option<usize> {
        self.entries.iter().position(|(k, _)| *k == key)
    }

    fn make_room(&mut self, needed: usize) -> Result<()> {
        if needed > self.budget {
            return Err(SlideError::ChunkTooLarge {
                needed,
                budget: self.budget,
            });
        }
        while self.used + needed > self.budget {
            let (_, old) = self.entries.pop_front().expect("used > 0 implies entries");
            self.used -= old.as_bytes().len();
        }
        Ok(())
    }

    fn insert(&mut self, key: (u32, u32), chunk: RgbRaster) -> usize {
        self.used += chunk.as_bytes().len();
        self.peak = self.peak.max(self.used);
        self.entries.push_back((key, chunk));
        self.entries.len() - 1
    }
}

/// Opens a slide with the default 256 MiB chunk budget.
pub fn open_slide(path: impl AsRef<Path>) -> Result<SlideHandle> {
    open_slide_with_budget(path, DEFAULT_CHUNK_BUDGET)
}

/// Opens a PNG or TIFF slide. Only headers are read here.
pub fn open_slide_with_budget(path: impl AsRef<Path>, chunk_budget: usize) -> Result<SlideHandle> {
    let path = path.as_ref().to_path_buf();
    let mut file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SlideError::FileNotFound(path))
        }
        Err(e) => return Err(e.into()),
    };
    let mut magic = [0u8; 8];
    let got = read_up_to(&mut file, &mut magic)?;
    drop(file);
    let magic = &magic[..got];
    if magic.starts_with(b"\x89PNG\r\n\x1a\n") {
        open_png(path, chunk_budget)
    } else if magic.starts_with(b"II*\0")
        || magic.starts_with(b"MM\0*")
        || magic.starts_with(b"II+\0")
        || magic.starts_with(b"MM\0+")
    {
        open_tiff(path, chunk_budget)
    } else {
        Err(SlideError::UnsupportedFormat(format!(
            "{}: not a PNG or TIFF file",
            path.display()
        )))
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

fn corrupt(path: &Path, reason: impl ToString) -> SlideError {
    SlideError::CorruptImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn open_tiff(path: PathBuf, budget: usize) -> Result<SlideHandle> {
    let file = BufReader::new(File::open(&path)?);
    let mut decoder = Decoder::new(file).map_err(|e| corrupt(&path, e))?;
    let (width, height) = decoder.dimensions().map_err(|e| corrupt(&path, e))?;
    let samples = match decoder.colortype().map_err(|e| corrupt(&path, e))? {
        tiff::ColorType::Gray(8) => Samples::Gray,
        tiff::ColorType::GrayA(8) => Samples::GrayAlpha,
        tiff::ColorType::RGB(8) => Samples::Rgb,
        tiff::ColorType::RGBA(8) => Samples::Rgba,
        other => {
            return Err(SlideError::UnsupportedFormat(format!(
                "{}: TIFF color type {other:?} (need 8-bit gray/RGB)",
                path.display()
            )))
        }
    };
    let planar = decoder
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(|e| corrupt(&path, e))?
        .unwrap_or(1);
    if planar != 1 && samples.count() > 1 {
        return Err(SlideError::UnsupportedFormat(format!(
            "{}: planar TIFF configuration",
            path.display()
        )));
    }
    let tiled = matches!(decoder.get_chunk_type(), ChunkType::Tile);
    let (chunk_width, chunk_height) = decoder.chunk_dimensions();
    let (chunk_width, chunk_height) = if tiled {
        (chunk_width, chunk_height)
    } else {
        (width, chunk_height.min(height).max(1))
    };
    let chunks_across = width.div_ceil(chunk_width);
    Ok(SlideHandle {
        path,
        width,
        height,
        chunk_width,
        chunk_height,
        source: Source::Tiff {
            decoder: Box::new(decoder),
            samples,
            tiled,
            chunks_across,
        },
        cache: ChunkCache::new(budget),
    })
}

fn png_reader(path: &Path) -> Result<png::Reader<BufReader<File>>> {
    let file = BufReader::new(File::open(path)?);
    let mut dec = png::Decoder::new(file);
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    dec.read_info().map_err(|e| corrupt(path, e))
}

fn open_png(path: PathBuf, budget: usize) -> Result<SlideHandle> {
    let reader = png_reader(&path)?;
    let info = reader.info();
    if info.interlaced {
        return Err(SlideError::UnsupportedFormat(format!(
            "{}: interlaced PNG cannot be streamed",
            path.display()
        )));
    }
    let (width, height) = (info.width, info.height);
    let (color, _) = reader.output_color_type();
    Ok(SlideHandle {
        path,
        width,
        height,
        chunk_width: width,
        chunk_height: PNG_BAND_ROWS.min(height).max(1),
        source: Source::Png {
            reader: Some(Box::new(reader)),
            next_row: 0,
            color,
        },
        cache: ChunkCache::new(budget),
    })
}

impl SlideHandle {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// `(width, height)` of level 0 in pixels.
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Size of the native decode unit (strip, tile or PNG band).
    pub fn chunk_dimensions(&self) -> (u32, u32) {
        (self.chunk_width, self.chunk_height)
    }

    pub fn chunk_budget(&self) -> usize {
        self.cache.budget
    }

    /// Largest number of decoded chunk bytes held at once so far.
    pub fn peak_cached_bytes(&self) -> usize {
        self.cache.peak
    }

    /// Reads `[x, x+w) × [y, y+h)`; pixels outside the slide are white.
    pub fn read_region(&mut self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbRaster> {
        let mut out = RgbRaster::filled(w, h, [WHITE; 3]);
        let x_end = (x as u64 + w as u64).min(self.width as u64) as u32;
        let y_end = (y as u64 + h as u64).min(self.height as u64) as u32;
        if x >= x_end || y >= y_end {
            return Ok(out);
        }
        let (cw, ch) = (self.chunk_width, self.chunk_height);
        for cy in (y / ch)..=((y_end - 1) / ch) {
            for cx in (x / cw)..=((x_end - 1) / cw) {
                let idx = self.chunk(cx, cy)?;
                let chunk = &self.cache.entries[idx].1;
                let (ox, oy) = (cx * cw, cy * ch);
                let sx0 = x.max(ox);
                let sx1 = x_end.min(ox + chunk.width());
                let sy0 = y.max(oy);
                let sy1 = y_end.min(oy + chunk.height());
                if sx0 >= sx1 {
                    continue;
                }
                let len = (sx1 - sx0) as usize * 3;
                for sy in sy0..sy1 {
                    let src_off = (sx0 - ox) as usize * 3;
                    let src = &chunk.row(sy - oy)[src_off..src_off + len];
                    let dst_off = (sx0 - x) as usize * 3;
                    out.row_mut(sy - y)[dst_off..dst_off + len].copy_from_slice(src);
                }
            }
        }
        Ok(out)
    }

    /// Returns the cache slot holding chunk `(cx, cy)`, decoding it if needed.
    fn chunk(&mut self, cx: u32, cy: u32) -> Result<usize> {
        if let Some(i) = self.cache.position((cx, cy)) {
            return Ok(i);
        }
        let cw = self.chunk_width.min(self.width - cx * self.chunk_width);
        let ch = self.chunk_height.min(self.height - cy * self.chunk_height);
        let bytes = cw as usize * ch as usize * 3;
        self.cache.make_room(bytes)?;
        let raster = match &mut self.source {
            Source::Tiff {
                decoder,
                samples,
                tiled,
                chunks_across,
            } => {
                let index = if *tiled { cy * *chunks_across + cx } else { cy };
                let data = match decoder.read_chunk(index) {
                    Ok(DecodingResult::U8(v)) => v,
                    Ok(_) => return Err(corrupt(&self.path, "non-8-bit chunk data")),
                    Err(tiff::TiffError::LimitsExceeded) => {
                        return Err(SlideError::ChunkTooLarge {
                            needed: bytes,
                            budget: self.cache.budget,
                        })
                    }
                    Err(e) => return Err(corrupt(&self.path, e)),
                };
                let spp = samples.count();
                let (dw, dh) = decoder.chunk_data_dimensions(index);
                if dw < cw || dh < ch || data.len() < dw as usize * dh as usize * spp {
                    return Err(corrupt(&self.path, "short chunk"));
                }
                let mut r = RgbRaster::new(cw, ch);
                let stride = dw as usize * spp;
                for row in 0..ch {
                    let src = &data[row as usize * stride..][..cw as usize * spp];
                    samples.expand(src, r.row_mut(row));
                }
                r
            }
            Source::Png {
                reader,
                next_row,
                color,
            } => {
                let first = cy * self.chunk_height;
                if reader.is_none() || *next_row > first {
                    *reader = Some(Box::new(png_reader(&self.path)?));
                    *next_row = 0;
                }
                let rd = reader.as_mut().expect("reader just ensured");
                let mut r = RgbRaster::new(cw, ch);
                while *next_row < first + ch {
                    let row = rd
                        .next_row()
                        .map_err(|e| corrupt(&self.path, e))?
                        .ok_or_else(|| corrupt(&self.path, "unexpected end of image data"))?;
                    if *next_row >= first {
                        expand_to_rgb(row.data(), *color, r.row_mut(*next_row - first));
                    }
                    *next_row += 1;
                }
                r
            }
        };
        Ok(self.cache.insert((cx, cy), raster))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn open_nonexistent_is_not_found() {
        let err = open_slide("/definitely/not/here.tif").unwrap_err();
        assert!(matches!(err, SlideError::FileNotFound(_)));
    }

    #[test]
    fn open_text_file_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("notes.txt");
        std::fs::write(&p, "hello, not an image").unwrap();
        assert!(matches!(
            open_slide(&p).unwrap_err(),
            SlideError::UnsupportedFormat(_)
        ));
    }

    #[test]
    fn truncated_png_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let bytes = RgbRaster::filled(64, 64, [1, 2, 3]).to_png();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        let res = open_slide(&p).and_then(|mut h| h.read_region(0, 0, 64, 64));
        assert!(matches!(res, Err(SlideError::CorruptImage { .. })));
    }

    #[test]
    fn edge_reads_pad_white() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        std::fs::write(&p, RgbRaster::filled(10, 10, [0, 0, 0]).to_png()).unwrap();
        let mut h = open_slide(&p).unwrap();
        let r = h.read_region(8, 8, 4, 4).unwrap();
        assert_eq!((r.width(), r.height()), (4, 4));
        assert_eq!(r.get(0, 0), [0, 0, 0]);
        assert_eq!(r.get(1, 1), [0, 0, 0]);
        assert_eq!(r.get(2, 0), [255, 255, 255]);
        assert_eq!(r.get(0, 3), [255, 255, 255]);
        let far = h.read_region(100, 100, 2, 2).unwrap();
        assert_eq!(far.get(1, 1), [255, 255, 255]);
    }

    #[test]
    fn budget_bounds_cached_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tif");
        let img = synth::checkerboard(256, 256, 32);
        synth::write_tiff_striped(&p, &img, 16, false).unwrap();
        // each strip is 256*16*3 = 12 KiB; allow three of them
        let mut h = open_slide_with_budget(&p, 3 * 12 * 1024).unwrap();
        for y in (0..256).step_by(16) {
            h.read_region(0, y, 256, 16).unwrap();
        }
        assert!(h.peak_cached_bytes() <= 3 * 12 * 1024);
        let whole = h.read_region(0, 0, 256, 256).unwrap();
        assert_eq!(whole, img);
    }

    #[test]
    fn chunk_larger_than_budget_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tif");
        let img = synth::checkerboard(64, 64, 8);
        synth::write_tiff_striped(&p, &img, 64, false).unwrap();
        let mut h = open_slide_with_budget(&p, 1024).unwrap();
        assert!(matches!(
            h.read_region(0, 0, 4, 4),
            Err(SlideError::ChunkTooLarge { .. })
        ));
    }
}
