//! Minimal 8-bit RGB raster shared by slide reads, embedders and renderers.

use std::io::Write;

/// Row-major interleaved RGB8 pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps an existing buffer; returns `None` when the length does not match.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let start = self.offset(0, y);
        &self.data[start..start + self.width as usize * 3]
    }

    pub fn row_mut(&mut self, y: u32) -> &mut [u8] {
        let start = self.offset(0, y);
        let len = self.width as usize * 3;
        &mut self.data[start..start + len]
    }

    /// Fills the rectangle `[x, x+w) × [y, y+h)`, clipped to the raster.
    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, rgb: [u8; 3]) {
        let x1 = (x.saturating_add(w)).min(self.width);
        let y1 = (y.saturating_add(h)).min(self.height);
        for yy in y.min(self.height)..y1 {
            for xx in x.min(self.width)..x1 {
                self.put(xx, yy, rgb);
            }
        }
    }

    /// Copies `src` with its top-left corner at `(x, y)`, clipped.
    pub fn blit(&mut self, src: &RgbRaster, x: u32, y: u32) {
        if x >= self.width || y >= self.height {
            return;
        }
        let w = src.width.min(self.width - x) as usize;
        for sy in 0..src.height.min(self.height - y) {
            let s = &src.row(sy)[..w * 3];
            let d = self.offset(x, y + sy);
            self.data[d..d + w * 3].copy_from_slice(s);
        }
    }

    /// Encodes as an 8-bit RGB PNG with fixed encoder settings (adaptive
    /// filtering off, balanced deflate), so identical rasters always produce
    /// identical bytes.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_png(&mut out).expect("in-memory PNG encoding");
        out
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), png::EncodingError> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Sub);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.data)?;
        writer.finish()
    }

    /// Decodes an in-memory PNG into RGB8 (gray and alpha are converted).
    pub fn from_png(bytes: &[u8]) -> Result<Self, png::DecodingError> {
        let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info()?;
        let (color, _) = reader.output_color_type();
        let (w, h) = (reader.info().width, reader.info().height);
        let mut out = RgbRaster::new(w, h);
        let mut y = 0;
        while let Some(row) = reader.next_row()? {
            expand_to_rgb(row.data(), color, out.row_mut(y));
            y += 1;
        }
        Ok(out)
    }
}

/// Converts one decoded row of 8-bit samples into interleaved RGB.
pub(crate) fn expand_to_rgb(src: &[u8], color: png::ColorType, dst: &mut [u8]) {
    match color {
        png::ColorType::Rgb => dst.copy_from_slice(&src[..dst.len()]),
        png::ColorType::Rgba => {
            for (d, s) in dst.chunks_exact_mut(3).zip(src.chunks_exact(4)) {
                d.copy_from_slice(&s[..3]);
            }
        }
        png::ColorType::Grayscale => {
            for (d, &s) in dst.chunks_exact_mut(3).zip(src) {
                d.fill(s);
            }
        }
        png::ColorType::GrayscaleAlpha => {
            for (d, s) in dst.chunks_exact_mut(3).zip(src.chunks_exact(2)) {
                d.fill(s[0]);
            }
        }
        png::ColorType::Indexed => unreachable!("EXPAND resolves palettes"),
    }
}
