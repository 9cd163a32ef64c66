use serde::{Deserialize, Serialize};

use super::{Result, SlideError, SlideHandle};

/// Non-overlapping, axis-aligned patch origins in row-major order.
///
/// Partial strips at the right and bottom edges are discarded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: u32,
    pub target_size: u32,
    pub slide_width: u32,
    pub slide_height: u32,
    pub cols: u32,
    pub rows: u32,
    pub coords: Vec<(u32, u32)>,
}

impl PatchGrid {
    pub fn new(slide_width: u32, slide_height: u32, patch_size: u32, target_size: u32) -> Result<Self> {
        if patch_size == 0 {
            return Err(SlideError::InvalidGeometry("patch_size must be >= 1".into()));
        }
        if target_size == 0 || target_size > patch_size || patch_size % target_size != 0 {
            return Err(SlideError::InvalidGeometry(format!(
                "target_size {target_size} must divide patch_size {patch_size}"
            )));
        }
        let cols = slide_width / patch_size;
        let rows = slide_height / patch_size;
        let coords = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c * patch_size, r * patch_size)))
            .collect();
        Ok(Self {
            patch_size,
            target_size,
            slide_width,
            slide_height,
            cols,
            rows,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// `(col, row)` cell of a patch origin.
    pub fn cell_of(&self, coord: (u32, u32)) -> (u32, u32) {
        (coord.0 / self.patch_size, coord.1 / self.patch_size)
    }

    /// Row-major index of a patch origin within the grid.
    pub fn index_of(&self, coord: (u32, u32)) -> Option<usize> {
        let (c, r) = self.cell_of(coord);
        let aligned = coord.0 % self.patch_size == 0 && coord.1 % self.patch_size == 0;
        (aligned && c < self.cols && r < self.rows).then(|| (r * self.cols + c) as usize)
    }
}

/// Computes the patch grid of a slide; `target_size` must divide `patch_size`.
pub fn compute_patch_grid(handle: &SlideHandle, patch_size: u32, target_size: u32) -> Result<PatchGrid> {
    let (w, h) = handle.dimensions();
    PatchGrid::new(w, h, patch_size, target_size)
}
