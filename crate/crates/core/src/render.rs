//! Feature-grid rendering to binary PGM.

use std::io::Write;

use ndarray::Array2;

use crate::error::{NsmError, Result};

/// Gray level of a tile whose values are all equal.
pub const FLAT_TILE_GRAY: u8 = 128;
/// Gray level of separators and empty grid cells.
pub const SEPARATOR_GRAY: u8 = 0;

/// An 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM: `P5`, ASCII dimensions, maxval 255, raw bytes.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 20);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Min-max normalizes a tile to `[0, 255]`; constant tiles map to mid-gray.
fn normalize_tile(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(hi > lo) {
        return vec![FLAT_TILE_GRAY; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Lays the rows of `features` out as `tile_h x tile_w` tiles, `grid_cols`
/// per row (default `ceil(sqrt(k))`), with 1-pixel separators.
pub fn render_feature_grid(
    features: &Array2<f64>,
    tile_h: usize,
    tile_w: usize,
    grid_cols: Option<usize>,
) -> Result<GrayImage> {
    let (k, n) = features.dim();
    if tile_h == 0 || tile_w == 0 || tile_h * tile_w != n {
        return Err(NsmError::InvalidArgument(format!(
            "feature length {n} is not a {tile_h}x{tile_w} tile"
        )));
    }
    if k == 0 {
        return Err(NsmError::InvalidArgument("no features to render".into()));
    }
    let cols = grid_cols.unwrap_or_else(|| (k as f64).sqrt().ceil() as usize).max(1);
    let rows = k.div_ceil(cols);
    let width = cols * tile_w + (cols - 1);
    let height = rows * tile_h + (rows - 1);
    let mut pixels = vec![SEPARATOR_GRAY; width * height];
    for (idx, feature) in features.rows().into_iter().enumerate() {
        let values: Vec<f64> = feature.iter().cloned().collect();
        let tile = normalize_tile(&values);
        let (gr, gc) = (idx / cols, idx % cols);
        let (y0, x0) = (gr * (tile_h + 1), gc * (tile_w + 1));
        for r in 0..tile_h {
            let dst = (y0 + r) * width + x0;
            pixels[dst..dst + tile_w].copy_from_slice(&tile[r * tile_w..(r + 1) * tile_w]);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}
