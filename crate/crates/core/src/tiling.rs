//! Half-overlapping subsection grid with bilinear interpolation windows.
//!
//! Tiles are indexed `(p, q)` from zero, `p` along rows. Window `(p, q)` is a
//! separable tent centered on the tile center that reaches zero at half the
//! tile length, so interior tiles overlap their neighbours by half in each
//! direction. The raw tents do not sum to one near the image border; every
//! window is divided by the pixel-wise sum of all tents, which is the same as
//! extending the nearest interior tile out to the edge.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::RealImage;

#[derive(Debug, Clone)]
pub struct TileGrid {
    shape: (usize, usize),
    tiles: (usize, usize),
    centers_v: Vec<usize>,
    centers_h: Vec<usize>,
    length_v: f64,
    length_h: f64,
    windows: Vec<RealImage>,
}

fn tile_centers(extent: usize, count: usize) -> Vec<usize> {
    let spacing = extent as f64 / count as f64;
    (0..count)
        .map(|p| ((p as f64 + 0.5) * spacing).round() as usize)
        .collect()
}

fn check_axis(extent: usize, count: usize) -> Result<()> {
    if count == 0 || extent < 2 * count {
        return Err(Error::InvalidTiling { extent, count });
    }
    Ok(())
}

/// Bilinear tent of one tile, before normalization.
pub fn raw_window(rows: usize, cols: usize, center: (usize, usize), lengths: (f64, f64)) -> Array2<f64> {
    let tent = |c: usize, x: usize, len: f64| (1.0 - (c as f64 - x as f64).abs() / (len / 2.0)).max(0.0);
    Array2::from_shape_fn((rows, cols), |(m, n)| {
        tent(center.0, m, lengths.0) * tent(center.1, n, lengths.1)
    })
}

/// Grid of `tiles_v x tiles_h` half-overlapping tiles on a `rows x cols` image.
pub fn build_grid(rows: usize, cols: usize, tiles_v: usize, tiles_h: usize) -> Result<TileGrid> {
    check_axis(rows, tiles_v)?;
    check_axis(cols, tiles_h)?;
    let centers_v = tile_centers(rows, tiles_v);
    let centers_h = tile_centers(cols, tiles_h);
    let length_v = 2.0 * rows as f64 / tiles_v as f64;
    let length_h = 2.0 * cols as f64 / tiles_h as f64;

    let mut raw = Vec::with_capacity(tiles_v * tiles_h);
    for &cv in &centers_v {
        for &ch in &centers_h {
            raw.push(raw_window(rows, cols, (cv, ch), (length_v, length_h)));
        }
    }
    let mut total = Array2::<f64>::zeros((rows, cols));
    for w in &raw {
        total += w;
    }
    if total.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidTiling {
            extent: rows.max(cols),
            count: tiles_v.max(tiles_h),
        });
    }
    let windows = raw
        .into_iter()
        .map(|w| RealImage::from_array_unchecked(w / &total))
        .collect();

    Ok(TileGrid {
        shape: (rows, cols),
        tiles: (tiles_v, tiles_h),
        centers_v,
        centers_h,
        length_v,
        length_h,
        windows,
    })
}

impl TileGrid {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// `(P, Q)`.
    pub fn tiles(&self) -> (usize, usize) {
        self.tiles
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.0 * self.tiles.1
    }

    /// Tile lengths `(l_m, l_n)` in pixels.
    pub fn lengths(&self) -> (f64, f64) {
        (self.length_v, self.length_h)
    }

    /// All `(p, q)` in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (tv, th) = self.tiles;
        (0..tv).flat_map(move |p| (0..th).map(move |q| (p, q)))
    }

    fn check(&self, p: usize, q: usize) -> Result<usize> {
        let (tv, th) = self.tiles;
        if p >= tv || q >= th {
            return Err(Error::TileOutOfRange {
                p,
                q,
                tiles_v: tv,
                tiles_h: th,
            });
        }
        Ok(p * th + q)
    }

    pub fn center(&self, p: usize, q: usize) -> Result<(usize, usize)> {
        self.check(p, q)?;
        Ok((self.centers_v[p], self.centers_h[q]))
    }

    /// Normalized window `W_{p,q}`.
    pub fn window(&self, p: usize, q: usize) -> Result<&RealImage> {
        Ok(&self.windows[self.check(p, q)?])
    }

    pub fn windows(&self) -> &[RealImage] {
        &self.windows
    }
}

/// Overlap-add: `sum_{p,q} local[p,q] * W_{p,q}`, tiles in row-major order.
pub fn synthesize_object(local_objects: &[RealImage], grid: &TileGrid) -> Result<RealImage> {
    if local_objects.len() != grid.tile_count() {
        return Err(Error::TileCountMismatch {
            expected: grid.tile_count(),
            found: local_objects.len(),
        });
    }
    let mut acc = Array2::<f64>::zeros(grid.shape());
    for (local, window) in local_objects.iter().zip(grid.windows()) {
        crate::spectral::check_shape(grid.shape(), local.shape())?;
        acc.zip_mut_with(&(local.as_array() * window.as_array()), |a, &b| *a += b);
    }
    RealImage::new(acc)
}
