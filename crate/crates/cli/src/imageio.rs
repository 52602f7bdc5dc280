//! Grayscale image files.
//!
//! 8- and 16-bit PNG and PGM are read and normalized to `[0, 1]` by the
//! maximum code value of their bit depth. Output is always 16-bit PNG.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;
use tip4aw::RealImage;

pub fn read_gray(path: &Path) -> Result<RealImage> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => bail!(
            "{}: only grayscale images are supported, found {:?}",
            path.display(),
            other.color()
        ),
    };
    let data = Array2::from_shape_vec((rows, cols), values)?;
    RealImage::new(data).with_context(|| format!("decoding {}", path.display()))
}

/// `value * scale`, clamped to `[0, 1]` and quantized to 16 bits.
pub fn write_gray16(path: &Path, img: &RealImage, scale: f64) -> Result<()> {
    let (rows, cols) = img.shape();
    let raw: Vec<u16> = img
        .as_array()
        .iter()
        .map(|&v| ((v * scale).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(cols as u32, rows as u32, raw).expect("buffer matches image shape");
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Scale that maps the image maximum to 1.
pub fn peak_scale(img: &RealImage) -> f64 {
    let max = img.max();
    if max > 0.0 {
        1.0 / max
    } else {
        1.0
    }
}
