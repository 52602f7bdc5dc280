//! Spectral deconvolution filters: single-frame Wiener, multi-frame Wiener
//! and the weighted multi-frame filter with thresholded division.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::spectral::{check_shape, idft2_real, zip_map, Complex, RealImage, Spectrum};

/// `N / [D]_{>alpha}`: divide where `|D| > alpha`, otherwise the bin is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionThreshold(f64);

impl DivisionThreshold {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "division threshold must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(DivisionThreshold(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn divide<D: Denominator>(self, num: Complex, den: D) -> Complex {
        if den.magnitude() > self.0 {
            let q = den.divide_into(num);
            if q.is_finite() {
                return q;
            }
        }
        Complex::new(0.0, 0.0)
    }
}

/// Real or complex denominators accepted by [`DivisionThreshold`].
pub trait Denominator: Copy {
    fn magnitude(self) -> f64;
    fn divide_into(self, num: Complex) -> Complex;
}

impl Denominator for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }

    fn divide_into(self, num: Complex) -> Complex {
        num / self
    }
}

impl Denominator for Complex {
    fn magnitude(self) -> f64 {
        self.norm()
    }

    fn divide_into(self, num: Complex) -> Complex {
        num / self
    }
}

/// Bin-wise thresholded division by a real array.
pub fn thresholded_divide(num: &Spectrum, den: &Array2<f64>, alpha: DivisionThreshold) -> Result<Spectrum> {
    check_shape(num.shape(), den.dim())?;
    let mut out = Array2::<Complex>::zeros(num.shape());
    Zip::from(&mut out)
        .and(num.as_array())
        .and(den)
        .for_each(|o, &n, &d| *o = alpha.divide(n, d));
    Ok(Spectrum::from_array_unchecked(out))
}

/// Bin-wise thresholded division by a complex spectrum.
pub fn thresholded_divide_complex(num: &Spectrum, den: &Spectrum, alpha: DivisionThreshold) -> Result<Spectrum> {
    zip_map(num, den, |n, d| alpha.divide(n, d))
}

/// Signal-to-noise ratio for [`wiener`]; infinity gives the inverse filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(f64);

impl Snr {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::InvalidSnr(value));
        }
        Ok(Snr(value))
    }

    pub const INFINITE: Snr = Snr(f64::INFINITY);
}

/// Single-frame Wiener filter `H* I / (|H|^2 + 1/SNR)`. Bins with a zero
/// denominator (only possible for infinite SNR) are set to zero.
pub fn wiener(image: &Spectrum, otf: &Spectrum, snr: Snr) -> Result<Spectrum> {
    let inv = 1.0 / snr.0;
    zip_map(image, otf, |i, h| {
        let den = h.norm_sqr() + inv;
        if den > 0.0 {
            h.conj() * i / den
        } else {
            Complex::new(0.0, 0.0)
        }
    })
}

/// Running sums `sum_s a_s H_s* I_s` and `sum_s a_s |H_s|^2`.
#[derive(Debug, Clone)]
pub struct WeightedAccumulator {
    numerator: Array2<Complex>,
    denominator: Array2<f64>,
    weight_sum: f64,
    frames: usize,
}

impl WeightedAccumulator {
    pub fn new(shape: (usize, usize)) -> Self {
        WeightedAccumulator {
            numerator: Array2::zeros(shape),
            denominator: Array2::zeros(shape),
            weight_sum: 0.0,
            frames: 0,
        }
    }

    pub fn add(&mut self, image: &Spectrum, otf: &Spectrum, weight: f64) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidWeight {
                frame: self.frames,
                value: weight,
            });
        }
        check_shape(self.numerator.dim(), image.shape())?;
        image.ensure_same_shape(otf)?;
        self.frames += 1;
        self.weight_sum += weight;
        if weight == 0.0 {
            return Ok(());
        }
        Zip::from(&mut self.numerator)
            .and(&mut self.denominator)
            .and(image.as_array())
            .and(otf.as_array())
            .for_each(|n, d, &i, &h| {
                *n += weight * h.conj() * i;
                *d += weight * h.norm_sqr();
            });
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Thresholded quotient with cut-off `epsilon * mean(a)`.
    pub fn finish(&self, epsilon: f64) -> Result<Spectrum> {
        if self.frames == 0 {
            return Err(Error::EmptyStack);
        }
        if self.weight_sum == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        let mean_weight = self.weight_sum / self.frames as f64;
        let alpha = DivisionThreshold::new(epsilon * mean_weight)?;
        thresholded_divide(
            &Spectrum::from_array_unchecked(self.numerator.clone()),
            &self.denominator,
            alpha,
        )
    }
}

fn check_frames(images: &[Spectrum], otfs: &[Spectrum]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::EmptyStack);
    }
    if images.len() != otfs.len() {
        return Err(Error::FrameCountMismatch {
            images: images.len(),
            otfs: otfs.len(),
        });
    }
    Ok(())
}

/// Multi-frame Wiener-like filter `sum H_s* I_s / sum |H_s|^2`; 0/0 bins are zero.
pub fn multiframe_wiener(images: &[Spectrum], otfs: &[Spectrum]) -> Result<Spectrum> {
    check_frames(images, otfs)?;
    let shape = images[0].shape();
    let mut num = Array2::<Complex>::zeros(shape);
    let mut den = Array2::<f64>::zeros(shape);
    for (i, h) in images.iter().zip(otfs) {
        check_shape(shape, i.shape())?;
        check_shape(shape, h.shape())?;
        Zip::from(&mut num)
            .and(&mut den)
            .and(i.as_array())
            .and(h.as_array())
            .for_each(|n, d, &i, &h| {
                *n += h.conj() * i;
                *d += h.norm_sqr();
            });
    }
    thresholded_divide(&Spectrum::from_array_unchecked(num), &den, DivisionThreshold(0.0))
}

/// Weighted multi-frame deconvolution of full-image spectra with one tile's
/// transfer functions and weights; returns the local object estimate.
pub fn weighted_multiframe(images: &[Spectrum], otfs: &[Spectrum], weights: &[f64], epsilon: f64) -> Result<RealImage> {
    check_frames(images, otfs)?;
    if weights.len() != images.len() {
        return Err(Error::FrameCountMismatch {
            images: images.len(),
            otfs: weights.len(),
        });
    }
    let mut acc = WeightedAccumulator::new(images[0].shape());
    for ((i, h), &a) in images.iter().zip(otfs).zip(weights) {
        acc.add(i, h, a)?;
    }
    idft2_real(&acc.finish(epsilon)?)
}

/// Isoplanatism weights `a[p, q, s]`, stored tile-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    tiles: (usize, usize),
    frames: usize,
    values: Vec<f64>,
}

impl WeightTable {
    pub fn uniform(tiles: (usize, usize), frames: usize) -> Self {
        WeightTable {
            tiles,
            frames,
            values: vec![1.0; tiles.0 * tiles.1 * frames],
        }
    }

    pub fn from_values(tiles: (usize, usize), frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != tiles.0 * tiles.1 * frames {
            return Err(Error::InvalidParameter(format!(
                "weight table needs {} values, got {}",
                tiles.0 * tiles.1 * frames,
                values.len()
            )));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidWeight {
                frame: i % frames.max(1),
                value: v,
            });
        }
        Ok(WeightTable { tiles, frames, values })
    }

    pub fn tiles(&self) -> (usize, usize) {
        self.tiles
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn base(&self, p: usize, q: usize) -> usize {
        assert!(p < self.tiles.0 && q < self.tiles.1, "tile ({p}, {q}) out of range");
        (p * self.tiles.1 + q) * self.frames
    }

    pub fn get(&self, p: usize, q: usize, s: usize) -> f64 {
        assert!(s < self.frames);
        self.values[self.base(p, q) + s]
    }

    /// Weights of every frame for tile `(p, q)`.
    pub fn row(&self, p: usize, q: usize) -> &[f64] {
        let b = self.base(p, q);
        &self.values[b..b + self.frames]
    }

    /// `ā_{p,q}`.
    pub fn mean(&self, p: usize, q: usize) -> f64 {
        self.row(p, q).iter().sum::<f64>() / self.frames as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Drop frame `s` from every tile.
    pub fn remove_frame(&mut self, s: usize) {
        let frames = self.frames;
        let mut i = 0;
        self.values.retain(|_| {
            let keep = i % frames != s;
            i += 1;
            keep
        });
        self.frames -= 1;
    }

    /// Append a frame whose weight in each tile is that tile's current mean.
    pub fn push_frame_with_tile_mean(&mut self) {
        let (tv, th) = self.tiles;
        let frames = self.frames;
        let mut values = Vec::with_capacity(tv * th * (frames + 1));
        for t in 0..tv * th {
            let row = &self.values[t * frames..(t + 1) * frames];
            let mean = if frames == 0 {
                1.0
            } else {
                row.iter().sum::<f64>() / frames as f64
            };
            values.extend_from_slice(row);
            values.push(mean);
        }
        self.values = values;
        self.frames += 1;
    }
}
