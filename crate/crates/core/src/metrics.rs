//! Image quality metrics: Fourier ring correlation with the 2σ criterion, and SSIM.

use std::io::{self, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dft2, idft2, Complex, RealImage, Spectrum};

/// One annulus of DFT bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrcRing {
    pub ring: usize,
    /// Number of bins `n_r` whose rounded radius is `ring`.
    pub pixels: usize,
    /// Normalized complex correlation; `None` for empty rings, zero when
    /// either image has no power in the ring.
    pub correlation: Option<Complex>,
    /// 2σ reference value for this ring.
    pub threshold: f64,
    /// Ring lies beyond the inscribed circle and is only partly sampled.
    pub partial: bool,
}

impl FrcRing {
    /// Real part of the correlation.
    pub fn frc(&self) -> Option<f64> {
        self.correlation.map(|c| c.re)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrcCurve {
    pub rings: Vec<FrcRing>,
}

/// `2 / sqrt(n / 2)`; infinite for an empty ring.
pub fn two_sigma_threshold(pixels: usize) -> f64 {
    if pixels == 0 {
        f64::INFINITY
    } else {
        2.0 / (pixels as f64 / 2.0).sqrt()
    }
}

/// Signed-frequency magnitude of DFT index `k` on an axis of length `n`.
fn frequency(k: usize, n: usize) -> usize {
    k.min(n - k)
}

/// Rounded radial distance of every bin from DC.
pub fn ring_indices(rows: usize, cols: usize) -> Array2<usize> {
    Array2::from_shape_fn((rows, cols), |(u, v)| {
        let fu = frequency(u, rows) as f64;
        let fv = frequency(v, cols) as f64;
        (fu * fu + fv * fv).sqrt().round() as usize
    })
}

fn frc_from_spectra(a: &Spectrum, b: &Spectrum) -> FrcCurve {
    let (rows, cols) = a.shape();
    let rings = ring_indices(rows, cols);
    let count = rings.iter().copied().max().unwrap_or(0) + 1;
    let mut cross = vec![Complex::new(0.0, 0.0); count];
    let mut pa = vec![0.0; count];
    let mut pb = vec![0.0; count];
    let mut pixels = vec![0usize; count];
    for (((u, v), &r), &x) in rings.indexed_iter().zip(a.as_array().iter()) {
        let y = b.as_array()[[u, v]];
        cross[r] += x * y.conj();
        pa[r] += x.norm_sqr();
        pb[r] += y.norm_sqr();
        pixels[r] += 1;
    }
    let inscribed = rows.min(cols) / 2;
    let rings = (0..count)
        .map(|r| {
            let den = (pa[r] * pb[r]).sqrt();
            let correlation = (pixels[r] > 0).then(|| {
                if den > 0.0 {
                    cross[r] / den
                } else {
                    Complex::new(0.0, 0.0)
                }
            });
            FrcRing {
                ring: r,
                pixels: pixels[r],
                correlation,
                threshold: two_sigma_threshold(pixels[r]),
                partial: r > inscribed,
            }
        })
        .collect();
    FrcCurve { rings }
}

/// Fourier ring correlation between a reference and an estimate.
pub fn frc(reference: &RealImage, estimate: &RealImage) -> Result<FrcCurve> {
    reference.ensure_same_shape(estimate)?;
    Ok(frc_from_spectra(&dft2(reference), &dft2(estimate)))
}

impl FrcCurve {
    /// Largest ring `r` such that every informative ring `1..=r` reaches its
    /// 2σ threshold. Ring 0 (DC) always counts. Rings that are empty, or whose
    /// threshold is at least 1 and is not reached, are skipped.
    pub fn rn_max(&self) -> usize {
        let mut best = 0;
        for ring in self.rings.iter().skip(1) {
            let Some(v) = ring.frc() else { continue };
            if v >= ring.threshold {
                best = ring.ring;
            } else if ring.threshold < 1.0 {
                break;
            }
        }
        best
    }

    pub fn two_sigma_curve(&self) -> Vec<f64> {
        self.rings.iter().map(|r| r.threshold).collect()
    }

    /// CSV with columns `ring,n_r,frc,threshold`; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "ring,n_r,frc,threshold")?;
        for r in &self.rings {
            let frc = r.frc().map(|v| v.to_string()).unwrap_or_default();
            let thr = if r.threshold.is_finite() {
                r.threshold.to_string()
            } else {
                String::new()
            };
            writeln!(out, "{},{},{},{}", r.ring, r.pixels, frc, thr)?;
        }
        Ok(())
    }
}

pub fn two_sigma_curve(curve: &FrcCurve) -> Vec<f64> {
    curve.two_sigma_curve()
}

pub fn rn_max(curve: &FrcCurve) -> usize {
    curve.rn_max()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsimWindow {
    Gaussian { size: usize, sigma: f64 },
    Box { size: usize },
}

impl SsimWindow {
    fn weights(self) -> Result<Array2<f64>> {
        let w = match self {
            SsimWindow::Gaussian { size, sigma } => {
                if size == 0 || !(sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian SSIM window needs size > 0 and sigma > 0, got {size}, {sigma}"
                    )));
                }
                let c = (size as f64 - 1.0) / 2.0;
                Array2::from_shape_fn((size, size), |(i, j)| {
                    let (di, dj) = (i as f64 - c, j as f64 - c);
                    (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
                })
            }
            SsimWindow::Box { size } => {
                if size == 0 {
                    return Err(Error::InvalidParameter("box SSIM window needs size > 0".into()));
                }
                Array2::from_elem((size, size), 1.0)
            }
        };
        let total = w.sum();
        Ok(w / total)
    }

    fn size(self) -> usize {
        match self {
            SsimWindow::Gaussian { size, .. } | SsimWindow::Box { size } => size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: SsimWindow,
    pub dynamic_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: SsimWindow::Gaussian { size: 11, sigma: 1.5 },
            dynamic_range: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Local SSIM at every position where the window fits entirely inside the image.
pub fn ssim_map(a: &RealImage, b: &RealImage, params: &SsimParams) -> Result<RealImage> {
    a.ensure_same_shape(b)?;
    let w = params.window.weights()?;
    let size = params.window.size();
    let (rows, cols) = a.shape();
    if rows < size || cols < size {
        return Err(Error::InvalidParameter(format!(
            "SSIM window of {size} does not fit a {rows}x{cols} image"
        )));
    }
    let (c1, c2) = (params.c1(), params.c2());
    let (x, y) = (a.as_array(), b.as_array());
    let map = Array2::from_shape_fn((rows - size + 1, cols - size + 1), |(i, j)| {
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((di, dj), &wt) in w.indexed_iter() {
            let xv = x[[i + di, j + dj]];
            let yv = y[[i + di, j + dj]];
            mx += wt * xv;
            my += wt * yv;
            sxx += wt * xv * xv;
            syy += wt * yv * yv;
            sxy += wt * (xv * yv);
        }
        let vx = sxx - mx * mx;
        let vy = syy - my * my;
        let cov = sxy - mx * my;
        ((2.0 * (mx * my) + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    });
    RealImage::new(map)
}

/// Mean of [`ssim_map`].
pub fn ssim(a: &RealImage, b: &RealImage, params: &SsimParams) -> Result<f64> {
    let map = ssim_map(a, b, params)?;
    Ok(map.sum() / map.len() as f64)
}

/// Circular shift `d` maximizing `sum_x reference[x + d] * estimate[x]`
/// (means removed). Shifts are reported in `(-M/2, M/2]`.
pub fn best_shift(estimate: &RealImage, reference: &RealImage) -> Result<(isize, isize)> {
    reference.ensure_same_shape(estimate)?;
    let centered = |img: &RealImage| {
        let mean = img.sum() / img.len() as f64;
        RealImage::from_array_unchecked(img.as_array() - mean)
    };
    let r = dft2(&centered(reference));
    let e = dft2(&centered(estimate));
    let product = Spectrum::from_array_unchecked(
        ndarray::Zip::from(r.as_array())
            .and(e.as_array())
            .map_collect(|&x, &y| x * y.conj()),
    );
    let corr = idft2(&product);
    let (rows, cols) = reference.shape();
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for ((i, j), v) in corr.as_array().indexed_iter() {
        if v.re > best.1 {
            best = ((i, j), v.re);
        }
    }
    let signed = |k: usize, n: usize| if k > n / 2 { k as isize - n as isize } else { k as isize };
    Ok((signed(best.0 .0, rows), signed(best.0 .1, cols)))
}

/// Estimate shifted onto the reference and scaled to the reference's total flux.
pub fn align_to_reference(estimate: &RealImage, reference: &RealImage) -> Result<RealImage> {
    let (dr, dc) = best_shift(estimate, reference)?;
    let shifted = estimate.rolled(dr, dc);
    let sum = shifted.sum();
    if sum == 0.0 {
        return Ok(shifted);
    }
    Ok(shifted.scaled(reference.sum() / sum))
}

/// Periodic translation by a fractional displacement, applied as a phase ramp.
pub fn fourier_shift(img: &RealImage, shift: (f64, f64)) -> RealImage {
    let (rows, cols) = img.shape();
    let spec = dft2(img);
    let ramp = |k: usize, n: usize, d: f64| {
        let f = if 2 * k == n {
            0.0
        } else if k > n / 2 {
            k as f64 - n as f64
        } else {
            k as f64
        };
        -2.0 * std::f64::consts::PI * f * d / n as f64
    };
    let shifted = Array2::from_shape_fn((rows, cols), |(u, v)| {
        let phase = ramp(u, rows, shift.0) + ramp(v, cols, shift.1);
        spec[(u, v)] * Complex::from_polar(1.0, phase)
    });
    let out = idft2(&Spectrum::from_array_unchecked(shifted));
    RealImage::from_array_unchecked(out.as_array().mapv(|c| c.re))
}

/// Sum of squared differences between the flux-matched, shifted estimate and
/// the reference, evaluated on the spectra.
fn shifted_residual(e: &Spectrum, r: &Spectrum, scale: f64, shift: (f64, f64)) -> f64 {
    let (rows, cols) = e.shape();
    let mut total = 0.0;
    for ((u, v), &x) in e.as_array().indexed_iter() {
        let fu = if u > rows / 2 { u as f64 - rows as f64 } else { u as f64 };
        let fv = if v > cols / 2 { v as f64 - cols as f64 } else { v as f64 };
        let phase = -2.0 * std::f64::consts::PI * (fu * shift.0 / rows as f64 + fv * shift.1 / cols as f64);
        total += (x * Complex::from_polar(scale, phase) - r[(u, v)]).norm_sqr();
    }
    total
}

/// Fractional shift minimizing the residual to the reference, refined around
/// the best integer shift to within 0.005 pixels.
pub fn best_subpixel_shift(estimate: &RealImage, reference: &RealImage) -> Result<(f64, f64)> {
    let (dr, dc) = best_shift(estimate, reference)?;
    let e = dft2(estimate);
    let r = dft2(reference);
    let scale = flux_ratio(estimate, reference);
    let mut best = (dr as f64, dc as f64);
    let mut best_value = shifted_residual(&e, &r, scale, best);
    let mut step = 0.25;
    while step >= 0.005 {
        let center = best;
        for i in -4..=4 {
            for j in -4..=4 {
                let cand = (center.0 + i as f64 * step, center.1 + j as f64 * step);
                let value = shifted_residual(&e, &r, scale, cand);
                if value < best_value {
                    best = cand;
                    best_value = value;
                }
            }
        }
        step /= 4.0;
    }
    Ok(best)
}

fn flux_ratio(estimate: &RealImage, reference: &RealImage) -> f64 {
    let sum = estimate.sum();
    if sum == 0.0 {
        1.0
    } else {
        reference.sum() / sum
    }
}

/// As [`align_to_reference`], with a fractional shift.
pub fn align_subpixel(estimate: &RealImage, reference: &RealImage) -> Result<RealImage> {
    let shift = best_subpixel_shift(estimate, reference)?;
    Ok(fourier_shift(estimate, shift).scaled(flux_ratio(estimate, reference)))
}

/// `||estimate - reference||_2 / ||reference||_2`.
pub fn relative_l2_error(estimate: &RealImage, reference: &RealImage) -> Result<f64> {
    reference.ensure_same_shape(estimate)?;
    let diff = (estimate.as_array() - reference.as_array()).mapv(|v| v * v).sum().sqrt();
    Ok(diff / reference.norm_l2())
}
