//! Synthetic space-variant blur.
//!
//! A [`PsfField`] holds a coarse grid of anchor PSFs; the PSF of any source
//! pixel is the bilinear blend of the four surrounding anchors, so it stays
//! nonnegative with unit sum. Translated anchors produce morph between frames.
//! Frames are formed by direct space-variant summation plus seeded Gaussian
//! noise.

use std::borrow::Cow;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::ImageStack;
use crate::error::{Error, Result};
use crate::spectral::{convolve_anisoplanatic, KernelPatch, PsfProvider, RealImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PsfField {
    shape: (usize, usize),
    grid: (usize, usize),
    offset: (isize, isize),
    anchors: Vec<Array2<f64>>,
}

/// Anchors in row-major order on an `grid.0 x grid.1` lattice covering `shape`.
pub fn make_psf_field(anchors: &[KernelPatch], grid: (usize, usize), shape: (usize, usize)) -> Result<PsfField> {
    if grid.0 == 0 || grid.1 == 0 || anchors.len() != grid.0 * grid.1 {
        return Err(Error::InvalidParameter(format!(
            "{} anchors do not fill a {}x{} anchor grid",
            anchors.len(),
            grid.0,
            grid.1
        )));
    }
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::EmptyImage {
            rows: shape.0,
            cols: shape.1,
        });
    }
    for (i, a) in anchors.iter().enumerate() {
        if let Some(sum) = a.is_normalized_psf() {
            return Err(Error::InvalidPsf {
                row: i / grid.1,
                col: i % grid.1,
                sum,
            });
        }
    }
    // Embed every anchor in the union of their supports.
    let lo = anchors.iter().fold((isize::MAX, isize::MAX), |acc, a| {
        (acc.0.min(a.offset().0), acc.1.min(a.offset().1))
    });
    let hi = anchors.iter().fold((isize::MIN, isize::MIN), |acc, a| {
        let (r, c) = a.dim();
        (acc.0.max(a.offset().0 + r as isize), acc.1.max(a.offset().1 + c as isize))
    });
    let dim = ((hi.0 - lo.0) as usize, (hi.1 - lo.1) as usize);
    let anchors = anchors
        .iter()
        .map(|a| Array2::from_shape_fn(dim, |(i, j)| a.value_at(lo.0 + i as isize, lo.1 + j as isize)))
        .collect();
    Ok(PsfField {
        shape,
        grid,
        offset: lo,
        anchors,
    })
}

/// Interpolation segment and fraction along one axis.
fn axis_weights(x: usize, extent: usize, anchors: usize) -> (usize, usize, f64) {
    if anchors == 1 {
        return (0, 0, 0.0);
    }
    let spacing = extent as f64 / anchors as f64;
    let t = ((x as f64 - 0.5 * spacing) / spacing).clamp(0.0, (anchors - 1) as f64);
    let a0 = (t.floor() as usize).min(anchors - 2);
    (a0, a0 + 1, t - a0 as f64)
}

impl PsfField {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn anchor_grid(&self) -> (usize, usize) {
        self.grid
    }

    /// Pixel coordinates of anchor `(a, b)`.
    pub fn anchor_position(&self, a: usize, b: usize) -> (f64, f64) {
        (
            (a as f64 + 0.5) * self.shape.0 as f64 / self.grid.0 as f64,
            (b as f64 + 0.5) * self.shape.1 as f64 / self.grid.1 as f64,
        )
    }

    pub fn anchor(&self, a: usize, b: usize) -> KernelPatch {
        KernelPatch::new(self.offset, self.anchors[a * self.grid.1 + b].clone()).expect("anchors are finite")
    }

    /// Bilinear blend of the anchors around source pixel `(row, col)`.
    pub fn psf_at_pixel(&self, row: usize, col: usize) -> KernelPatch {
        let (a0, a1, fa) = axis_weights(row, self.shape.0, self.grid.0);
        let (b0, b1, fb) = axis_weights(col, self.shape.1, self.grid.1);
        let at = |a: usize, b: usize| &self.anchors[a * self.grid.1 + b];
        let mut values = at(a0, b0) * ((1.0 - fa) * (1.0 - fb));
        for (a, b, w) in [(a0, b1, (1.0 - fa) * fb), (a1, b0, fa * (1.0 - fb)), (a1, b1, fa * fb)] {
            if w != 0.0 {
                values.scaled_add(w, at(a, b));
            }
        }
        KernelPatch::new(self.offset, values).expect("convex blend of finite anchors")
    }
}

impl PsfProvider for PsfField {
    fn psf_at(&self, row: usize, col: usize) -> Cow<'_, KernelPatch> {
        Cow::Owned(self.psf_at_pixel(row, col))
    }
}

/// Additive white Gaussian noise. The same seed gives the same standard
/// normal draws at every `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { sigma: 0.0, seed: 0 }
    }
}

/// Space-variant blur plus noise. Negative pixels from noise are kept.
pub fn blur_frame(object: &RealImage, field: &PsfField, noise: NoiseModel) -> Result<RealImage> {
    if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be finite and >= 0, got {}",
            noise.sigma
        )));
    }
    crate::spectral::check_shape(field.shape(), object.shape())?;
    let blurred = convolve_anisoplanatic(object, field)?;
    if noise.sigma == 0.0 {
        return Ok(blurred);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let noisy = blurred.as_array().mapv(|v| {
        let z: f64 = rng.sample(StandardNormal);
        v + noise.sigma * z
    });
    RealImage::new(noisy)
}

/// Parameters of randomly drawn anchor PSFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub anchor_rows: usize,
    pub anchor_cols: usize,
    /// Range of the Gaussian standard deviation, in pixels.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Largest anchor translation in pixels.
    pub max_shift: f64,
    /// Fraction of pixels dropped by a random binary mask (0 disables it).
    #[serde(default)]
    pub mask_fraction: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            anchor_rows: 4,
            anchor_cols: 4,
            sigma_min: 1.0,
            sigma_max: 3.0,
            max_shift: 4.0,
            mask_fraction: 0.0,
        }
    }
}

impl FieldParams {
    fn validate(&self) -> Result<()> {
        let ok = self.anchor_rows > 0
            && self.anchor_cols > 0
            && self.sigma_min > 0.0
            && self.sigma_max >= self.sigma_min
            && self.sigma_max.is_finite()
            && self.max_shift >= 0.0
            && self.max_shift.is_finite()
            && (0.0..1.0).contains(&self.mask_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid PSF field parameters {self:?}")))
        }
    }

    /// Half-width of every anchor patch.
    pub fn patch_radius(&self) -> usize {
        (self.max_shift + 4.0 * self.sigma_max).ceil() as usize
    }
}

/// A Gaussian blob with random width and translation, optionally masked.
pub fn random_anchor<R: Rng + ?Sized>(params: &FieldParams, rng: &mut R) -> Result<KernelPatch> {
    params.validate()?;
    let sigma = rng.random_range(params.sigma_min..=params.sigma_max);
    let (sr, sc) = loop {
        let r = rng.random_range(-1.0..=1.0);
        let c = rng.random_range(-1.0..=1.0);
        if r * r + c * c <= 1.0 {
            break (r * params.max_shift, c * params.max_shift);
        }
    };
    let radius = params.patch_radius() as isize;
    let size = (2 * radius + 1) as usize;
    let mut values = Array2::from_shape_fn((size, size), |(i, j)| {
        let dr = i as f64 - radius as f64 - sr;
        let dc = j as f64 - radius as f64 - sc;
        (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
    });
    if params.mask_fraction > 0.0 {
        let peak = ((radius as f64 + sr).round() as usize, (radius as f64 + sc).round() as usize);
        for ((i, j), v) in values.indexed_iter_mut() {
            if (i, j) != peak && rng.random::<f64>() < params.mask_fraction {
                *v = 0.0;
            }
        }
    }
    let total = values.sum();
    KernelPatch::centered(values / total)
}

/// Produces one PSF field per frame from a per-frame seed.
pub trait FieldGenerator: Sync {
    fn generate(&self, shape: (usize, usize), seed: u64) -> Result<PsfField>;
}

/// Independent random anchors for every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFieldGenerator(pub FieldParams);

impl FieldGenerator for RandomFieldGenerator {
    fn generate(&self, shape: (usize, usize), seed: u64) -> Result<PsfField> {
        let params = &self.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchors = (0..params.anchor_rows * params.anchor_cols)
            .map(|_| random_anchor(params, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        make_psf_field(&anchors, (params.anchor_rows, params.anchor_cols), shape)
    }
}

/// The identity blur.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeltaFieldGenerator;

impl FieldGenerator for DeltaFieldGenerator {
    fn generate(&self, shape: (usize, usize), _seed: u64) -> Result<PsfField> {
        make_psf_field(&[KernelPatch::delta()], (1, 1), shape)
    }
}

impl<F> FieldGenerator for F
where
    F: Fn((usize, usize), u64) -> Result<PsfField> + Sync,
{
    fn generate(&self, shape: (usize, usize), seed: u64) -> Result<PsfField> {
        self(shape, seed)
    }
}

/// Seeds used for one simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub field_seed: u64,
    pub noise_seed: u64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedStack {
    pub stack: ImageStack,
    pub records: Vec<FrameRecord>,
}

/// Per-frame `(field_seed, noise_seed)` drawn in order from the master seed.
pub fn frame_seeds(master_seed: u64, frames: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    (0..frames).map(|_| (rng.next_u64(), rng.next_u64())).collect()
}

/// `frames` observations of `object`, each with its own field and noise.
pub fn make_stack<G: FieldGenerator + ?Sized>(
    object: &RealImage,
    frames: usize,
    generator: &G,
    noise_sigma: f64,
    master_seed: u64,
) -> Result<SimulatedStack> {
    if frames == 0 {
        return Err(Error::EmptyStack);
    }
    let records: Vec<FrameRecord> = frame_seeds(master_seed, frames)
        .into_iter()
        .enumerate()
        .map(|(index, (field_seed, noise_seed))| FrameRecord {
            index,
            field_seed,
            noise_seed,
            sigma: noise_sigma,
        })
        .collect();
    let images = records
        .par_iter()
        .map(|r| {
            let field = generator.generate(object.shape(), r.field_seed)?;
            blur_frame(
                object,
                &field,
                NoiseModel {
                    sigma: r.sigma,
                    seed: r.noise_seed,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedStack {
        stack: ImageStack::new(images)?,
        records,
    })
}

/// A dense synthetic scene in `[0, 1]`: a shaded background with overlapping
/// rectangles, ellipses and gratings.
pub fn test_object(rows: usize, cols: usize, seed: u64) -> Result<RealImage> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyImage { rows, cols });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fr, fc) = (rows as f64, cols as f64);
    let mut img = Array2::from_shape_fn((rows, cols), |(m, n)| {
        0.25 + 0.2 * (m as f64 / fr) + 0.1 * (n as f64 / fc)
    });
    let shapes = ((rows * cols) as f64 / 250.0).ceil() as usize;
    for _ in 0..shapes {
        let cm = rng.random_range(0.0..fr);
        let cn = rng.random_range(0.0..fc);
        let hm = rng.random_range(2.0..(fr / 6.0).max(3.0));
        let hn = rng.random_range(2.0..(fc / 6.0).max(3.0));
        let level = rng.random_range(0.05..0.95);
        let kind = rng.random_range(0..3);
        let period = rng.random_range(3.0..9.0);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        for ((m, n), v) in img.indexed_iter_mut() {
            let dm = (m as f64 - cm) / hm;
            let dn = (n as f64 - cn) / hn;
            let inside = match kind {
                0 => dm.abs() <= 1.0 && dn.abs() <= 1.0,
                _ => dm * dm + dn * dn <= 1.0,
            };
            if inside {
                *v = if kind == 2 {
                    let phase = (m as f64 * angle.cos() + n as f64 * angle.sin()) * 2.0 * std::f64::consts::PI / period;
                    level + 0.15 * phase.sin()
                } else {
                    level
                };
            }
        }
    }
    RealImage::new(img.mapv(|v| v.clamp(0.0, 1.0)))
}
