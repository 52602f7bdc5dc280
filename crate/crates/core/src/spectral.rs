//! Real and complex 2-D arrays, the 2-D DFT, and the centered-kernel
//! convention used for every PSF in the crate.
//!
//! Boundaries are periodic throughout. A full-size kernel has its origin at
//! pixel `(rows / 2, cols / 2)`; [`kernel_spectrum`] rolls that pixel to
//! `(0, 0)` before transforming, so a centered delta has an all-ones
//! spectrum. Compact kernels ([`KernelPatch`]) store a small window of
//! displacements and are what the simulator and the solver keep in memory.

use std::borrow::Cow;
use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// Tolerance on the unit-sum check for per-pixel PSFs.
pub const PSF_SUM_TOLERANCE: f64 = 1e-9;

fn check_nonempty(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyImage { rows, cols });
    }
    Ok(())
}

pub(crate) fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// A finite, non-empty real image indexed `[row, col]`.
#[derive(Clone, PartialEq)]
pub struct RealImage(Array2<f64>);

impl fmt::Debug for RealImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "RealImage({r}x{c}, sum = {})", self.sum())
    }
}

impl RealImage {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        check_nonempty(rows, cols)?;
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(RealImage(data.as_standard_layout().into_owned()))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((rows, cols), f))
    }

    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// Panics if either dimension is zero or `value` is not finite.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        assert!(value.is_finite(), "fill value must be finite");
        RealImage(Array2::from_elem((rows, cols), value))
    }

    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        RealImage(data)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm_l2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Panics if `factor` is not finite.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor.is_finite());
        RealImage(&self.0 * factor)
    }

    pub fn ensure_same_shape(&self, other: &RealImage) -> Result<()> {
        check_shape(self.shape(), other.shape())
    }

    /// Element-wise product.
    pub fn multiply(&self, other: &RealImage) -> Result<RealImage> {
        self.ensure_same_shape(other)?;
        RealImage::new(&self.0 * &other.0)
    }

    /// Circular shift: output pixel `(m + dr, n + dc)` takes input pixel `(m, n)`.
    pub fn rolled(&self, dr: isize, dc: isize) -> RealImage {
        RealImage(roll(&self.0, dr, dc))
    }

    /// Pixel-wise mean of a non-empty set of same-shape images.
    pub fn mean_of(images: &[RealImage]) -> Result<RealImage> {
        let first = images.first().ok_or(Error::EmptyStack)?;
        let mut acc = Array2::<f64>::zeros(first.shape());
        for img in images {
            first.ensure_same_shape(img)?;
            acc += &img.0;
        }
        acc /= images.len() as f64;
        Ok(RealImage(acc))
    }
}

impl Index<(usize, usize)> for RealImage {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[[idx.0, idx.1]]
    }
}

/// Unnormalized 2-D DFT coefficients, same layout as the source image.
#[derive(Clone, PartialEq)]
pub struct Spectrum(Array2<Complex>);

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Spectrum({r}x{c})")
    }
}

impl Spectrum {
    pub fn new(data: Array2<Complex>) -> Result<Self> {
        let (rows, cols) = data.dim();
        check_nonempty(rows, cols)?;
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Spectrum(data.as_standard_layout().into_owned()))
    }

    pub(crate) fn from_array_unchecked(data: Array2<Complex>) -> Self {
        Spectrum(data)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn as_array(&self) -> &Array2<Complex> {
        &self.0
    }

    pub fn into_array(self) -> Array2<Complex> {
        self.0
    }

    pub fn ensure_same_shape(&self, other: &Spectrum) -> Result<()> {
        check_shape(self.shape(), other.shape())
    }

    /// Bin-wise product.
    pub fn multiply(&self, other: &Spectrum) -> Result<Spectrum> {
        self.ensure_same_shape(other)?;
        Ok(Spectrum(&self.0 * &other.0))
    }
}

impl Index<(usize, usize)> for Spectrum {
    type Output = Complex;

    fn index(&self, idx: (usize, usize)) -> &Complex {
        &self.0[[idx.0, idx.1]]
    }
}

/// Circular shift of a 2-D array: `out[(i + dr) mod M, (j + dc) mod N] = a[i, j]`.
pub(crate) fn roll<T: Copy + Default>(a: &Array2<T>, dr: isize, dc: isize) -> Array2<T> {
    let (rows, cols) = a.dim();
    let mut out = Array2::from_elem((rows, cols), T::default());
    let sr = dr.rem_euclid(rows as isize) as usize;
    let sc = dc.rem_euclid(cols as isize) as usize;
    for ((i, j), &v) in a.indexed_iter() {
        out[[(i + sr) % rows, (j + sc) % cols]] = v;
    }
    out
}

/// Cached row and column plans for one image shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Fft2>> = RefCell::new(HashMap::new());
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    /// Plans for `rows x cols`, cached per thread.
    pub fn for_shape(rows: usize, cols: usize) -> Self {
        PLANS.with(|plans| {
            plans
                .borrow_mut()
                .entry((rows, cols))
                .or_insert_with(|| Fft2::new(rows, cols))
                .clone()
        })
    }

    fn transform(&self, data: &mut Array2<Complex>, row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "plan shape mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        row.process(data.as_slice_mut().expect("standard layout"));
        let mut transposed = data.t().as_standard_layout().into_owned();
        col.process(transposed.as_slice_mut().expect("standard layout"));
        data.assign(&transposed.t());
    }

    pub fn forward_in_place(&self, data: &mut Array2<Complex>) {
        self.transform(data, self.row_fwd.as_ref(), self.col_fwd.as_ref());
    }

    /// Inverse transform including the `1 / (M N)` normalization.
    pub fn inverse_in_place(&self, data: &mut Array2<Complex>) {
        self.transform(data, self.row_inv.as_ref(), self.col_inv.as_ref());
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }
}

fn to_complex(a: &Array2<f64>) -> Array2<Complex> {
    a.mapv(|v| Complex::new(v, 0.0))
}

/// Unnormalized forward 2-D DFT.
pub fn dft2(img: &RealImage) -> Spectrum {
    dft2_array(img.as_array())
}

pub(crate) fn dft2_array(a: &Array2<f64>) -> Spectrum {
    let (rows, cols) = a.dim();
    let mut data = to_complex(a);
    Fft2::for_shape(rows, cols).forward_in_place(&mut data);
    Spectrum(data)
}

/// Inverse 2-D DFT, normalized so that `idft2(dft2(x)) == x`.
pub fn idft2(spec: &Spectrum) -> Spectrum {
    let (rows, cols) = spec.shape();
    let mut data = spec.0.clone();
    Fft2::for_shape(rows, cols).inverse_in_place(&mut data);
    Spectrum(data)
}

/// Real part of the inverse DFT.
pub fn idft2_real(spec: &Spectrum) -> Result<RealImage> {
    RealImage::new(idft2(spec).0.mapv(|v| v.re))
}

/// A full-size kernel whose origin sits at pixel `(rows / 2, cols / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredKernel(RealImage);

impl CenteredKernel {
    pub fn new(image: RealImage) -> Self {
        CenteredKernel(image)
    }

    /// Unit impulse at the center pixel.
    pub fn delta(rows: usize, cols: usize) -> Self {
        let mut img = RealImage::zeros(rows, cols);
        img.0[[rows / 2, cols / 2]] = 1.0;
        CenteredKernel(img)
    }

    pub fn center(&self) -> (usize, usize) {
        let (r, c) = self.0.shape();
        (r / 2, c / 2)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn image(&self) -> &RealImage {
        &self.0
    }

    pub fn into_image(self) -> RealImage {
        self.0
    }

    /// The same kernel rolled so that its origin is pixel `(0, 0)`.
    pub fn to_origin(&self) -> RealImage {
        let (r, c) = self.center();
        self.0.rolled(-(r as isize), -(c as isize))
    }

    /// Inverse of [`CenteredKernel::to_origin`].
    pub fn from_origin(img: RealImage) -> Self {
        let (rows, cols) = img.shape();
        CenteredKernel(img.rolled((rows / 2) as isize, (cols / 2) as isize))
    }
}

/// Transfer function of a centered kernel: roll the origin to `(0, 0)`, then DFT.
pub fn kernel_spectrum(k: &CenteredKernel) -> Spectrum {
    dft2(&k.to_origin())
}

/// A compact kernel: `values[[i, j]]` is the weight at displacement
/// `(offset.0 + i, offset.1 + j)` from the kernel origin.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPatch {
    offset: (isize, isize),
    values: Array2<f64>,
}

impl KernelPatch {
    pub fn new(offset: (isize, isize), values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        check_nonempty(rows, cols)?;
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(KernelPatch {
            offset,
            values: values.as_standard_layout().into_owned(),
        })
    }

    /// Patch whose middle pixel `(rows / 2, cols / 2)` is the origin.
    pub fn centered(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        Self::new((-((rows / 2) as isize), -((cols / 2) as isize)), values)
    }

    pub fn delta() -> Self {
        Self::shifted_delta(0, 0)
    }

    pub fn shifted_delta(dr: isize, dc: isize) -> Self {
        KernelPatch {
            offset: (dr, dc),
            values: Array2::from_elem((1, 1), 1.0),
        }
    }

    pub fn offset(&self) -> (isize, isize) {
        self.offset
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `(displacement, weight)` for every nonzero entry.
    pub fn entries(&self) -> impl Iterator<Item = ((isize, isize), f64)> + '_ {
        let (or, oc) = self.offset;
        self.values
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(move |((i, j), &v)| ((or + i as isize, oc + j as isize), v))
    }

    /// Weight at a displacement, zero outside the patch.
    pub fn value_at(&self, dr: isize, dc: isize) -> f64 {
        let i = dr - self.offset.0;
        let j = dc - self.offset.1;
        let (rows, cols) = self.dim();
        if i < 0 || j < 0 || i >= rows as isize || j >= cols as isize {
            0.0
        } else {
            self.values[[i as usize, j as usize]]
        }
    }

    /// Intensity-weighted mean displacement; `None` for zero total mass.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let total = self.sum();
        if total == 0.0 {
            return None;
        }
        let (mut r, mut c) = (0.0, 0.0);
        for ((dr, dc), v) in self.entries() {
            r += dr as f64 * v;
            c += dc as f64 * v;
        }
        Some((r / total, c / total))
    }

    /// Frobenius norm of `self - other` over the union of both supports.
    pub fn frobenius_distance(&self, other: &KernelPatch) -> f64 {
        let (r0, c0) = (self.offset.0.min(other.offset.0), self.offset.1.min(other.offset.1));
        let end = |p: &KernelPatch| {
            let (rows, cols) = p.dim();
            (p.offset.0 + rows as isize, p.offset.1 + cols as isize)
        };
        let (ea, eb) = (end(self), end(other));
        let (r1, c1) = (ea.0.max(eb.0), ea.1.max(eb.1));
        let mut acc = 0.0;
        for dr in r0..r1 {
            for dc in c0..c1 {
                let d = self.value_at(dr, dc) - other.value_at(dr, dc);
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// Origin-at-(0,0) full-size array; displacements wrap periodically.
    pub fn to_origin_array(&self, rows: usize, cols: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((rows, cols));
        for ((dr, dc), v) in self.entries() {
            let i = dr.rem_euclid(rows as isize) as usize;
            let j = dc.rem_euclid(cols as isize) as usize;
            out[[i, j]] += v;
        }
        out
    }

    pub fn to_centered(&self, rows: usize, cols: usize) -> CenteredKernel {
        CenteredKernel::from_origin(RealImage::from_array_unchecked(self.to_origin_array(rows, cols)))
    }

    /// Transfer function at image size `rows x cols`.
    pub fn spectrum(&self, rows: usize, cols: usize) -> Spectrum {
        dft2_array(&self.to_origin_array(rows, cols))
    }

    pub(crate) fn is_normalized_psf(&self) -> Option<f64> {
        let sum = self.sum();
        let ok = self.values.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() <= PSF_SUM_TOLERANCE;
        if ok {
            None
        } else {
            Some(sum)
        }
    }
}

/// Per-source-pixel PSFs for [`convolve_anisoplanatic`].
pub trait PsfProvider {
    /// The PSF of the point source at `(row, col)`.
    fn psf_at(&self, row: usize, col: usize) -> Cow<'_, KernelPatch>;
}

impl<F> PsfProvider for F
where
    F: Fn(usize, usize) -> KernelPatch,
{
    fn psf_at(&self, row: usize, col: usize) -> Cow<'_, KernelPatch> {
        Cow::Owned(self(row, col))
    }
}

/// The same PSF for every source pixel.
#[derive(Debug, Clone)]
pub struct ConstantPsf(pub KernelPatch);

impl PsfProvider for ConstantPsf {
    fn psf_at(&self, _row: usize, _col: usize) -> Cow<'_, KernelPatch> {
        Cow::Borrowed(&self.0)
    }
}

/// Periodic convolution with a centered kernel, evaluated in direct space.
pub fn convolve_direct(o: &RealImage, h: &CenteredKernel) -> Result<RealImage> {
    check_shape(o.shape(), h.shape())?;
    let (rows, cols) = o.shape();
    let (cr, cc) = h.center();
    let mut out = Array2::<f64>::zeros((rows, cols));
    for ((km, kn), &w) in h.image().as_array().indexed_iter() {
        if w == 0.0 {
            continue;
        }
        let dr = (km + rows - cr) % rows;
        let dc = (kn + cols - cc) % cols;
        for ((m, n), &v) in o.as_array().indexed_iter() {
            out[[(m + dr) % rows, (n + dc) % cols]] += v * w;
        }
    }
    RealImage::new(out)
}

/// Space-variant forward model: every source pixel `(k, l)` spreads its
/// intensity with its own PSF, wrapping periodically.
pub fn convolve_anisoplanatic<P: PsfProvider + ?Sized>(o: &RealImage, psfs: &P) -> Result<RealImage> {
    let (rows, cols) = o.shape();
    let (ri, ci) = (rows as isize, cols as isize);
    let mut out = Array2::<f64>::zeros((rows, cols));
    for ((k, l), &v) in o.as_array().indexed_iter() {
        let psf = psfs.psf_at(k, l);
        if let Some(sum) = psf.is_normalized_psf() {
            return Err(Error::InvalidPsf { row: k, col: l, sum });
        }
        if v == 0.0 {
            continue;
        }
        for ((dr, dc), w) in psf.entries() {
            let m = (k as isize + dr).rem_euclid(ri) as usize;
            let n = (l as isize + dc).rem_euclid(ci) as usize;
            out[[m, n]] += v * w;
        }
    }
    RealImage::new(out)
}

/// Apply `f` bin-wise to two same-shape spectra.
pub(crate) fn zip_map(a: &Spectrum, b: &Spectrum, f: impl Fn(Complex, Complex) -> Complex) -> Result<Spectrum> {
    a.ensure_same_shape(b)?;
    let mut out = Array2::<Complex>::zeros(a.shape());
    Zip::from(&mut out).and(&a.0).and(&b.0).for_each(|o, &x, &y| *o = f(x, y));
    Ok(Spectrum(out))
}
