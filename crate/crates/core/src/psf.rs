//! Local PSF estimation and the spatial-domain projections.
//!
//! A local PSF is estimated by dividing a full frame spectrum by the spectrum
//! of the current object apodized around the tile center. The estimate is then
//! projected onto nonnegative, unit-sum kernels supported on a disk whose
//! center follows the kernel's center of mass. Comparing the estimates made
//! with a narrow and a wider apodization gives the isoplanatism weight.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{thresholded_divide_complex, DivisionThreshold};
use crate::spectral::{dft2, idft2_real, CenteredKernel, KernelPatch, RealImage, Spectrum};
use crate::tiling::TileGrid;

/// Gaussian `exp(-((m - c_p)^2 + (n - c_q)^2) / w^2)` on the plain lattice.
#[derive(Debug, Clone)]
pub struct ApodizationKernel {
    center: (usize, usize),
    width: f64,
    image: RealImage,
}

impl ApodizationKernel {
    pub fn new(shape: (usize, usize), center: (usize, usize), width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "apodization width must be positive, got {width}"
            )));
        }
        let w2 = width * width;
        let image = RealImage::from_fn(shape.0, shape.1, |(m, n)| {
            let dm = m as f64 - center.0 as f64;
            let dn = n as f64 - center.1 as f64;
            (-(dm * dm + dn * dn) / w2).exp()
        })?;
        Ok(ApodizationKernel { center, width, image })
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn image(&self) -> &RealImage {
        &self.image
    }

    /// Spectrum of `object * K`.
    pub fn apodized_spectrum(&self, object: &RealImage) -> Result<Spectrum> {
        Ok(dft2(&object.multiply(&self.image)?))
    }
}

/// Apodization kernel centered on tile `(p, q)`.
pub fn apodization_kernel(grid: &TileGrid, p: usize, q: usize, width: f64) -> Result<ApodizationKernel> {
    ApodizationKernel::new(grid.shape(), grid.center(p, q)?, width)
}

/// Single-frame deconvolution of a frame by the apodized object.
pub fn estimate_local_psf(
    image: &Spectrum,
    object: &RealImage,
    kernel: &ApodizationKernel,
    epsilon: f64,
) -> Result<CenteredKernel> {
    estimate_from_apodized_spectrum(image, &kernel.apodized_spectrum(object)?, epsilon)
}

/// As [`estimate_local_psf`], with the apodized object spectrum precomputed.
pub fn estimate_from_apodized_spectrum(image: &Spectrum, apodized: &Spectrum, epsilon: f64) -> Result<CenteredKernel> {
    let alpha = DivisionThreshold::new(epsilon)?;
    if !apodized.as_array().iter().any(|v| v.norm() > epsilon) {
        return Err(Error::ApodizedObjectCollapse { threshold: epsilon });
    }
    let quotient = thresholded_divide_complex(image, apodized, alpha)?;
    Ok(CenteredKernel::from_origin(idft2_real(&quotient)?))
}

/// A projected PSF: nonnegative, unit sum, zero outside its support disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPsf {
    kernel: KernelPatch,
    support_center: (isize, isize),
    radius: usize,
}

impl ProjectedPsf {
    /// Centered delta, the initial PSF of every tile and frame.
    pub fn delta(radius: usize) -> Self {
        ProjectedPsf {
            kernel: KernelPatch::delta(),
            support_center: (0, 0),
            radius,
        }
    }

    pub fn kernel(&self) -> &KernelPatch {
        &self.kernel
    }

    /// Support disk center as a displacement from the kernel origin.
    pub fn support_center(&self) -> (isize, isize) {
        self.support_center
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn to_centered(&self, rows: usize, cols: usize) -> CenteredKernel {
        self.kernel.to_centered(rows, cols)
    }

    pub fn spectrum(&self, rows: usize, cols: usize) -> Spectrum {
        self.kernel.spectrum(rows, cols)
    }

    /// Whether displacement `(dr, dc)` lies inside the support disk.
    pub fn in_support(&self, dr: isize, dc: isize) -> bool {
        in_disk(dr - self.support_center.0, dc - self.support_center.1, self.radius)
    }
}

fn in_disk(dr: isize, dc: isize, radius: usize) -> bool {
    let r = radius as isize;
    dr * dr + dc * dc <= r * r
}

/// Nearest integer; exact halves go toward zero (the array center).
fn round_toward_center(x: f64) -> isize {
    let t = x.trunc();
    if (x - t).abs() == 0.5 {
        t as isize
    } else {
        x.round() as isize
    }
}

/// Clip to nonnegative, place the support disk at the center of mass, zero
/// everything outside it and renormalize to unit sum.
///
/// The disk starts at the centroid of all positive mass and then moves to the
/// centroid of the mass it covers until it settles. A disk that covers no
/// mass is moved to the largest value instead.
pub fn project_psf(estimate: &CenteredKernel, radius: usize) -> Result<ProjectedPsf> {
    project_psf_from(estimate, radius, None)
}

/// As [`project_psf`], with the disk search starting at `start` (a
/// displacement from the kernel origin) instead of the global centroid. Used
/// to let a support follow its PSF from one iteration to the next.
pub fn project_psf_from(estimate: &CenteredKernel, radius: usize, start: Option<(isize, isize)>) -> Result<ProjectedPsf> {
    let img = estimate.image().as_array();
    let (cr, cc) = estimate.center();

    let (mut total, mut sr, mut sc) = (0.0, 0.0, 0.0);
    let mut peak = ((0, 0), 0.0);
    for ((m, n), &v) in img.indexed_iter() {
        if v > 0.0 {
            let (dr, dc) = (m as isize - cr as isize, n as isize - cc as isize);
            total += v;
            sr += v * dr as f64;
            sc += v * dc as f64;
            if v > peak.1 {
                peak = ((dr, dc), v);
            }
        }
    }
    if total == 0.0 {
        return Err(Error::PsfCollapse);
    }
    let start = start.unwrap_or((round_toward_center(sr / total), round_toward_center(sc / total)));
    let center = settle_center(img, (cr, cc), start, radius);
    let (patch, kept) = gather_disk(img, (cr, cc), center, radius);
    let (center, patch, kept) = if kept > 0.0 {
        (center, patch, kept)
    } else {
        let center = settle_center(img, (cr, cc), peak.0, radius);
        let (patch, kept) = gather_disk(img, (cr, cc), center, radius);
        (center, patch, kept)
    };
    Ok(ProjectedPsf {
        kernel: KernelPatch::new(
            (center.0 - radius as isize, center.1 - radius as isize),
            patch.mapv(|v| v / kept),
        )?,
        support_center: center,
        radius,
    })
}

/// Positive values inside the disk, as a `(2r+1)^2` patch, and their sum.
fn gather_disk(img: &Array2<f64>, origin: (usize, usize), center: (isize, isize), radius: usize) -> (Array2<f64>, f64) {
    let (rows, cols) = img.dim();
    let size = 2 * radius + 1;
    let offset = (center.0 - radius as isize, center.1 - radius as isize);
    let mut patch = Array2::<f64>::zeros((size, size));
    let mut kept = 0.0;
    for i in 0..size {
        for j in 0..size {
            let (dr, dc) = (offset.0 + i as isize, offset.1 + j as isize);
            if !in_disk(dr - center.0, dc - center.1, radius) {
                continue;
            }
            let (m, n) = (dr + origin.0 as isize, dc + origin.1 as isize);
            if m < 0 || n < 0 || m >= rows as isize || n >= cols as isize {
                continue;
            }
            let v = img[[m as usize, n as usize]];
            if v > 0.0 {
                patch[[i, j]] = v;
                kept += v;
            }
        }
    }
    (patch, kept)
}

/// Moves the disk center to the centroid of the positive mass it covers until
/// it stops moving.
fn settle_center(img: &Array2<f64>, origin: (usize, usize), start: (isize, isize), radius: usize) -> (isize, isize) {
    let (rows, cols) = img.dim();
    let r = radius as isize;
    let mut center = start;
    let mut visited = vec![center];
    loop {
        let (mut total, mut sr, mut sc) = (0.0, 0.0, 0.0);
        for dr in center.0 - r..=center.0 + r {
            for dc in center.1 - r..=center.1 + r {
                if !in_disk(dr - center.0, dc - center.1, radius) {
                    continue;
                }
                let (m, n) = (dr + origin.0 as isize, dc + origin.1 as isize);
                if m < 0 || n < 0 || m >= rows as isize || n >= cols as isize {
                    continue;
                }
                let v = img[[m as usize, n as usize]];
                if v > 0.0 {
                    total += v;
                    sr += v * dr as f64;
                    sc += v * dc as f64;
                }
            }
        }
        if total == 0.0 {
            return center;
        }
        let next = (round_toward_center(sr / total), round_toward_center(sc / total));
        if visited.contains(&next) {
            return next;
        }
        visited.push(next);
        center = next;
    }
}

/// Clip to nonnegative and normalize to unit L1 norm.
pub fn project_object(estimate: &RealImage) -> Result<RealImage> {
    let clipped = estimate.as_array().mapv(|v| v.max(0.0));
    let total: f64 = clipped.sum();
    if total == 0.0 {
        return Err(Error::ObjectCollapse);
    }
    RealImage::new(clipped / total)
}

/// Sensitivity `p_s` and the cap applied where the two estimates coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoplanatismParams {
    pub sensitivity: f64,
    pub weight_cap: f64,
}

impl Default for IsoplanatismParams {
    fn default() -> Self {
        IsoplanatismParams {
            sensitivity: 1.5,
            weight_cap: 1e12,
        }
    }
}

impl IsoplanatismParams {
    pub fn new(sensitivity: f64, weight_cap: f64) -> Result<Self> {
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "isoplanatism sensitivity must be positive, got {sensitivity}"
            )));
        }
        if !(weight_cap > 0.0) || !weight_cap.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "weight cap must be positive and finite, got {weight_cap}"
            )));
        }
        Ok(IsoplanatismParams {
            sensitivity,
            weight_cap,
        })
    }
}

/// `min(||h - h~||_F^(-2 p_s), cap)`.
pub fn compute_weight(psf: &KernelPatch, complementary: &KernelPatch, params: IsoplanatismParams) -> f64 {
    let d = psf.frobenius_distance(complementary);
    if d == 0.0 {
        return params.weight_cap;
    }
    d.powf(-2.0 * params.sensitivity).min(params.weight_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{convolve_direct, kernel_spectrum};
    use crate::tiling::build_grid;
    use approx::assert_abs_diff_eq;

    fn point_kernel(rows: usize, cols: usize, points: &[((usize, usize), f64)]) -> CenteredKernel {
        let mut a = Array2::<f64>::zeros((rows, cols));
        for &((m, n), v) in points {
            a[[m, n]] = v;
        }
        CenteredKernel::new(RealImage::new(a).unwrap())
    }

    fn assert_feasible(p: &ProjectedPsf) {
        assert!(p.kernel().values().iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(p.kernel().sum(), 1.0, epsilon = 1e-12);
        for ((dr, dc), _) in p.kernel().entries() {
            assert!(p.in_support(dr, dc));
        }
    }

    #[test]
    fn apodization_values() {
        let grid = build_grid(128, 128, 2, 2).unwrap();
        let k = apodization_kernel(&grid, 0, 1, 35.0).unwrap();
        let (cm, cn) = k.center();
        assert_eq!(k.image()[(cm, cn)], 1.0);
        assert_abs_diff_eq!(k.image()[(cm + 35, cn)], (-1.0f64).exp(), epsilon = 1e-15);
        assert!(k.image().min() > 0.0);
        assert_eq!(k.image()[(cm + 3, cn - 4)], k.image()[(cm - 4, cn + 3)]);
        assert!(ApodizationKernel::new((8, 8), (4, 4), 0.0).is_err());
    }

    #[test]
    fn single_pixel_mass_is_kept() {
        let k = point_kernel(32, 40, &[((10, 20), 3.0)]);
        let p = project_psf(&k, 6).unwrap();
        assert_eq!(p.support_center(), (10 - 16, 0));
        assert_eq!(p.kernel().centroid(), Some((-6.0, 0.0)));
        assert_feasible(&p);
        let back = p.to_centered(32, 40);
        assert_eq!(back.image()[(10, 20)], 1.0);
    }

    #[test]
    fn separated_masses_are_clipped_around_the_midpoint() {
        // Equal masses 2r + 4 apart: both fall outside the disk at the
        // midpoint, so the disk moves to the first of the two peaks.
        let r = 3;
        let k = point_kernel(32, 32, &[((16, 11), 1.0), ((16, 21), 1.0)]);
        let p = project_psf(&k, r).unwrap();
        assert_eq!(p.support_center(), (0, -5));
        assert_eq!(p.kernel().value_at(0, -5), 1.0);
        assert_feasible(&p);

        // Add mass near the midpoint: survivors are renormalized.
        let k = point_kernel(32, 32, &[((16, 11), 1.0), ((16, 21), 1.0), ((16, 16), 0.5), ((17, 16), 0.5)]);
        let p = project_psf(&k, r).unwrap();
        assert_eq!(p.support_center(), (0, 0));
        assert_abs_diff_eq!(p.kernel().value_at(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.kernel().value_at(1, 0), 0.5, epsilon = 1e-15);
        assert_feasible(&p);
    }

    #[test]
    fn projection_clips_negative_values() {
        let k = point_kernel(16, 16, &[((8, 8), 2.0), ((8, 9), -1.0), ((9, 8), 2.0)]);
        let p = project_psf(&k, 2).unwrap();
        assert_eq!(p.kernel().value_at(0, 1), 0.0);
        assert_feasible(&p);
        let zero = point_kernel(8, 8, &[((1, 1), -1.0)]);
        assert!(matches!(project_psf(&zero, 2), Err(Error::PsfCollapse)));
    }

    #[test]
    fn centroid_ties_round_toward_center() {
        assert_eq!(round_toward_center(2.5), 2);
        assert_eq!(round_toward_center(-2.5), -2);
        assert_eq!(round_toward_center(2.6), 3);
        assert_eq!(round_toward_center(-0.4), 0);
    }

    #[test]
    fn support_follows_delta() {
        for &(m, n) in &[(0, 0), (3, 30), (20, 5), (31, 31)] {
            let k = point_kernel(32, 32, &[((m, n), 1.0)]);
            let p = project_psf(&k, 4).unwrap();
            assert_eq!(p.support_center(), (m as isize - 16, n as isize - 16));
        }
    }

    #[test]
    fn recovers_compact_psf_from_delta_object() {
        let (rows, cols) = (32, 32);
        let mut v = Array2::<f64>::zeros((5, 5));
        v[[2, 2]] = 0.4;
        v[[1, 2]] = 0.2;
        v[[2, 3]] = 0.25;
        v[[3, 1]] = 0.15;
        let truth = KernelPatch::centered(v).unwrap();
        let o = CenteredKernel::delta(rows, cols).into_image();
        let image = convolve_direct(&o, &truth.to_centered(rows, cols)).unwrap();
        let k = ApodizationKernel::new((rows, cols), (16, 16), 1e6).unwrap();
        let est = estimate_local_psf(&dft2(&image), &o, &k, 1e-12).unwrap();
        let p = project_psf(&est, 3).unwrap();
        assert!(p.kernel().frobenius_distance(&truth) < 1e-4);
    }

    #[test]
    fn collapsed_apodized_object_is_reported() {
        let o = RealImage::zeros(8, 8);
        let k = ApodizationKernel::new((8, 8), (4, 4), 3.0).unwrap();
        let i = kernel_spectrum(&CenteredKernel::delta(8, 8));
        assert!(matches!(
            estimate_local_psf(&i, &o, &k, 1e-6),
            Err(Error::ApodizedObjectCollapse { .. })
        ));
    }

    #[test]
    fn weight_formula_and_cap() {
        let params = IsoplanatismParams::new(1.5, 1e12).unwrap();
        let h = KernelPatch::delta();
        let mut v = Array2::<f64>::zeros((1, 2));
        v[[0, 0]] = 1.0 - 0.1 / 2f64.sqrt();
        v[[0, 1]] = 0.1 / 2f64.sqrt();
        let ht = KernelPatch::new((0, 0), v).unwrap();
        assert_abs_diff_eq!(h.frobenius_distance(&ht), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(compute_weight(&h, &ht, params), 1000.0, epsilon = 1e-9);
        assert_eq!(compute_weight(&h, &h, params), 1e12);
        assert!(IsoplanatismParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn object_projection_examples() {
        let o = RealImage::new(Array2::from_shape_vec((1, 2), vec![-1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(project_object(&o).unwrap().as_array().as_slice().unwrap(), &[0.0, 1.0]);
        let o = RealImage::new(Array2::from_shape_vec((1, 2), vec![0.5, 1.5]).unwrap()).unwrap();
        assert_eq!(project_object(&o).unwrap().as_array().as_slice().unwrap(), &[0.25, 0.75]);
        assert!(matches!(
            project_object(&RealImage::filled(2, 2, -1.0)),
            Err(Error::ObjectCollapse)
        ));
    }
}
