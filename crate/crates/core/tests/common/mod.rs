#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tip4aw::simulate::{make_psf_field, PsfField};
use tip4aw::{CenteredKernel, KernelPatch, RealImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealImage {
    RealImage::new(Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())).unwrap()
}

/// Uniform random values on the disk of `radius`, normalized to unit sum.
pub fn random_disk_psf(radius: usize, rng: &mut ChaCha8Rng) -> KernelPatch {
    let r = radius as f64;
    let size = 2 * radius + 1;
    let v = Array2::from_shape_fn((size, size), |(i, j)| {
        let (dr, dc) = (i as f64 - r, j as f64 - r);
        if dr * dr + dc * dc > r * r {
            0.0
        } else {
            rng.random::<f64>()
        }
    });
    let s = v.sum();
    KernelPatch::centered(v / s).unwrap()
}

/// A full-size centered kernel with random nonnegative values.
pub fn random_centered_kernel(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CenteredKernel {
    CenteredKernel::new(random_image(rows, cols, rng))
}

/// A frame generator whose fields are a single random disk PSF.
pub fn isoplanatic_generator(radius: usize) -> impl Fn((usize, usize), u64) -> tip4aw::Result<PsfField> + Sync {
    move |shape, seed| {
        let mut r = rng(seed);
        make_psf_field(&[random_disk_psf(radius, &mut r)], (1, 1), shape)
    }
}

/// Direct evaluation of the space-invariant forward sum with a centered kernel.
pub fn quadruple_loop(o: &RealImage, h: &CenteredKernel) -> RealImage {
    let (rows, cols) = o.shape();
    let (cr, cc) = h.center();
    let hv = h.image();
    RealImage::from_fn(rows, cols, |(m, n)| {
        let mut acc = 0.0;
        for k in 0..rows {
            for l in 0..cols {
                let i = (m + rows + cr - k) % rows;
                let j = (n + cols + cc - l) % cols;
                acc += o[(k, l)] * hv[(i, j)];
            }
        }
        acc
    })
    .unwrap()
}

pub fn rel_l2(a: &RealImage, b: &RealImage) -> f64 {
    let d = a.as_array() - b.as_array();
    d.mapv(|v| v * v).sum().sqrt() / b.norm_l2()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
