mod common;

use common::*;
use proptest::prelude::*;
use tip4aw::spectral::{convolve_anisoplanatic, convolve_direct, kernel_spectrum, ConstantPsf};
use tip4aw::{dft2, idft2_real, CenteredKernel, KernelPatch, RealImage};

fn spectral_convolution(o: &RealImage, h: &CenteredKernel) -> RealImage {
    idft2_real(&dft2(o).multiply(&kernel_spectrum(h)).unwrap()).unwrap()
}

#[test]
fn spectral_product_matches_quadruple_loop_on_odd_and_even_sizes() {
    let mut r = rng(1);
    for &(rows, cols) in &[(16, 16), (33, 17), (8, 8), (5, 9)] {
        for _ in 0..5 {
            let o = random_image(rows, cols, &mut r);
            let h = random_centered_kernel(rows, cols, &mut r);
            let oracle = quadruple_loop(&o, &h);
            assert!(rel_l2(&spectral_convolution(&o, &h), &oracle) < 1e-12);
            assert!(rel_l2(&convolve_direct(&o, &h).unwrap(), &oracle) < 1e-12);
        }
    }
}

#[test]
fn two_region_field_matches_quadruple_loop() {
    let mut r = rng(2);
    let o = random_image(8, 8, &mut r);
    let a = random_disk_psf(1, &mut r);
    let b = random_disk_psf(2, &mut r);
    let field = |_k: usize, l: usize| if l < 4 { a.clone() } else { b.clone() };
    let out = convolve_anisoplanatic(&o, &field).unwrap();
    let oracle = RealImage::from_fn(8, 8, |(m, n)| {
        let mut acc = 0.0;
        for k in 0..8isize {
            for l in 0..8isize {
                let h = if l < 4 { &a } else { &b };
                for dr in -8..=8isize {
                    for dc in -8..=8isize {
                        if (k + dr).rem_euclid(8) == m as isize && (l + dc).rem_euclid(8) == n as isize {
                            acc += o[(k as usize, l as usize)] * h.value_at(dr, dc);
                        }
                    }
                }
            }
        }
        acc
    })
    .unwrap();
    assert!(max_abs_diff(out.as_array(), oracle.as_array()) < 1e-12);
}

#[test]
fn pure_translation_field_shifts_the_object() {
    let mut r = rng(3);
    let o = random_image(6, 7, &mut r);
    let out = convolve_anisoplanatic(&o, &ConstantPsf(KernelPatch::shifted_delta(0, 1))).unwrap();
    assert_eq!(out.as_array(), o.rolled(0, 1).as_array());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dft_round_trip(rows in prop::sample::select(vec![8usize, 16, 17, 64]),
                      cols in prop::sample::select(vec![8usize, 16, 19, 64]),
                      seed in any::<u64>()) {
        let img = random_image(rows, cols, &mut rng(seed));
        let back = idft2_real(&dft2(&img)).unwrap();
        prop_assert!(rel_l2(&back, &img) < 1e-10);
    }

    #[test]
    fn convolution_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (o1, o2) = (random_image(12, 9, &mut r), random_image(12, 9, &mut r));
        let h = random_centered_kernel(12, 9, &mut r);
        let combo = RealImage::new(o1.as_array() * a + o2.as_array() * b).unwrap();
        let lhs = convolve_direct(&combo, &h).unwrap();
        let rhs = convolve_direct(&o1, &h).unwrap().as_array() * a + convolve_direct(&o2, &h).unwrap().as_array() * b;
        prop_assert!(max_abs_diff(lhs.as_array(), &rhs) < 1e-10);
    }

    #[test]
    fn constant_field_equals_isoplanatic_convolution(radius in 0usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let o = random_image(16, 13, &mut r);
        let h = random_disk_psf(radius, &mut r);
        let aniso = convolve_anisoplanatic(&o, &ConstantPsf(h.clone())).unwrap();
        let direct = convolve_direct(&o, &h.to_centered(16, 13)).unwrap();
        prop_assert!(max_abs_diff(aniso.as_array(), direct.as_array()) < 1e-10);
    }

    #[test]
    fn normalized_field_conserves_flux(seed in any::<u64>()) {
        let mut r = rng(seed);
        let o = random_image(10, 11, &mut r);
        let psfs: Vec<KernelPatch> = (0..110).map(|i| random_disk_psf(i % 4, &mut r)).collect();
        let field = |k: usize, l: usize| psfs[k * 11 + l].clone();
        let out = convolve_anisoplanatic(&o, &field).unwrap();
        prop_assert!((out.sum() - o.sum()).abs() < 1e-8);
    }
}
