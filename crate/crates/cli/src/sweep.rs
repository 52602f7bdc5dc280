//! Parameter sweeps: reconstruction quality against noise level and against
//! the number of tiles.

use std::io::Write;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};
use tip4aw::metrics::{align_subpixel, frc, ssim, SsimParams};
use tip4aw::simulate::{make_stack, test_object, FieldParams, RandomFieldGenerator};
use tip4aw::{run, ImageStack, RealImage, Tip4awConfig};

pub const DEFAULT_SIGMAS: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub size: usize,
    pub frames: usize,
    pub repetitions: usize,
    pub sigmas: Vec<f64>,
    /// Repetition `r` uses object seed `object_seed + r` and stack seed
    /// `stack_seed + r` at every noise level.
    pub object_seed: u64,
    pub stack_seed: u64,
    pub field: FieldParams,
    pub config: Tip4awConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub sigma: f64,
    pub repetition: usize,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub sigma: f64,
    pub median_ssim: f64,
    pub min_ssim: f64,
    pub max_ssim: f64,
    pub repetitions: usize,
}

/// SSIM of a run's object against the truth after shift and flux alignment.
pub fn aligned_ssim(estimate: &RealImage, truth: &RealImage) -> Result<f64> {
    let aligned = align_subpixel(estimate, truth)?;
    Ok(ssim(&aligned, truth, &SsimParams::default())?)
}

pub fn run_noise_sweep(sweep: &NoiseSweep, mut progress: impl FnMut(&NoiseSample)) -> Result<Vec<NoiseSample>> {
    ensure!(sweep.repetitions >= 1, "noise sweep needs at least one repetition");
    ensure!(!sweep.sigmas.is_empty(), "noise sweep needs at least one noise level");
    let generator = RandomFieldGenerator(sweep.field.clone());
    let mut out = Vec::new();
    for rep in 0..sweep.repetitions {
        let truth = test_object(sweep.size, sweep.size, sweep.object_seed + rep as u64)?;
        for &sigma in &sweep.sigmas {
            let sim = make_stack(&truth, sweep.frames, &generator, sigma, sweep.stack_seed + rep as u64)?;
            let result = run(&sim.stack, &sweep.config)?;
            let sample = NoiseSample {
                sigma,
                repetition: rep,
                ssim: aligned_ssim(&result.object, &truth)?,
            };
            progress(&sample);
            out.push(sample);
        }
    }
    Ok(out)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One row per noise level, in order of first appearance.
pub fn summarize_noise(samples: &[NoiseSample]) -> Vec<NoiseSummary> {
    let mut sigmas: Vec<f64> = Vec::new();
    for s in samples {
        if !sigmas.contains(&s.sigma) {
            sigmas.push(s.sigma);
        }
    }
    sigmas
        .into_iter()
        .map(|sigma| {
            let mut v: Vec<f64> = samples.iter().filter(|s| s.sigma == sigma).map(|s| s.ssim).collect();
            let repetitions = v.len();
            let med = median(&mut v);
            NoiseSummary {
                sigma,
                median_ssim: med,
                min_ssim: v[0],
                max_ssim: v[repetitions - 1],
                repetitions,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSample {
    pub tiles: usize,
    pub pq: usize,
    pub inv_pq: f64,
    pub rn_max: usize,
    pub best_frame_rn_max: usize,
    pub seconds: f64,
}

/// Runs `base` with `P = Q = n` for every `n` in `tiles` on one stack.
pub fn run_tile_sweep(
    stack: &ImageStack,
    truth: &RealImage,
    tiles: &[usize],
    base: &Tip4awConfig,
    mut progress: impl FnMut(&TileSample),
) -> Result<Vec<TileSample>> {
    ensure!(!tiles.is_empty(), "tile sweep needs at least one tile count");
    let mut best = 0;
    for f in stack.frames() {
        best = best.max(frc(truth, f)?.rn_max());
    }
    let mut out = Vec::new();
    for &n in tiles {
        let cfg = Tip4awConfig {
            tiles_v: n,
            tiles_h: n,
            ..base.clone()
        };
        let start = std::time::Instant::now();
        let result = run(stack, &cfg)?;
        let sample = TileSample {
            tiles: n,
            pq: n * n,
            inv_pq: 1.0 / (n * n) as f64,
            rn_max: frc(truth, &result.object)?.rn_max(),
            best_frame_rn_max: best,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&sample);
        out.push(sample);
    }
    Ok(out)
}

pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
