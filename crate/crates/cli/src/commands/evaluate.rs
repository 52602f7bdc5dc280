use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use tip4aw::metrics::{align_subpixel, frc, ssim, SsimParams};
use tip4aw_cli::imageio::read_gray;
use tip4aw_cli::plot::{save_chart, Series};

use crate::report_problems;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Estimated object.
    #[arg(long)]
    estimate: PathBuf,
    /// Ground-truth object.
    #[arg(long)]
    truth: PathBuf,
    /// Align the estimate to the truth by a sub-pixel shift before scoring.
    #[arg(long)]
    align: bool,
    /// Write the FRC curve (ring, n_r, frc, threshold) to this CSV file.
    #[arg(long)]
    frc_csv: Option<PathBuf>,
    /// Render FRC and 2-sigma threshold against ring index to this PNG.
    #[arg(long)]
    plot: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<ExitCode> {
    let mut problems = Vec::new();
    let estimate = read_gray(&args.estimate).map_err(|e| problems.push(format!("{e:#}"))).ok();
    let truth = read_gray(&args.truth).map_err(|e| problems.push(format!("{e:#}"))).ok();
    if let (Some(e), Some(t)) = (&estimate, &truth) {
        if e.shape() != t.shape() {
            problems.push(format!(
                "estimate is {}x{} but truth is {}x{}",
                e.rows(),
                e.cols(),
                t.rows(),
                t.cols()
            ));
        }
    }
    if let Some(code) = report_problems(&problems) {
        return Ok(code);
    }
    let (estimate, truth) = (estimate.expect("checked"), truth.expect("checked"));

    // Flux is matched in either case; FRC ignores it but SSIM does not.
    let estimate = if args.align {
        align_subpixel(&estimate, &truth)?
    } else {
        let s = estimate.sum();
        estimate.scaled(if s != 0.0 { truth.sum() / s } else { 1.0 })
    };
    let curve = frc(&truth, &estimate)?;
    let score = ssim(&estimate, &truth, &SsimParams::default())?;
    println!("rn_max: {}", curve.rn_max());
    println!("ssim: {score:.6}");

    if let Some(path) = &args.frc_csv {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        curve.write_csv(std::io::BufWriter::new(file))?;
    }
    if let Some(path) = &args.plot {
        let points = |f: &dyn Fn(&tip4aw::metrics::FrcRing) -> Option<f64>| {
            curve
                .rings
                .iter()
                .filter(|r| !r.partial)
                .filter_map(|r| f(r).map(|v| (r.ring as f64, v)))
                .collect()
        };
        save_chart(
            path,
            &[
                Series {
                    points: points(&|r| r.frc()),
                    color: [0, 90, 200],
                },
                Series {
                    points: points(&|r| r.threshold.is_finite().then_some(r.threshold.min(1.0))),
                    color: [200, 40, 40],
                },
            ],
        )?;
    }
    Ok(ExitCode::SUCCESS)
}
