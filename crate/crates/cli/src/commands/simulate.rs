use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use tip4aw::simulate::{make_stack, test_object, RandomFieldGenerator};
use tip4aw_cli::imageio::{read_gray, write_gray16};
use tip4aw_cli::manifest::{Dataset, DatasetHeader, FrameEntry, ObjectSource};

use super::{create_dir, output_dir_problem};
use crate::{report_problems, FieldArgs};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output directory for frames, ground truth and manifest.
    #[arg(long, short)]
    out: PathBuf,
    /// Side length of the synthetic object.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Ground-truth image to blur instead of the synthetic scene.
    #[arg(long, conflicts_with = "size")]
    object: Option<PathBuf>,
    /// Seed of the synthetic scene.
    #[arg(long, default_value_t = 0)]
    object_seed: u64,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    /// Gaussian noise standard deviation on the [0, 1] intensity scale.
    #[arg(long, default_value_t = 1e-4)]
    noise: f64,
    /// Master seed for PSF fields and noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    field: FieldArgs,
}

pub fn run(args: SimulateArgs) -> Result<ExitCode> {
    let mut problems = args.field.problems();
    if args.frames == 0 {
        problems.push("--frames must be at least 1".into());
    }
    if args.size == 0 {
        problems.push("--size must be at least 1".into());
    }
    if !(args.noise >= 0.0) || !args.noise.is_finite() {
        problems.push(format!("--noise must be finite and >= 0, got {}", args.noise));
    }
    problems.extend(output_dir_problem(&args.out));
    let object = match &args.object {
        Some(path) => match read_gray(path) {
            Ok(img) => Some(img),
            Err(e) => {
                problems.push(format!("{e:#}"));
                None
            }
        },
        None => None,
    };
    if let Some(code) = report_problems(&problems) {
        return Ok(code);
    }

    let (truth, source) = match (object, &args.object) {
        (Some(img), Some(path)) => (img, ObjectSource::File { path: path.clone() }),
        _ => (
            test_object(args.size, args.size, args.object_seed)?,
            ObjectSource::Synthetic { seed: args.object_seed },
        ),
    };
    let params = args.field.params();
    let sim = make_stack(&truth, args.frames, &RandomFieldGenerator(params.clone()), args.noise, args.seed)?;

    create_dir(&args.out)?;
    let truth_name = PathBuf::from("truth.png");
    write_gray16(&args.out.join(&truth_name), &truth, 1.0)?;
    let mut frames = Vec::with_capacity(args.frames);
    for (frame, record) in sim.stack.frames().iter().zip(&sim.records) {
        let name = PathBuf::from(format!("frame_{:03}.png", record.index));
        write_gray16(&args.out.join(&name), frame, 1.0)?;
        frames.push(FrameEntry {
            index: record.index,
            path: name,
            field_seed: record.field_seed,
            noise_seed: record.noise_seed,
            sigma: record.sigma,
        });
    }
    let (rows, cols) = truth.shape();
    let dataset = Dataset {
        dir: args.out.clone(),
        header: DatasetHeader {
            rows,
            cols,
            frames: args.frames,
            master_seed: args.seed,
            object: source,
            field: params,
            noise_sigma: args.noise,
            truth: truth_name,
        },
        frames,
    };
    dataset.save()?;
    println!(
        "wrote {} frames of {rows}x{cols} to {}",
        args.frames,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
