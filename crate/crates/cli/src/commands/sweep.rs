use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use tip4aw::simulate::{make_stack, test_object, RandomFieldGenerator};
use tip4aw::{ImageStack, RealImage, Tip4awConfig};
use tip4aw_cli::imageio::read_gray;
use tip4aw_cli::manifest::Dataset;
use tip4aw_cli::plot::{save_chart, Series};
use tip4aw_cli::sweep::{run_noise_sweep, run_tile_sweep, summarize_noise, write_rows, NoiseSweep, DEFAULT_SIGMAS};

use super::{create_dir, output_dir_problem, parse_list};
use crate::{report_problems, ConfigArgs, FieldArgs};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(subcommand)]
    axis: SweepAxis,
}

#[derive(Subcommand, Debug)]
enum SweepAxis {
    /// Median SSIM against the noise level.
    #[command(alias = "noise_sigma")]
    Noise(NoiseArgs),
    /// r_n,max against the number of tiles (P = Q).
    Tiles(TilesArgs),
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Output directory for noise_samples.csv and noise_summary.csv.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 15)]
    frames: usize,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Comma-separated noise levels.
    #[arg(long)]
    sigmas: Option<String>,
    #[arg(long, default_value_t = 900)]
    object_seed: u64,
    #[arg(long, default_value_t = 77)]
    seed: u64,
    /// Also render median SSIM against log10(sigma) to noise.png.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct TilesArgs {
    /// Output directory for tiles.csv.
    #[arg(long, short)]
    out: PathBuf,
    /// Comma-separated tile counts per side.
    #[arg(long, default_value = "2,3,5,7")]
    tile_counts: String,
    /// Use a simulated dataset directory instead of simulating a stack.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value_t = 1e-4)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    object_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also render r_n,max against PQ to tiles.png.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn run(args: SweepArgs) -> Result<ExitCode> {
    match args.axis {
        SweepAxis::Noise(a) => noise(a),
        SweepAxis::Tiles(a) => tiles(a),
    }
}

fn csv_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn noise(args: NoiseArgs) -> Result<ExitCode> {
    let mut problems = args.field.problems();
    problems.extend(output_dir_problem(&args.out));
    if args.repetitions == 0 {
        problems.push("--repetitions must be at least 1".into());
    }
    if args.frames == 0 {
        problems.push("--frames must be at least 1".into());
    }
    let sigmas = match &args.sigmas {
        Some(text) => parse_list::<f64>(text).unwrap_or_else(|e| {
            problems.push(format!("--sigmas: {e}"));
            Vec::new()
        }),
        None => DEFAULT_SIGMAS.to_vec(),
    };
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        problems.push("noise levels must be finite and >= 0".into());
    }
    let config = args.config.resolve(Tip4awConfig::default()).unwrap_or_else(|e| {
        problems.push(e);
        Tip4awConfig::default()
    });
    problems.extend(config.problems(Some(args.frames), Some((args.size, args.size))));
    if let Some(code) = report_problems(&problems) {
        return Ok(code);
    }

    let sweep = NoiseSweep {
        size: args.size,
        frames: args.frames,
        repetitions: args.repetitions,
        sigmas,
        object_seed: args.object_seed,
        stack_seed: args.seed,
        field: args.field.params(),
        config,
    };
    let samples = run_noise_sweep(&sweep, |s| {
        eprintln!("repetition {:>2}  sigma {:.0e}  ssim {:.4}", s.repetition, s.sigma, s.ssim)
    })?;
    let summary = summarize_noise(&samples);
    create_dir(&args.out)?;
    write_rows(csv_file(&args.out.join("noise_samples.csv"))?, &samples)?;
    write_rows(csv_file(&args.out.join("noise_summary.csv"))?, &summary)?;
    for s in &summary {
        println!("sigma {:.0e}: median ssim {:.4}", s.sigma, s.median_ssim);
    }
    if args.plot {
        let points = summary
            .iter()
            .filter(|s| s.sigma > 0.0)
            .map(|s| (s.sigma.log10(), s.median_ssim))
            .collect();
        save_chart(
            &args.out.join("noise.png"),
            &[Series {
                points,
                color: [0, 90, 200],
            }],
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_dataset(dir: &Path) -> Result<(ImageStack, RealImage)> {
    let ds = Dataset::load(dir)?;
    let frames = ds.frame_paths().iter().map(|p| read_gray(p)).collect::<Result<Vec<_>>>()?;
    Ok((ImageStack::new(frames)?, read_gray(&ds.truth_path())?))
}

fn tiles(args: TilesArgs) -> Result<ExitCode> {
    let mut problems = args.field.problems();
    problems.extend(output_dir_problem(&args.out));
    if args.config.sets_tiles() {
        problems.push("tile counts are the sweep axis; use --tile-counts".into());
    }
    let counts = parse_list::<usize>(&args.tile_counts).unwrap_or_else(|e| {
        problems.push(format!("--tile-counts: {e}"));
        Vec::new()
    });
    let config = args.config.resolve(Tip4awConfig::default()).unwrap_or_else(|e| {
        problems.push(e);
        Tip4awConfig::default()
    });
    let data = match &args.dataset {
        Some(dir) => match load_dataset(dir) {
            Ok(d) => Some(d),
            Err(e) => {
                problems.push(format!("{e:#}"));
                None
            }
        },
        None => None,
    };
    let (frames, shape) = match &data {
        Some((stack, _)) => (stack.len(), stack.shape()),
        None => (args.frames, (args.size, args.size)),
    };
    for &n in &counts {
        let cfg = Tip4awConfig {
            tiles_v: n,
            tiles_h: n,
            ..config.clone()
        };
        problems.extend(cfg.problems(Some(frames), Some(shape)).into_iter().map(|p| format!("P = Q = {n}: {p}")));
    }
    if let Some(code) = report_problems(&problems) {
        return Ok(code);
    }

    let (stack, truth) = match data {
        Some(d) => d,
        None => {
            let truth = test_object(args.size, args.size, args.object_seed)?;
            let sim = make_stack(
                &truth,
                args.frames,
                &RandomFieldGenerator(args.field.params()),
                args.noise,
                args.seed,
            )?;
            (sim.stack, truth)
        }
    };
    let samples = run_tile_sweep(&stack, &truth, &counts, &config, |s| {
        eprintln!("P = Q = {}  rn_max {}  ({:.1} s)", s.tiles, s.rn_max, s.seconds)
    })?;
    create_dir(&args.out)?;
    write_rows(csv_file(&args.out.join("tiles.csv"))?, &samples)?;
    if let Some(first) = samples.first() {
        println!("best single frame rn_max: {}", first.best_frame_rn_max);
    }
    for s in &samples {
        println!("P = Q = {}: rn_max {}", s.tiles, s.rn_max);
    }
    if args.plot {
        let points = samples.iter().map(|s| (s.pq as f64, s.rn_max as f64)).collect();
        save_chart(
            &args.out.join("tiles.png"),
            &[Series {
                points,
                color: [0, 90, 200],
            }],
        )?;
    }
    Ok(ExitCode::SUCCESS)
}
