use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use tip4aw::driver::{IterationDiagnostics, LocalPsfSet};
use tip4aw::{run_online, run_with_progress, ImageStack, RealImage, Tip4awConfig};
use tip4aw_cli::imageio::{peak_scale, read_gray, write_gray16};
use tip4aw_cli::manifest::{Dataset, RunManifest, RunOutputs, Timings};
use tip4aw_cli::montage::psf_montage;
use tip4aw_cli::sweep::write_rows;

use super::{create_dir, output_dir_problem};
use crate::{report_problems, ConfigArgs};

#[derive(Args, Debug)]
pub struct DeconvolveArgs {
    /// Input frames (8/16-bit grayscale PNG or PGM).
    frames: Vec<PathBuf>,
    /// Read the frames listed in a simulated dataset directory.
    #[arg(long, conflicts_with = "frames")]
    dataset: Option<PathBuf>,
    /// Repeat the run recorded in a run manifest.
    #[arg(long, conflicts_with_all = ["frames", "dataset", "window"])]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Process a moving window of this many frames, one iteration per position.
    #[arg(long)]
    window: Option<usize>,
    /// Suppress per-iteration progress.
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

struct Plan {
    config: Tip4awConfig,
    inputs: Vec<PathBuf>,
    dataset: Option<PathBuf>,
    frames: Vec<RealImage>,
}

fn absolute(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Resolves inputs and configuration, collecting every problem found.
fn plan(args: &DeconvolveArgs) -> std::result::Result<Plan, Vec<String>> {
    let mut problems = Vec::new();
    problems.extend(output_dir_problem(&args.out));

    let (config, inputs, dataset) = if let Some(path) = &args.manifest {
        if !args.config.is_empty() {
            problems.push("configuration flags cannot be combined with --manifest".into());
        }
        match RunManifest::load(path) {
            Ok(m) => (Some(m.config), m.inputs, m.dataset),
            Err(e) => {
                problems.push(format!("{e:#}"));
                (None, Vec::new(), None)
            }
        }
    } else {
        let (inputs, dataset) = match &args.dataset {
            Some(dir) => match Dataset::load(dir) {
                Ok(ds) => (ds.frame_paths(), Some(absolute(dir))),
                Err(e) => {
                    problems.push(format!("{e:#}"));
                    (Vec::new(), None)
                }
            },
            None => (args.frames.clone(), None),
        };
        if inputs.is_empty() && problems.is_empty() {
            problems.push("no input frames given (pass frame paths, --dataset or --manifest)".into());
        }
        let config = match args.config.resolve(Tip4awConfig::default()) {
            Ok(mut cfg) => {
                if args.window.is_some() {
                    cfg.online_window = args.window;
                }
                Some(cfg)
            }
            Err(e) => {
                problems.push(e);
                None
            }
        };
        (config, inputs.iter().map(|p| absolute(p)).collect(), dataset)
    };

    let mut frames = Vec::with_capacity(inputs.len());
    for path in &inputs {
        match read_gray(path) {
            Ok(img) => frames.push(img),
            Err(e) => problems.push(format!("{e:#}")),
        }
    }
    let shape = frames.first().map(|f| f.shape());
    if let Some(shape) = shape {
        for (path, f) in inputs.iter().zip(&frames) {
            if f.shape() != shape {
                problems.push(format!(
                    "{} is {}x{}, expected {}x{} like the first frame",
                    path.display(),
                    f.rows(),
                    f.cols(),
                    shape.0,
                    shape.1
                ));
            }
        }
    }
    let frame_count = (frames.len() == inputs.len() && !frames.is_empty()).then_some(frames.len());
    if let Some(cfg) = &config {
        problems.extend(cfg.problems(frame_count, shape));
    }
    match config {
        Some(config) if problems.is_empty() => Ok(Plan {
            config,
            inputs,
            dataset,
            frames,
        }),
        _ => Err(problems),
    }
}

#[derive(Serialize)]
struct DiagnosticsRow {
    iteration: usize,
    first_frame: Option<usize>,
    object_change: f64,
    max_support_shift: f64,
    weight_min: f64,
    weight_mean: f64,
    weight_max: f64,
    seconds: f64,
}

fn diagnostics_rows(diags: &[IterationDiagnostics], first_frames: Option<&[usize]>, seconds: &[f64]) -> Vec<DiagnosticsRow> {
    diags
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let n = d.weights.len().max(1) as f64;
            DiagnosticsRow {
                iteration: d.iteration,
                first_frame: first_frames.map(|f| f[k]),
                object_change: d.object_change,
                max_support_shift: d.max_support_shift,
                weight_min: d.weights.iter().map(|w| w.min).fold(f64::INFINITY, f64::min),
                weight_mean: d.weights.iter().map(|w| w.mean).sum::<f64>() / n,
                weight_max: d.weights.iter().map(|w| w.max).fold(f64::NEG_INFINITY, f64::max),
                seconds: seconds.get(k).copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

struct Outcome {
    object: RealImage,
    psfs: LocalPsfSet,
    diagnostics: Vec<IterationDiagnostics>,
    first_frames: Option<Vec<usize>>,
    failure: Option<String>,
}

fn progress_line(quiet: bool, d: &IterationDiagnostics, seconds: f64) {
    if !quiet {
        eprintln!(
            "iteration {:>3}  change {:.3e}  max shift {:.1} px  {:.2} s",
            d.iteration, d.object_change, d.max_support_shift, seconds
        );
    }
}

pub fn run(args: DeconvolveArgs, threads: Option<usize>) -> Result<ExitCode> {
    let load_start = Instant::now();
    let plan = match plan(&args) {
        Ok(p) => p,
        Err(problems) => return Ok(report_problems(&problems).expect("problems are not empty")),
    };
    let load_seconds = load_start.elapsed().as_secs_f64();

    let run_start = Instant::now();
    let mut seconds = Vec::new();
    let mut tick = Instant::now();
    let mut record = |d: &IterationDiagnostics| {
        let s = tick.elapsed().as_secs_f64();
        progress_line(args.quiet, d, s);
        seconds.push(s);
        tick = Instant::now();
    };
    let outcome = if plan.config.online_window.is_some() {
        match run_online(plan.frames.clone(), &plan.config) {
            Ok(out) => {
                for step in &out.steps {
                    record(&step.diagnostics);
                }
                let last = out.steps.last().expect("at least one window position");
                Outcome {
                    object: last.object.clone(),
                    psfs: out.psfs,
                    diagnostics: out.steps.iter().map(|s| s.diagnostics.clone()).collect(),
                    first_frames: Some(out.steps.iter().map(|s| s.first_frame).collect()),
                    failure: None,
                }
            }
            Err(f) => return Err(anyhow::Error::new(f).context("online deconvolution failed")),
        }
    } else {
        let stack = ImageStack::new(plan.frames.clone())?;
        match run_with_progress(&stack, &plan.config, &mut record) {
            Ok(out) => Outcome {
                object: out.object,
                psfs: out.psfs,
                diagnostics: out.diagnostics,
                first_frames: None,
                failure: None,
            },
            Err(f) => match f.last_state {
                Some(state) => Outcome {
                    object: state.object,
                    psfs: state.psfs,
                    diagnostics: state.diagnostics,
                    first_frames: None,
                    failure: Some(f.error.to_string()),
                },
                None => return Err(anyhow::Error::new(f.error).context("deconvolution failed")),
            },
        }
    };
    let run_seconds = run_start.elapsed().as_secs_f64();

    create_dir(&args.out)?;
    let outputs = RunOutputs {
        object: args.out.join("object.png"),
        psf_montage: args.out.join("psf_montage.png"),
        diagnostics: args.out.join("diagnostics.csv"),
        manifest: args.out.join("run.json"),
    };
    write_gray16(&outputs.object, &outcome.object, peak_scale(&outcome.object))?;
    write_gray16(&outputs.psf_montage, &psf_montage(&outcome.psfs), 1.0)?;
    let file = std::fs::File::create(&outputs.diagnostics)
        .with_context(|| format!("creating {}", outputs.diagnostics.display()))?;
    write_rows(
        file,
        &diagnostics_rows(&outcome.diagnostics, outcome.first_frames.as_deref(), &seconds),
    )?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: plan.config,
        inputs: plan.inputs,
        dataset: plan.dataset,
        threads,
        outputs: outputs.clone(),
        diagnostics: outcome.diagnostics,
        timings: Timings {
            load_seconds,
            run_seconds,
            iteration_seconds: seconds,
        },
        failure: outcome.failure.clone(),
    };
    manifest.save(&outputs.manifest)?;

    if let Some(failure) = outcome.failure {
        eprintln!(
            "error: {failure}; wrote the last feasible state (iteration {}) to {}",
            manifest.diagnostics.len(),
            args.out.display()
        );
        return Ok(ExitCode::FAILURE);
    }
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
