use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tip4aw::simulate::FieldParams;
use tip4aw::{Tip4awConfig, Weighting};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "tip4aw", version, about = "Blind multi-frame deconvolution of space-variant blur")]
struct Cli {
    /// Worker threads for the data-parallel phases (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a stack of space-variant blurred frames of one object.
    Simulate(commands::simulate::SimulateArgs),
    /// Estimate the object and local PSFs from a stack of frames.
    Deconvolve(commands::deconvolve::DeconvolveArgs),
    /// Compare an estimate with the ground truth (FRC and SSIM).
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Quality against noise level or against tile count.
    Sweep(commands::sweep::SweepArgs),
}

/// Overrides for [`Tip4awConfig`]; unset flags keep the base value.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON file with a full configuration, applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// PSF support radius in pixels.
    #[arg(long)]
    support_radius: Option<usize>,
    /// Tile count in both directions.
    #[arg(long, conflicts_with_all = ["tiles_v", "tiles_h"])]
    tiles: Option<usize>,
    /// Tile rows.
    #[arg(long)]
    tiles_v: Option<usize>,
    /// Tile columns.
    #[arg(long)]
    tiles_h: Option<usize>,
    /// Narrow apodization width in pixels.
    #[arg(long)]
    apod_width: Option<f64>,
    /// Extra width of the complementary apodization in pixels.
    #[arg(long)]
    apod_step: Option<f64>,
    /// Division threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Isoplanatism sensitivity.
    #[arg(long)]
    sensitivity: Option<f64>,
    /// Largest allowed weight.
    #[arg(long)]
    weight_cap: Option<f64>,
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum WeightingArg {
    Isoplanatism,
    Uniform,
}

impl ConfigArgs {
    pub fn is_empty(&self) -> bool {
        self.config.is_none()
            && self.iterations.is_none()
            && self.support_radius.is_none()
            && self.tiles.is_none()
            && self.tiles_v.is_none()
            && self.tiles_h.is_none()
            && self.apod_width.is_none()
            && self.apod_step.is_none()
            && self.epsilon.is_none()
            && self.sensitivity.is_none()
            && self.weight_cap.is_none()
            && self.weighting.is_none()
    }

    pub fn sets_tiles(&self) -> bool {
        self.tiles.is_some() || self.tiles_v.is_some() || self.tiles_h.is_some()
    }

    /// The configuration, or every reason it could not be read.
    pub fn resolve(&self, base: Tip4awConfig) -> Result<Tip4awConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()))?
            }
            None => base,
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    cfg.$field = v;
                }
            };
        }
        set!(iterations, self.iterations);
        set!(support_radius, self.support_radius);
        set!(tiles_v, self.tiles.or(self.tiles_v));
        set!(tiles_h, self.tiles.or(self.tiles_h));
        set!(apodization_width, self.apod_width);
        set!(apodization_step, self.apod_step);
        set!(epsilon, self.epsilon);
        set!(sensitivity, self.sensitivity);
        set!(weight_cap, self.weight_cap);
        set!(
            weighting,
            self.weighting.map(|w| match w {
                WeightingArg::Isoplanatism => Weighting::Isoplanatism,
                WeightingArg::Uniform => Weighting::Uniform,
            })
        );
        Ok(cfg)
    }
}

/// Parameters of the simulated PSF fields.
#[derive(Args, Debug, Clone)]
pub struct FieldArgs {
    /// Anchor PSFs per image side.
    #[arg(long, default_value_t = 4)]
    anchors: usize,
    /// Smallest Gaussian PSF width (standard deviation, pixels).
    #[arg(long, default_value_t = 1.0)]
    psf_sigma_min: f64,
    /// Largest Gaussian PSF width (standard deviation, pixels).
    #[arg(long, default_value_t = 3.0)]
    psf_sigma_max: f64,
    /// Largest anchor translation in pixels.
    #[arg(long, default_value_t = 4.0)]
    max_shift: f64,
    /// Fraction of PSF pixels removed by random masks.
    #[arg(long, default_value_t = 0.0)]
    mask_fraction: f64,
}

impl FieldArgs {
    pub fn params(&self) -> FieldParams {
        FieldParams {
            anchor_rows: self.anchors,
            anchor_cols: self.anchors,
            sigma_min: self.psf_sigma_min,
            sigma_max: self.psf_sigma_max,
            max_shift: self.max_shift,
            mask_fraction: self.mask_fraction,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.anchors == 0 {
            out.push("--anchors must be at least 1".into());
        }
        if !(self.psf_sigma_min > 0.0) || !(self.psf_sigma_max >= self.psf_sigma_min) || !self.psf_sigma_max.is_finite() {
            out.push(format!(
                "PSF widths need 0 < min <= max, got {} and {}",
                self.psf_sigma_min, self.psf_sigma_max
            ));
        }
        if !(self.max_shift >= 0.0) || !self.max_shift.is_finite() {
            out.push(format!("--max-shift must be finite and >= 0, got {}", self.max_shift));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            out.push(format!("--mask-fraction must lie in [0, 1), got {}", self.mask_fraction));
        }
        out
    }
}

/// Prints every problem and returns the usage exit code when there are any.
pub fn report_problems(problems: &[String]) -> Option<ExitCode> {
    if problems.is_empty() {
        return None;
    }
    eprintln!("error: invalid invocation ({} problem{}):", problems.len(), if problems.len() == 1 { "" } else { "s" });
    for p in problems {
        eprintln!("  - {p}");
    }
    Some(ExitCode::from(2))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report_problems(&["--threads must be at least 1".into()]).unwrap();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: configuring the thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Deconvolve(args) => commands::deconvolve::run(args, cli.threads),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
