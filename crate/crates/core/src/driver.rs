//! The iteration itself.
//!
//! Every iteration runs four steps in a fixed order:
//!
//! 1. weighted multi-frame deconvolution of the full frame spectra with each
//!    tile's transfer functions, followed by overlap-add of the tile results;
//! 2. projection of the object onto nonnegative, unit-sum images;
//! 3. local PSF estimation per tile and frame against the object apodized with
//!    a narrow (`w`) and a wide (`w + Δw`) Gaussian;
//! 4. projection of both estimates onto the adaptive support and the
//!    isoplanatism weights from their difference.
//!
//! Weights produced in step 4 are consumed by step 1 of the next iteration.
//! The tile loop of step 1 and the `(p, q, s)` loop of step 3 run on the rayon
//! pool; results are always combined in row-major tile order and ascending
//! frame order, so the output does not depend on the number of threads.

use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{WeightTable, WeightedAccumulator};
use crate::psf::{
    apodization_kernel, compute_weight, estimate_from_apodized_spectrum, project_object, project_psf_from,
    ApodizationKernel, IsoplanatismParams, ProjectedPsf,
};
use crate::spectral::{check_shape, dft2, idft2_real, RealImage, Spectrum};
use crate::tiling::{build_grid, TileGrid};

/// Same-shape observations of one object.
#[derive(Debug, Clone)]
pub struct ImageStack {
    frames: Vec<RealImage>,
}

impl ImageStack {
    pub fn new(frames: Vec<RealImage>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyStack)?;
        for f in &frames {
            check_shape(first.shape(), f.shape())?;
        }
        Ok(ImageStack { frames })
    }

    pub fn frames(&self) -> &[RealImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames[0].shape()
    }

    /// Frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<ImageStack> {
        if start + len > self.len() {
            return Err(Error::StreamTooShort {
                len: self.len(),
                window: start + len,
            });
        }
        ImageStack::new(self.frames[start..start + len].to_vec())
    }

    pub fn into_frames(self) -> Vec<RealImage> {
        self.frames
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tip4awConfig {
    /// Number of iterations `k_max`.
    pub iterations: usize,
    /// PSF support radius `r_X` in pixels.
    pub support_radius: usize,
    /// Tile rows `P`.
    pub tiles_v: usize,
    /// Tile columns `Q`.
    pub tiles_h: usize,
    /// Narrow apodization width `w` in pixels.
    pub apodization_width: f64,
    /// Extra width `Δw` of the complementary apodization.
    pub apodization_step: f64,
    /// Division threshold `ε` shared by the object and PSF steps.
    pub epsilon: f64,
    /// Isoplanatism sensitivity `p_s`.
    pub sensitivity: f64,
    /// Upper bound on any single weight.
    pub weight_cap: f64,
    /// Moving-window length `S'` for online processing.
    #[serde(default)]
    pub online_window: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
}

/// How frames are weighted in the object step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `||h - h~||_F^(-2 p_s)`, capped.
    #[default]
    Isoplanatism,
    /// Every frame weighs 1 in every tile.
    Uniform,
}

impl Default for Tip4awConfig {
    fn default() -> Self {
        Tip4awConfig {
            iterations: 30,
            support_radius: 6,
            tiles_v: 7,
            tiles_h: 7,
            apodization_width: 35.0,
            apodization_step: 14.0,
            epsilon: 10f64.powf(-4.4),
            sensitivity: 1.5,
            weight_cap: 1e12,
            online_window: None,
            weighting: Weighting::Isoplanatism,
        }
    }
}

impl Tip4awConfig {
    /// Every problem with the configuration, optionally checked against the
    /// frame count and image shape it will be used with.
    pub fn problems(&self, frames: Option<usize>, shape: Option<(usize, usize)>) -> Vec<String> {
        let mut out = Vec::new();
        if self.iterations == 0 {
            out.push("iterations must be at least 1".to_string());
        }
        if self.support_radius == 0 {
            out.push("support radius must be at least 1 pixel".to_string());
        }
        if self.tiles_v == 0 || self.tiles_h == 0 {
            out.push(format!("tile counts must be positive, got {}x{}", self.tiles_v, self.tiles_h));
        }
        if !(self.apodization_width > 0.0) || !self.apodization_width.is_finite() {
            out.push(format!("apodization width must be positive, got {}", self.apodization_width));
        }
        if !(self.apodization_step > 0.0) || !self.apodization_step.is_finite() {
            out.push(format!("apodization step must be positive, got {}", self.apodization_step));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            out.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Err(e) = IsoplanatismParams::new(self.sensitivity, self.weight_cap) {
            out.push(e.to_string());
        }
        if let Some(window) = self.online_window {
            if window < 2 {
                out.push(format!("online window must be at least 2 frames, got {window}"));
            }
            if let Some(s) = frames {
                if window > s {
                    out.push(format!("online window {window} exceeds the {s} available frames"));
                }
            }
        }
        if let Some((rows, cols)) = shape {
            if self.tiles_v > 0 && rows < 2 * self.tiles_v {
                out.push(format!("{} tile rows do not fit in {rows} pixels", self.tiles_v));
            }
            if self.tiles_h > 0 && cols < 2 * self.tiles_h {
                out.push(format!("{} tile columns do not fit in {cols} pixels", self.tiles_h));
            }
        }
        out
    }

    pub fn validate(&self, frames: Option<usize>, shape: Option<(usize, usize)>) -> Result<()> {
        let problems = self.problems(frames, shape);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn isoplanatism(&self) -> IsoplanatismParams {
        IsoplanatismParams {
            sensitivity: self.sensitivity,
            weight_cap: self.weight_cap,
        }
    }
}

/// Projected local PSFs `h` and complementary PSFs `h~`, indexed `(p, q, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPsfSet {
    shape: (usize, usize),
    tiles: (usize, usize),
    frames: usize,
    psfs: Vec<ProjectedPsf>,
    complementary: Vec<ProjectedPsf>,
}

impl LocalPsfSet {
    /// Centered deltas everywhere.
    pub fn deltas(shape: (usize, usize), tiles: (usize, usize), frames: usize, radius: usize) -> Self {
        let n = tiles.0 * tiles.1 * frames;
        LocalPsfSet {
            shape,
            tiles,
            frames,
            psfs: vec![ProjectedPsf::delta(radius); n],
            complementary: vec![ProjectedPsf::delta(radius); n],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn tiles(&self) -> (usize, usize) {
        self.tiles
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn index(&self, p: usize, q: usize, s: usize) -> usize {
        assert!(p < self.tiles.0 && q < self.tiles.1 && s < self.frames, "({p}, {q}, {s}) out of range");
        (p * self.tiles.1 + q) * self.frames + s
    }

    pub fn get(&self, p: usize, q: usize, s: usize) -> &ProjectedPsf {
        &self.psfs[self.index(p, q, s)]
    }

    pub fn complementary(&self, p: usize, q: usize, s: usize) -> &ProjectedPsf {
        &self.complementary[self.index(p, q, s)]
    }

    /// Transfer function `H_{p,q|s}` at image size.
    pub fn otf(&self, p: usize, q: usize, s: usize) -> Spectrum {
        self.get(p, q, s).spectrum(self.shape.0, self.shape.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), &ProjectedPsf)> + '_ {
        let (th, fr) = (self.tiles.1, self.frames);
        self.psfs
            .iter()
            .enumerate()
            .map(move |(i, psf)| (((i / fr) / th, (i / fr) % th, i % fr), psf))
    }

    pub fn iter_complementary(&self) -> impl Iterator<Item = &ProjectedPsf> + '_ {
        self.complementary.iter()
    }

    fn remove_frame(&mut self, s: usize) {
        let frames = self.frames;
        for list in [&mut self.psfs, &mut self.complementary] {
            let mut i = 0;
            list.retain(|_| {
                let keep = i % frames != s;
                i += 1;
                keep
            });
        }
        self.frames -= 1;
    }

    fn push_delta_frame(&mut self, radius: usize) {
        let frames = self.frames;
        for list in [&mut self.psfs, &mut self.complementary] {
            let mut out = Vec::with_capacity(list.len() + self.tiles.0 * self.tiles.1);
            for chunk in list.chunks(frames.max(1)) {
                out.extend_from_slice(chunk);
                out.push(ProjectedPsf::delta(radius));
            }
            *list = out;
        }
        self.frames += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileWeightSummary {
    pub p: usize,
    pub q: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// `||o^(k) - o^(k-1)||_2 / ||o^(k-1)||_2`.
    pub object_change: f64,
    /// Largest support-center displacement from the kernel origin, in pixels.
    pub max_support_shift: f64,
    pub weights: Vec<TileWeightSummary>,
}

#[derive(Debug, Clone)]
pub struct Tip4awState {
    pub iteration: usize,
    pub object: RealImage,
    pub psfs: LocalPsfSet,
    pub weights: WeightTable,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl Tip4awState {
    fn remove_frame(&mut self, s: usize) {
        self.psfs.remove_frame(s);
        self.weights.remove_frame(s);
    }

    fn push_frame(&mut self, radius: usize) {
        self.psfs.push_delta_frame(radius);
        self.weights.push_frame_with_tile_mean();
    }
}

/// Precomputed per-run data: the tile grid, apodization kernels and frame spectra.
pub struct Tip4aw {
    cfg: Tip4awConfig,
    grid: TileGrid,
    narrow: Vec<ApodizationKernel>,
    wide: Vec<ApodizationKernel>,
    spectra: Vec<Spectrum>,
}

impl Tip4aw {
    pub fn new(stack: &ImageStack, cfg: &Tip4awConfig) -> Result<Self> {
        let shape = stack.shape();
        cfg.validate(Some(stack.len()), Some(shape))?;
        let grid = build_grid(shape.0, shape.1, cfg.tiles_v, cfg.tiles_h)?;
        let kernels = |width: f64| -> Result<Vec<ApodizationKernel>> {
            grid.indices()
                .map(|(p, q)| apodization_kernel(&grid, p, q, width))
                .collect()
        };
        let narrow = kernels(cfg.apodization_width)?;
        let wide = kernels(cfg.apodization_width + cfg.apodization_step)?;
        let spectra = stack.frames().par_iter().map(dft2).collect();
        Ok(Tip4aw {
            cfg: cfg.clone(),
            grid,
            narrow,
            wide,
            spectra,
        })
    }

    pub fn config(&self) -> &Tip4awConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn frames(&self) -> usize {
        self.spectra.len()
    }

    /// Delta PSFs and uniform weights; the object is the projected frame mean,
    /// which is what the first object step produces from this state.
    pub fn initialize(&self) -> Result<Tip4awState> {
        let frames = self.frames();
        let psfs = LocalPsfSet::deltas(self.grid.shape(), self.grid.tiles(), frames, self.cfg.support_radius);
        let weights = WeightTable::uniform(self.grid.tiles(), frames);
        let mean = self.mean_frame()?;
        Ok(Tip4awState {
            iteration: 0,
            object: project_object(&mean)?,
            psfs,
            weights,
            diagnostics: Vec::new(),
        })
    }

    fn mean_frame(&self) -> Result<RealImage> {
        let (rows, cols) = self.grid.shape();
        let mut acc = Array2::<f64>::zeros((rows, cols));
        for s in &self.spectra {
            acc += &idft2_real(s)?.into_array();
        }
        RealImage::new(acc / self.frames() as f64)
    }

    /// Steps 1 and 2: local weighted deconvolution, overlap-add, projection.
    pub fn object_step(&self, state: &Tip4awState) -> Result<RealImage> {
        Ok(project_object(&self.synthesize(state)?)?)
    }

    /// Step 1 alone: the overlap-added object before projection.
    pub fn synthesize(&self, state: &Tip4awState) -> Result<RealImage> {
        let (rows, cols) = self.grid.shape();
        let tiles: Vec<(usize, usize)> = self.grid.indices().collect();
        let windowed: Vec<Array2<f64>> = tiles
            .par_iter()
            .map(|&(p, q)| {
                let mut acc = WeightedAccumulator::new((rows, cols));
                for (s, image) in self.spectra.iter().enumerate() {
                    let otf = state.psfs.otf(p, q, s);
                    acc.add(image, &otf, state.weights.get(p, q, s))
                        .map_err(|e| e.at_tile(p, q, s))?;
                }
                let local = acc
                    .finish(self.cfg.epsilon)
                    .and_then(|spec| idft2_real(&spec))
                    .map_err(|e| e.at_tile(p, q, 0))?;
                Ok(local.into_array() * self.grid.window(p, q)?.as_array())
            })
            .collect::<Result<_>>()?;
        let mut total = Array2::<f64>::zeros((rows, cols));
        for w in &windowed {
            total += w;
        }
        RealImage::new(total)
    }

    /// Steps 3 and 4 for a projected object. Each support disk starts its
    /// search where the same PSF's support was in `previous`; the
    /// complementary PSF starts from the new support of `h`.
    pub fn psf_step(&self, object: &RealImage, previous: &LocalPsfSet) -> Result<(LocalPsfSet, WeightTable)> {
        check_shape(self.grid.shape(), previous.shape)?;
        if previous.tiles != self.grid.tiles() || previous.frames != self.frames() {
            return Err(Error::TileCountMismatch {
                expected: self.grid.tile_count() * self.frames(),
                found: previous.psfs.len(),
            });
        }
        let tiles: Vec<(usize, usize)> = self.grid.indices().collect();
        let apodized: Vec<(Spectrum, Spectrum)> = tiles
            .par_iter()
            .enumerate()
            .map(|(t, _)| {
                Ok((
                    self.narrow[t].apodized_spectrum(object)?,
                    self.wide[t].apodized_spectrum(object)?,
                ))
            })
            .collect::<Result<_>>()?;

        let frames = self.frames();
        let radius = self.cfg.support_radius;
        let eps = self.cfg.epsilon;
        let params = self.cfg.isoplanatism();
        let tasks: Vec<(usize, usize)> = (0..tiles.len())
            .flat_map(|t| (0..frames).map(move |s| (t, s)))
            .collect();
        let results: Vec<(ProjectedPsf, ProjectedPsf, f64)> = tasks
            .par_iter()
            .map(|&(t, s)| {
                let (p, q) = tiles[t];
                let index = t * frames + s;
                let estimate = |apod: &Spectrum, prev: &ProjectedPsf| {
                    estimate_from_apodized_spectrum(&self.spectra[s], apod, eps)
                        .and_then(|h| project_psf_from(&h, radius, Some(prev.support_center())))
                        .map_err(|e| e.at_tile(p, q, s))
                };
                let h = estimate(&apodized[t].0, &previous.psfs[index])?;
                let ht = estimate(&apodized[t].1, &h)?;
                let a = match self.cfg.weighting {
                    Weighting::Isoplanatism => compute_weight(h.kernel(), ht.kernel(), params),
                    Weighting::Uniform => 1.0,
                };
                Ok((h, ht, a))
            })
            .collect::<Result<_>>()?;

        let mut psfs = Vec::with_capacity(results.len());
        let mut complementary = Vec::with_capacity(results.len());
        let mut weights = Vec::with_capacity(results.len());
        for (h, ht, a) in results {
            psfs.push(h);
            complementary.push(ht);
            weights.push(a);
        }
        let set = LocalPsfSet {
            shape: self.grid.shape(),
            tiles: self.grid.tiles(),
            frames,
            psfs,
            complementary,
        };
        Ok((set, WeightTable::from_values(self.grid.tiles(), frames, weights)?))
    }

    /// One full iteration.
    pub fn iterate(&self, state: &Tip4awState) -> Result<Tip4awState> {
        let object = self.object_step(state)?;
        let (psfs, weights) = self.psf_step(&object, &state.psfs)?;
        let iteration = state.iteration + 1;
        let diag = diagnostics(iteration, &state.object, &object, &psfs, &weights);
        let mut history = state.diagnostics.clone();
        history.push(diag);
        Ok(Tip4awState {
            iteration,
            object,
            psfs,
            weights,
            diagnostics: history,
        })
    }

    fn pop_front_frame(&mut self) {
        self.spectra.remove(0);
    }

    fn push_frame(&mut self, frame: &RealImage) -> Result<()> {
        check_shape(self.grid.shape(), frame.shape())?;
        self.spectra.push(dft2(frame));
        Ok(())
    }
}

fn diagnostics(
    iteration: usize,
    previous: &RealImage,
    object: &RealImage,
    psfs: &LocalPsfSet,
    weights: &WeightTable,
) -> IterationDiagnostics {
    let diff = (object.as_array() - previous.as_array()).mapv(|v| v * v).sum().sqrt();
    let base = previous.norm_l2();
    let object_change = if base > 0.0 { diff / base } else { diff };
    let max_support_shift = psfs
        .iter()
        .map(|(_, h)| {
            let (r, c) = h.support_center();
            ((r * r + c * c) as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let (tv, th) = weights.tiles();
    let mut summary = Vec::with_capacity(tv * th);
    for p in 0..tv {
        for q in 0..th {
            let row = weights.row(p, q);
            summary.push(TileWeightSummary {
                p,
                q,
                min: row.iter().copied().fold(f64::INFINITY, f64::min),
                mean: weights.mean(p, q),
                max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    IterationDiagnostics {
        iteration,
        object_change,
        max_support_shift,
        weights: summary,
    }
}

/// Final estimates of a batch run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub object: RealImage,
    pub psfs: LocalPsfSet,
    pub weights: WeightTable,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl From<Tip4awState> for RunOutput {
    fn from(state: Tip4awState) -> Self {
        RunOutput {
            object: state.object,
            psfs: state.psfs,
            weights: state.weights,
            diagnostics: state.diagnostics,
        }
    }
}

/// A failed run: the error and, when any iteration had started, the last
/// state that satisfied every feasibility constraint.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last_state: Option<Box<Tip4awState>>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.last_state {
            Some(state) => write!(f, "{} (after {} completed iterations)", self.error, state.iteration),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure {
            error,
            last_state: None,
        }
    }
}

/// Initialize and iterate `cfg.iterations` times.
pub fn run(stack: &ImageStack, cfg: &Tip4awConfig) -> std::result::Result<RunOutput, RunFailure> {
    run_with_progress(stack, cfg, |_| {})
}

/// [`run`], calling `progress` after every iteration.
pub fn run_with_progress(
    stack: &ImageStack,
    cfg: &Tip4awConfig,
    mut progress: impl FnMut(&IterationDiagnostics),
) -> std::result::Result<RunOutput, RunFailure> {
    let solver = Tip4aw::new(stack, cfg)?;
    let mut state = solver.initialize()?;
    for _ in 0..cfg.iterations {
        state = match solver.iterate(&state) {
            Ok(next) => next,
            Err(error) => {
                return Err(RunFailure {
                    error,
                    last_state: Some(Box::new(state)),
                })
            }
        };
        if let Some(d) = state.diagnostics.last() {
            progress(d);
        }
    }
    Ok(state.into())
}

/// Initial state for a stack.
pub fn initialize(stack: &ImageStack, cfg: &Tip4awConfig) -> Result<Tip4awState> {
    Tip4aw::new(stack, cfg)?.initialize()
}

/// One iteration on a stack. Recomputes the frame spectra; use [`Tip4aw`]
/// directly when iterating repeatedly.
pub fn iterate(state: &Tip4awState, stack: &ImageStack, cfg: &Tip4awConfig) -> Result<Tip4awState> {
    Tip4aw::new(stack, cfg)?.iterate(state)
}

/// Output of one online iteration.
#[derive(Debug, Clone)]
pub struct OnlineStep {
    /// Stream index of the oldest frame in the window.
    pub first_frame: usize,
    pub object: RealImage,
    pub diagnostics: IterationDiagnostics,
}

/// Result of [`run_online`]: one entry per window position, plus the PSFs
/// and weights of the final window.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub steps: Vec<OnlineStep>,
    pub psfs: LocalPsfSet,
    pub weights: WeightTable,
}

/// Moving-window processing: iteration `k` (from zero) uses frames
/// `k .. k + S'`. PSFs and weights of frames that stay in the window carry
/// over; an entering frame starts from a centered delta with each tile's
/// current mean weight.
pub fn run_online<I>(frames: I, cfg: &Tip4awConfig) -> std::result::Result<OnlineRun, RunFailure>
where
    I: IntoIterator<Item = RealImage>,
{
    let window = cfg
        .online_window
        .ok_or_else(|| Error::InvalidConfig(vec!["online processing needs a window length".into()]))?;
    cfg.validate(None, None)?;
    let mut stream = frames.into_iter();
    let initial: Vec<RealImage> = stream.by_ref().take(window).collect();
    if initial.len() < window {
        return Err(Error::StreamTooShort {
            len: initial.len(),
            window,
        }
        .into());
    }
    let stack = ImageStack::new(initial)?;
    let mut solver = Tip4aw::new(&stack, cfg)?;
    let mut state = solver.initialize()?;
    let mut steps = Vec::new();
    let mut first_frame = 0;
    loop {
        state = match solver.iterate(&state) {
            Ok(next) => next,
            Err(error) => {
                return Err(RunFailure {
                    error,
                    last_state: Some(Box::new(state)),
                })
            }
        };
        steps.push(OnlineStep {
            first_frame,
            object: state.object.clone(),
            diagnostics: state.diagnostics.last().cloned().expect("iteration recorded"),
        });
        let Some(frame) = stream.next() else { break };
        solver.pop_front_frame();
        state.remove_frame(0);
        solver.push_frame(&frame)?;
        state.push_frame(cfg.support_radius);
        first_frame += 1;
    }
    Ok(OnlineRun {
        steps,
        psfs: state.psfs,
        weights: state.weights,
    })
}
