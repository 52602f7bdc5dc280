//! Blind multi-frame deconvolution of image stacks degraded by space-variant
//! blur.
//!
//! The image is split into overlapping tiles. Each tile carries its own PSF
//! per frame, and the PSFs are re-estimated from the current object. Frames
//! whose PSF is unstable under a change of apodization width get a small
//! weight in the next multi-frame Wiener step.
//!
//! ```no_run
//! use tip4aw::{driver, simulate};
//!
//! let truth = simulate::test_object(128, 128, 1)?;
//! let gen = simulate::RandomFieldGenerator(simulate::FieldParams::default());
//! let sim = simulate::make_stack(&truth, 10, &gen, 0.01, 7)?;
//! let cfg = driver::Tip4awConfig { tiles_v: 3, tiles_h: 3, ..Default::default() };
//! let out = driver::run(&sim.stack, &cfg).map_err(|f| f.error)?;
//! println!("{}", out.object.sum());
//! # Ok::<(), tip4aw::Error>(())
//! ```

pub mod driver;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod psf;
pub mod simulate;
pub mod spectral;
pub mod tiling;

pub use driver::{run, run_online, OnlineRun, run_with_progress, ImageStack, Tip4aw, Tip4awConfig, Tip4awState, Weighting};
pub use error::{Error, Result};
pub use spectral::{dft2, idft2, idft2_real, CenteredKernel, KernelPatch, RealImage, Spectrum};
pub use tiling::{build_grid, TileGrid};
