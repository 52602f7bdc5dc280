//! Library side of the `tip4aw` command-line tool: file formats, manifests,
//! PSF montages, charts and the parameter sweeps.

pub mod imageio;
pub mod manifest;
pub mod montage;
pub mod plot;
pub mod sweep;
