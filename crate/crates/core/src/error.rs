use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("image must have at least one row and column, got {rows}x{cols}")]
    EmptyImage { rows: usize, cols: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("PSF for source pixel ({row}, {col}) is not nonnegative with unit sum (sum = {sum})")]
    InvalidPsf { row: usize, col: usize, sum: f64 },

    #[error("cannot split {extent} pixels into {count} half-overlapping tiles (need 1 <= count <= extent / 2)")]
    InvalidTiling { extent: usize, count: usize },

    #[error("tile ({p}, {q}) is outside the {tiles_v}x{tiles_h} grid")]
    TileOutOfRange {
        p: usize,
        q: usize,
        tiles_v: usize,
        tiles_h: usize,
    },

    #[error("expected {expected} local objects, got {found}")]
    TileCountMismatch { expected: usize, found: usize },

    #[error("signal-to-noise ratio must be positive, got {0}")]
    InvalidSnr(f64),

    #[error("no frames supplied")]
    EmptyStack,

    #[error("frame count mismatch: {images} image spectra but {otfs} transfer functions")]
    FrameCountMismatch { images: usize, otfs: usize },

    #[error("weight {value} for frame {frame} is negative or not finite")]
    InvalidWeight { frame: usize, value: f64 },

    #[error("all frame weights are zero")]
    DegenerateWeights,

    #[error("object has no positive mass after clipping")]
    ObjectCollapse,

    #[error("apodized object spectrum does not exceed the threshold {threshold} in any bin")]
    ApodizedObjectCollapse { threshold: f64 },

    #[error("PSF has no positive mass after projection")]
    PsfCollapse,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("stream of {len} frames is shorter than the online window of {window}")]
    StreamTooShort { len: usize, window: usize },

    #[error("tile ({p}, {q}), frame {frame}: {source}")]
    AtTile {
        p: usize,
        q: usize,
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_tile(self, p: usize, q: usize, frame: usize) -> Self {
        Error::AtTile {
            p,
            q,
            frame,
            source: Box::new(self),
        }
    }
}
