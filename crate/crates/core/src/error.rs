use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("failed to decode image: {0}")]
    Decode(String),

    #[error("image is {width}x{height}, at least 2x2 is required")]
    TooSmall { width: usize, height: usize },

    #[error("grid values must be finite")]
    NonFinite,

    #[error("grid has {got} values, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("cell ({0}, {1}) is outside the grid")]
    CellOutOfRange(usize, usize),

    #[error("point ({0}, {1}) is outside the grid domain")]
    OutOfDomain(f64, f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("level {0} is within tolerance of a critical value of the cell")]
    CriticalLevel(f64),

    #[error("contour at level {0} ran into the grid border")]
    OpenContour(f64),

    #[error("no seed for level {value} on arc {arc}")]
    SeedLookup { arc: usize, value: f64 },

    #[error("join and split trees disagree: {0}")]
    InconsistentTrees(String),

    #[error("contour has {0} points, at least 3 are required")]
    DegenerateContour(usize),

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
