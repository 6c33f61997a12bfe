//! Hierarchical topological segmentation of grayscale images.
//!
//! The image is treated as the bilinear interpolant of its pixel grid. Its
//! contour tree is simplified by persistence at two thresholds, and every
//! arc of each simplified tree is pulled back to the image plane as a
//! region bounded by level-set curves. The result is written as SVG with
//! a JSON sidecar.

pub mod error;
pub mod field;
pub mod grid;
pub mod lens;
pub mod pipeline;
pub mod tree;
pub mod vectorize;

pub use error::{Error, Result};
