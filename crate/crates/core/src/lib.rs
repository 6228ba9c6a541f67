//! Semantics-aware occupancy grid prediction: evidential grids, a synthetic
//! scene simulator, a two-prong convolutional-recurrent predictor and the
//! evaluation metrics used to score it.

pub mod error;
pub mod grid;
pub mod metrics;
pub mod predict;
pub mod sim;

pub use error::{Error, Result};
