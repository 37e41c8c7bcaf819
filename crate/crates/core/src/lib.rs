//! Jackknife-based advanced RAIM for multi-constellation GNSS.
//!
//! The crate covers the measurement model and its least-squares operators,
//! non-Gaussian error bounds and their convolution, the jackknife detector,
//! protection levels, and a worldwide availability simulation.

pub mod dist;
pub mod error;
pub mod integrity;
pub mod jackknife;
pub mod model;
pub mod overbound;
pub mod sim;
pub mod threat;

pub use error::{Error, Result};
pub use model::{Constellation, Scalar};

pub type LinearModel = model::LinearModel<f64>;
pub type SolutionOps = model::SolutionOps<f64>;
pub type SubsetOps = model::SubsetOps<f64>;
pub type LinearModel32 = model::LinearModel<f32>;
