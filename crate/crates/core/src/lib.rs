//! Path-integral Monte Carlo and exact single-site solver for quantum
//! anharmonic crystals.

pub mod error;
mod fft;
pub mod grr;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sampler;
pub mod scan;
pub mod stats;

pub use error::{Error, Result};
pub use stats::Estimate;
