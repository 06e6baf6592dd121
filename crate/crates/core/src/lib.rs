//! Ramp metering for highways whose cell capacities switch between modes
//! according to a continuous-time Markov chain.
//!
//! [`model`] holds the cell transmission model, [`stability`] the drift
//! certificates, [`sim`] the Monte-Carlo simulator and [`design`] the
//! controller synthesis and baselines.

pub mod design;
pub mod error;
pub mod export;
pub mod model;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
