//! Simulation, quasi-maximum likelihood estimation and inference for
//! constant-conditional-correlation asymmetric power GARCH models.

pub mod cli;
pub mod error;
pub mod inference;
pub mod estimate;
pub mod likelihood;
pub mod montecarlo;
pub mod optim;
pub mod params;
pub mod simulate;
pub mod stationarity;
pub mod volatility;

pub use error::{Error, Result};
