//! Load forecasting toolkit: synthetic feeder-load generation, SVR
//! training with time-series-aware model selection, forecast metrics,
//! residual diagnostics, and distribution-grid impact simulation.

pub mod diagnostics;
pub mod error;
pub mod features;
pub mod gridimpact;
pub mod loadgen;
pub mod metrics;
pub mod modelsel;
pub mod svr;
pub mod timeseries;

pub use error::{Error, Result};
