//! Federated training simulator for a GRU-based probabilistic livestock
//! growth forecaster.
//!
//! - [`nn`]: tensors, parameters and hand-derived gradients
//! - [`model`]: the forecaster and its Gaussian NLL objective
//! - [`data`]: synthetic multi-farm population and preprocessing
//! - [`fl`]: centralized, local-only, FedAvg and personalized training
//! - [`eval`]: metrics and stratified comparisons

pub mod data;
pub mod error;
pub mod eval;
pub mod fl;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
