//! Simulation of quantum stochastic processes in the process tensor picture.
//!
//! The crate samples multi-time measurement statistics of an open system,
//! builds the equivalent many-body Choi state, and provides the concrete
//! models and output statistics used in the accompanying experiments.

pub mod ensembles;
pub mod error;
pub mod gates;
pub mod instruments;
pub mod linalg;
pub mod models;
pub mod process;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, DensityOperator, StateVector, C64};
pub use rng::RngStream;
