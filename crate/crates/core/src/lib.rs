//! Robust nuclear-norm penalized matrix completion.
//!
//! Estimators for the uniform-sampling trace regression model with Huber,
//! absolute-value and quadratic losses, solved by accelerated proximal
//! gradient descent with backtracking. Alongside the solver the crate carries
//! the quantities needed to check the estimator against its theory
//! (semi-norms of the active decomposition, tuning levels, oracle rates and
//! margin constants) and a simulation / real-data harness that writes CSV
//! artifacts.

pub mod error;
pub mod harness;
pub mod losses;
pub mod lrps;
pub mod model;
pub mod prox;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
pub use losses::LossSpec;
pub use model::{
    CorruptionModel, GroundTruth, NoiseKind, NoiseModel, Observation, ObservationSet,
    ParameterMatrix,
};
pub use solver::{SolveResult, SolverConfig};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
