//! Stochastic mirror descent over pluggable potentials, losses and models,
//! with executable audits of its conservation identity and minimax ratio, and
//! independent oracle solvers for the implicitly regularized limit.

pub mod auditor;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod models;
pub mod oracles;
pub mod potentials;

pub use dataset::Dataset;
pub use engine::{run, smd_step, Problem, RunConfig, RunTrace, SampleOrder, StepSchedule, StopRule};
pub use error::{Result, SmdError};
pub use linalg::{Matrix, Vector};
pub use losses::Loss;
pub use models::{Model, ModelSpec};
pub use potentials::{Potential, PotentialSpec};
