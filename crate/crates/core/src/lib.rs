//! Gaussian-state model of continuous-variable entanglement distributed
//! into three atomic memories, with inseparability criteria, a simulated
//! homodyne measurement chain and a batch command-line front end.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod gaussian;
pub mod homodyne;
pub mod network;
pub mod optimize;
pub mod report;
pub mod sweep;

pub use criteria::{evaluate_criteria, CriterionResult, GainTriple};
pub use error::{Error, Result};
pub use gaussian::{GaussianChannel, GaussianState, Quadrature, SymplecticOp};
pub use network::{run_pipeline, ExperimentSpec, Pipeline, Stage};
