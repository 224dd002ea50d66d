//! Data generation, training, evaluation, ablation sweeps and gradient
//! checks behind the `tride` command.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod train;

pub use error::{CliError, Result};
