//! Levenberg-Marquardt least squares and Nelder-Mead simplex minimization.
//!
//! Both solvers are deterministic: the same inputs produce the same iteration
//! trace bit for bit.

mod lm;
mod nelder_mead;

pub use lm::{forward_difference_jacobian, levenberg_marquardt, levenberg_marquardt_with_jacobian, LMConfig};
pub use nelder_mead::{nelder_mead, NMConfig};

use serde::{Deserialize, Serialize};

use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("objective is not finite at initial simplex vertex {vertex}")]
    NonFiniteSimplex { vertex: usize },
    #[error("problem has {residuals} residuals for {parameters} parameters")]
    Underdetermined { residuals: usize, parameters: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Outcome of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub solution: Vec<f64>,
    /// Sum of squares for least squares, objective value for Nelder-Mead.
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each iteration, starting with the initial value.
    pub trace: Vec<f64>,
}
