//! Reference solvers for checking `taskalloc-core`.
//!
//! Everything here works from latency evaluations alone: no inverse
//! functions, thresholds or multipliers from the production solver are used.
//! The costs are exponential (grid search) or iterative (best response), so
//! these routines belong in tests and the `validate` command only.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod best_response;
mod brute;

use taskalloc_core::{Error as CoreError, Scenario};
use thiserror::Error;

pub use best_response::{best_response_nep, check_no_profitable_deviation, DEFAULT_DEVIATION};
pub use brute::{brute_force_optimal, mean_latency, MAX_BRUTE_FORCE_SERVERS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("grid search supports at most {max} servers, got {n}")]
    TooManyServers { n: usize, max: usize },

    #[error("best response did not converge after {iters} iterations (latency spread {spread} s)")]
    NoConvergence { iters: usize, spread: f64 },

    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

/// Knobs shared by the reference solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Probability step of the simplex grid.
    pub grid_step: f64,
    /// Relative latency spread at which best response stops.
    pub br_tolerance: f64,
    /// Iteration cap for best response and for refinement passes.
    pub max_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.02,
            br_tolerance: 1e-12,
            max_iters: 200_000,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step <= 0.5) {
            return Err(OracleError::InvalidConfig(format!(
                "grid_step must lie in (0, 0.5], got {}",
                self.grid_step
            )));
        }
        if !(self.br_tolerance > 0.0 && self.br_tolerance.is_finite()) {
            return Err(OracleError::InvalidConfig(format!(
                "br_tolerance must be positive, got {}",
                self.br_tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(OracleError::InvalidConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_load(sc: &Scenario, load: f64) -> Result<()> {
    let max_load = sc.max_load();
    if load > 0.0 && load <= max_load {
        Ok(())
    } else {
        Err(CoreError::InfeasibleLoad { load, max_load }.into())
    }
}

/// Start point for iterative searches: probabilities proportional to `mu`.
fn proportional_start(sc: &Scenario) -> Vec<f64> {
    let capacity = sc.capacity();
    sc.servers().iter().map(|s| s.mu() / capacity).collect()
}
