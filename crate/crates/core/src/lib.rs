//! Optimal and selfish allocation of computing tasks across heterogeneous
//! servers.
//!
//! Each server is characterized by a fixed two-way path delay and a
//! load-dependent queueing latency. The crate computes the allocation that
//! minimizes the system mean latency, the Nash equilibrium reached when users
//! pick servers selfishly, the resulting price of anarchy, and provides a
//! discrete-event simulator to check the analytic figures empirically.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bisect;
pub mod error;
pub mod latency;
pub mod poa;
pub mod scenario;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use latency::{GenericLatencyModel, NumericConfig, QueueModel, ServerSpec};
pub use poa::{
    asymptotic_poa, default_grid, poa_at, poa_sweep, rho_grid, worst_case_poa, CandidateLocation,
    PoaCandidate, PoaCurve, PoaPoint, WorstCase,
};
pub use scenario::Scenario;
pub use simulator::{simulate, validate, Horizon, SimulationConfig, SimulationReport, Validation};
pub use solver::{
    activation_thresholds, average_latency, solve, solve_nep, solve_optimal, sort_servers,
    AllocationKind, AllocationResult, ThresholdTable,
};
