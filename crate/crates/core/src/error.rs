use thiserror::Error;

/// Errors produced by the latency models, solvers and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid server: {0}")]
    InvalidServer(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("rate {rate} jobs/s is outside the domain [0, {mu}) of the latency function")]
    Domain { rate: f64, mu: f64 },

    #[error("target {target} s does not exceed the zero-load value {floor} s")]
    BelowFloor { target: f64, floor: f64 },

    #[error(
        "target {target} s exceeds the largest attainable value {supremum} s before saturation"
    )]
    Saturation { target: f64, supremum: f64 },

    #[error("offered load {load} jobs/s is infeasible (must lie in (0, {max_load}])")]
    InfeasibleLoad { load: f64, max_load: f64 },

    #[error("numeric inversion failed: {0}")]
    InversionFailure(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
