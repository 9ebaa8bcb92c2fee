use thiserror::Error;

use crate::model::State;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rate `{name}` must be a finite positive number, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },

    #[error("levels must satisfy 1 <= ell_d < ell_u, got ell_d={ell_d}, ell_u={ell_u}")]
    LevelOrderViolation { ell_d: u64, ell_u: u64 },

    #[error("state ({}, {}) is not in the state space", .0.ell, .0.k)]
    StateOutsideS(State),

    #[error("unstable model: rho2 = {rho2} (stationary law requires rho2 < 1)")]
    Unstable { rho2: f64 },

    #[error("n = {n} is infeasible for this scaling sequence: {reason}")]
    InfeasibleN { n: u64, reason: String },

    #[error("invalid diffusion parameters: {0}")]
    InvalidDiffusionParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("probability maps are defined on different state sets")]
    DomainMismatch,

    #[error("MGF diverges at theta = {theta} (needs theta < {bound})")]
    DivergentSum { theta: f64, bound: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
