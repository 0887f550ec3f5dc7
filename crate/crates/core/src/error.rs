//! Error types shared across the crate.

use thiserror::Error;

/// Errors from policy construction and action evaluation.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("basis config invalid: period_steps={period_steps}, num_basis={num_basis} ({reason})")]
    InvalidBasis {
        period_steps: usize,
        num_basis: usize,
        reason: &'static str,
    },
    #[error("group structure invalid: {0}")]
    InvalidGroups(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("tau must be positive and finite, got {value} for group {group}")]
    InvalidTau { group: usize, value: f64 },
    #[error("policy JSON malformed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Errors from a rollout environment evaluation.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("rollout plan invalid: {0}")]
    InvalidPlan(String),
    #[error("environment failure: {0}")]
    Failed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Errors from the learner's outer loop.
#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learn config: {0}")]
    InvalidConfig(String),
    #[error("non-finite reward {reward} from rollout {rollout} at iteration {iteration}")]
    NonFiniteReward {
        iteration: usize,
        rollout: usize,
        reward: f64,
    },
    #[error(
        "environment failed {attempts} times for rollout {rollout} at iteration {iteration}: {source}"
    )]
    EnvExhausted {
        iteration: usize,
        rollout: usize,
        attempts: usize,
        source: EnvError,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Errors from the crawler simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid media parameters: {0}")]
    InvalidMedia(String),
    #[error("invalid fin shape: {0}")]
    InvalidFin(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("action must be 4 finite joint targets, got {0}")]
    InvalidAction(String),
    #[error("unknown preset {kind} '{name}'")]
    UnknownPreset { kind: &'static str, name: String },
    #[error("calibration file malformed: {0}")]
    Calibration(String),
}
