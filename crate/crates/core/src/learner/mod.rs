//! Episodic policy search with a reward-weighted group factor posterior.
//!
//! One outer iteration: sample `H` exploratory rollouts, turn rewards into
//! nonnegative weights (softmax with auto-tuned temperature), fit the
//! variational posterior over `(M, W, Z, α, τ)` by coordinate ascent on a
//! weighted ELBO, then adopt the posterior means as the next policy and score
//! it once. The inner loop is [`fit`]; the outer loop is [`learn`].

mod elbo;
mod fit;
mod learn;
mod posterior;
mod updates;
mod weights;

pub use elbo::elbo;
pub use fit::{fit, FitOutcome};
pub use learn::{
    collect_batch, evaluate_mean_policy, learn, IterationRecord, LearnConfig, LearningTrace,
};
pub(crate) use learn::push_initial_evaluation;
pub use posterior::{GammaMatrix, GammaVector, QPosterior};
pub use updates::{update_qalpha, update_qm, update_qtau, update_qw, update_qz, ObservationSet};
pub use weights::{auto_temperature, compute_weights, reward_to_weights, AutoBeta, WeightOutcome};

use serde::{Deserialize, Serialize};

use crate::error::LearnError;
use crate::policy::PolicyParams;
use crate::{DenseMatrix, DenseVector};

/// Softmax temperature for reward weighting: auto-tuned to hit an effective
/// sample size of H/2, or a fixed positive value. Serialises as the string
/// `"auto"` or a bare number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemperatureMode {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TemperatureRepr {
    Name(String),
    Value(f64),
}

impl Serialize for TemperatureMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TemperatureMode::Auto => serializer.serialize_str("auto"),
            TemperatureMode::Fixed(beta) => serializer.serialize_f64(*beta),
        }
    }
}

impl<'de> Deserialize<'de> for TemperatureMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match TemperatureRepr::deserialize(deserializer)? {
            TemperatureRepr::Name(name) if name == "auto" => Ok(TemperatureMode::Auto),
            TemperatureRepr::Name(name) => Err(serde::de::Error::custom(format!(
                "unknown temperature '{name}', expected \"auto\" or a number"
            ))),
            TemperatureRepr::Value(beta) => Ok(TemperatureMode::Fixed(beta)),
        }
    }
}

/// Priors and inner-loop controls for the variational fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Latent exploration dimension K.
    pub k: usize,
    /// Structural rank of the ARD precision coupling (groups × factors).
    pub r: usize,
    /// Gamma prior shape/rate on the per-group noise precisions τ.
    pub a_tau: f64,
    pub b_tau: f64,
    /// Gamma prior shape/rate on the ARD precisions α.
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Reward-weighting temperature.
    pub beta: TemperatureMode,
    pub inner_max_iters: usize,
    pub inner_rel_tol: f64,
    /// Ceiling on E[τ] so a perfectly reconstructed batch cannot freeze
    /// exploration entirely.
    pub tau_cap: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            k: 3,
            r: 1,
            a_tau: 1e-3,
            b_tau: 1e-3,
            a_alpha: 1e-3,
            b_alpha: 1e-3,
            beta: TemperatureMode::Auto,
            inner_max_iters: 100,
            inner_rel_tol: 1e-6,
            tau_cap: 1e4,
        }
    }
}

impl HyperParams {
    /// Check internal consistency and agreement with a policy's shape.
    pub fn validate_for(&self, params: &PolicyParams) -> Result<(), LearnError> {
        let positive = [
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("inner_rel_tol", self.inner_rel_tol),
            ("tau_cap", self.tau_cap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(LearnError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let TemperatureMode::Fixed(beta) = self.beta {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(LearnError::InvalidConfig(format!(
                    "fixed beta must be positive, got {beta}"
                )));
            }
        }
        if self.inner_max_iters == 0 {
            return Err(LearnError::InvalidConfig("inner_max_iters must be at least 1".into()));
        }
        if self.k != params.latent_dim() {
            return Err(LearnError::InvalidConfig(format!(
                "hyper k={} but policy W has {} columns",
                self.k,
                params.latent_dim()
            )));
        }
        if self.k > 0 {
            let bound = self.k.min(params.groups.num_groups());
            if self.r < 1 || self.r > bound {
                return Err(LearnError::InvalidConfig(format!(
                    "rank r={} outside 1..={bound}",
                    self.r
                )));
            }
        }
        Ok(())
    }
}

/// One executed exploratory rollout.
#[derive(Clone, Debug)]
pub struct RolloutRecord {
    /// The exploration draws behind the episode: one entry in per-rollout
    /// mode, T entries in per-timestep mode.
    pub draws: Vec<crate::policy::ExplorationDraw>,
    /// Realised parameter matrices θ = W·Z + M + E, aligned with `draws`.
    pub thetas: Vec<DenseMatrix>,
    /// Scalar episode reward (forward displacement for the crawler).
    pub reward: f64,
    /// Reward weight d_h; filled by the weighting step, zero until then.
    pub weight: f64,
    /// Seed this rollout was derived from (replays the whole episode).
    pub seed: u64,
}

/// Effective sample size `(Σd)²/Σd²` of a weight vector.
pub fn effective_sample_size(weights: &DenseVector) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|d| d * d).sum();
    if sq == 0.0 {
        0.0
    } else {
        sum * sum / sq
    }
}
