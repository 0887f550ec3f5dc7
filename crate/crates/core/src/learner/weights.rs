//! Reward-to-weight transform and its temperature tuning.
//!
//! Weights are a softmax of the batch rewards rescaled to sum to H, so the
//! posterior fit sees an "effective batch" biased toward high-reward
//! rollouts but with unchanged total mass. Subtracting the batch maximum
//! before exponentiating makes the transform invariant to reward shifts and
//! immune to overflow; the auto temperature targets an effective sample size
//! of H/2, which is scale-free across environments whose rewards differ by
//! orders of magnitude (pixels vs centimetres).

use nalgebra::DVector;

use super::{effective_sample_size, TemperatureMode};
use crate::error::LearnError;
use crate::DenseVector;

/// Bisection bracket for `x = β·std(rewards)`.
const BRACKET_LO: f64 = 1e-6;
const BRACKET_HI: f64 = 1e6;

/// Result of the automatic temperature search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoBeta {
    pub beta: f64,
    /// ESS target unreachable within the bracket; `beta` is the bracket max.
    pub saturated: bool,
    /// All rewards equal; `beta` is 1 and weights are uniform.
    pub uniform: bool,
}

/// Weights plus the diagnostics the trace records.
#[derive(Clone, Debug)]
pub struct WeightOutcome {
    pub weights: DenseVector,
    pub beta: f64,
    pub ess: f64,
    pub saturated: bool,
    pub uniform: bool,
}

/// `d_h = H·exp(β(R_h − max R)) / Σ_h exp(β(R_h − max R))`.
///
/// Invariant under adding a constant to every reward, nondecreasing in `R_h`,
/// and the weights sum to H.
pub fn reward_to_weights(rewards: &[f64], beta: f64) -> Result<DenseVector, LearnError> {
    if rewards.is_empty() {
        return Err(LearnError::InvalidConfig("empty reward batch".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(LearnError::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    for (h, &r) in rewards.iter().enumerate() {
        if !r.is_finite() {
            return Err(LearnError::NonFiniteReward { iteration: 0, rollout: h, reward: r });
        }
    }
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = rewards.iter().map(|&r| (beta * (r - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    let h = rewards.len() as f64;
    Ok(DVector::from_iterator(rewards.len(), exps.iter().map(|&e| h * e / total)))
}

/// ESS of the softmax weights as a function of `x = β·std`, expressed through
/// the standardised rewards `z_h = (R_h − max R)/std`.
fn ess_at(z: &[f64], x: f64) -> f64 {
    let sum: f64 = z.iter().map(|&zh| (x * zh).exp()).sum();
    let sq: f64 = z.iter().map(|&zh| (2.0 * x * zh).exp()).sum();
    sum * sum / sq
}

/// Find β so the weight ESS hits H/2 within 1% of H.
///
/// Bisection runs on `x = β·std(rewards)`, bracket `[1e-6, 1e6]`; ESS is
/// monotone nonincreasing in β. If even the bracket max cannot reach the
/// target (e.g. H = 2, where ESS → 1 only in the β → ∞ limit), the bracket
/// max is returned with `saturated` set. All-equal rewards return β = 1 with
/// `uniform` set.
pub fn auto_temperature(rewards: &[f64]) -> Result<AutoBeta, LearnError> {
    if rewards.len() < 2 {
        return Err(LearnError::InvalidConfig(format!(
            "auto temperature needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    for (h, &r) in rewards.iter().enumerate() {
        if !r.is_finite() {
            return Err(LearnError::NonFiniteReward { iteration: 0, rollout: h, reward: r });
        }
    }
    let h = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / h;
    let var = rewards.iter().map(|&r| (r - mean).powi(2)).sum::<f64>() / h;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(AutoBeta { beta: 1.0, saturated: false, uniform: true });
    }
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = rewards.iter().map(|&r| (r - max) / std).collect();
    let target = h / 2.0;
    let tol = 0.01 * h;
    if ess_at(&z, BRACKET_HI) > target - 1e-9 {
        return Ok(AutoBeta { beta: BRACKET_HI / std, saturated: true, uniform: false });
    }
    let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
    let mut x = (lo * hi).sqrt();
    for _ in 0..200 {
        x = (lo * hi).sqrt();
        let ess = ess_at(&z, x);
        if (ess - target).abs() <= tol {
            break;
        }
        if ess > target {
            lo = x;
        } else {
            hi = x;
        }
    }
    Ok(AutoBeta { beta: x / std, saturated: false, uniform: false })
}

/// Apply the configured temperature mode and package the diagnostics.
pub fn compute_weights(
    rewards: &[f64],
    mode: &TemperatureMode,
) -> Result<WeightOutcome, LearnError> {
    let auto = match mode {
        TemperatureMode::Auto => Some(auto_temperature(rewards)?),
        TemperatureMode::Fixed(_) => None,
    };
    let beta = match (mode, &auto) {
        (TemperatureMode::Fixed(beta), _) => *beta,
        (TemperatureMode::Auto, Some(a)) => a.beta,
        _ => unreachable!(),
    };
    let weights = reward_to_weights(rewards, beta)?;
    let ess = effective_sample_size(&weights);
    let uniform = auto.map(|a| a.uniform).unwrap_or_else(|| {
        rewards.windows(2).all(|w| w[0] == w[1])
    });
    Ok(WeightOutcome {
        weights,
        beta,
        ess,
        saturated: auto.map(|a| a.saturated).unwrap_or(false),
        uniform,
    })
}
