//! Rollout evaluation interface and synthetic benchmark environments.
//!
//! The learner hands an environment everything one episode needs: the executed
//! joint-target sequence, the realised parameter matrices behind it, and a
//! derived seed for any environment-side noise. Physical environments (the
//! crawler) consume the action sequence; synthetic stubs score the realised
//! parameters directly.

use nalgebra::DMatrix;

use crate::error::EnvError;
use crate::rng::rng_from_seed;
use crate::{DenseMatrix, DenseVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// One episode, ready to evaluate.
#[derive(Clone, Debug)]
pub struct RolloutPlan {
    /// Joint targets per step, length T.
    pub actions: Vec<DenseVector>,
    /// Realised parameter matrices θ = W·Z + M + E: one entry in per-rollout
    /// mode, T entries in per-timestep mode.
    pub thetas: Vec<DenseMatrix>,
    /// Seed for environment-side stochasticity.
    pub seed: u64,
}

impl RolloutPlan {
    /// The single realised θ, averaging per-timestep draws if present.
    pub fn effective_theta(&self) -> Result<DenseMatrix, EnvError> {
        match self.thetas.len() {
            0 => Err(EnvError::InvalidPlan("plan carries no realised parameters".into())),
            1 => Ok(self.thetas[0].clone()),
            n => {
                let mut sum = self.thetas[0].clone();
                for theta in &self.thetas[1..] {
                    sum += theta;
                }
                Ok(sum / n as f64)
            }
        }
    }
}

/// A deterministic-given-seed episode evaluator returning a scalar reward.
pub trait RolloutEnv {
    fn evaluate(&self, plan: &RolloutPlan) -> Result<f64, EnvError>;
}

/// Always returns the same reward; exercises degenerate weighting paths.
#[derive(Clone, Copy, Debug)]
pub struct ConstantEnv(pub f64);

impl RolloutEnv for ConstantEnv {
    fn evaluate(&self, _plan: &RolloutPlan) -> Result<f64, EnvError> {
        Ok(self.0)
    }
}

/// `R(θ) = −‖θ − θ*‖²_F`: a smooth bowl around a known optimum.
#[derive(Clone, Debug)]
pub struct QuadraticEnv {
    pub target: DenseMatrix,
}

impl QuadraticEnv {
    pub fn new(target: DenseMatrix) -> Self {
        Self { target }
    }

    /// A fixed, reproducible target with entries of mixed sign and scale.
    pub fn with_random_target(d: usize, j: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let target = DMatrix::from_fn(d, j, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self { target }
    }
}

impl RolloutEnv for QuadraticEnv {
    fn evaluate(&self, plan: &RolloutPlan) -> Result<f64, EnvError> {
        let theta = plan.effective_theta()?;
        if theta.shape() != self.target.shape() {
            return Err(EnvError::InvalidPlan(format!(
                "theta is {:?}, stub target is {:?}",
                theta.shape(),
                self.target.shape()
            )));
        }
        Ok(-(&theta - &self.target).norm_squared())
    }
}

/// Reward with a planted one-dimensional deviation structure.
///
/// `R(θ) = −w_par·‖uᵀθ − c·vᵀ‖² − w_perp·‖θ − u(uᵀθ)‖²_F` for unit vectors
/// `u` (dense in action space) and `v` (in basis space). The optimum is the
/// rank-1 matrix `c·u·vᵀ`; progress requires moving coherently along `u`
/// while deviations off that axis are penalised `w_perp/w_par` times harder.
/// A learner that discovers the shared direction explores far more
/// efficiently than one restricted to per-dimension noise.
#[derive(Clone, Debug)]
pub struct PlantedSubspaceEnv {
    u: DenseVector,
    v: DenseVector,
    pub c: f64,
    pub w_par: f64,
    pub w_perp: f64,
}

impl PlantedSubspaceEnv {
    /// Draw the planted directions from the seed; `u` is dense (every action
    /// dimension participates), so no axis-aligned method can represent it.
    pub fn new(d: usize, j: usize, c: f64, w_par: f64, w_perp: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut u = DenseVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        // keep entries bounded away from zero so u is never nearly axis-aligned
        for x in u.iter_mut() {
            let sign = if *x < 0.0 { -1.0 } else { 1.0 };
            *x = sign * (0.3 + x.abs());
        }
        u /= u.norm();
        let mut v = DenseVector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
        v /= v.norm();
        Self { u, v, c, w_par, w_perp }
    }

    /// The planted action-space direction (unit norm).
    pub fn planted_direction(&self) -> &DenseVector {
        &self.u
    }

    /// The optimal parameter matrix `c·u·vᵀ`.
    pub fn optimum(&self) -> DenseMatrix {
        self.c * &self.u * self.v.transpose()
    }
}

impl RolloutEnv for PlantedSubspaceEnv {
    fn evaluate(&self, plan: &RolloutPlan) -> Result<f64, EnvError> {
        let theta = plan.effective_theta()?;
        if theta.nrows() != self.u.len() || theta.ncols() != self.v.len() {
            return Err(EnvError::InvalidPlan(format!(
                "theta is {:?}, stub expects {}x{}",
                theta.shape(),
                self.u.len(),
                self.v.len()
            )));
        }
        let along = self.u.transpose() * &theta; // 1×J
        let par_err = (&along - self.c * self.v.transpose()).norm_squared();
        let perp = &theta - &self.u * &along;
        Ok(-self.w_par * par_err - self.w_perp * perp.norm_squared())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn plan_for(theta: DenseMatrix) -> RolloutPlan {
        RolloutPlan { actions: Vec::new(), thetas: vec![theta], seed: 0 }
    }

    #[test]
    fn quadratic_is_zero_at_target_and_negative_elsewhere() {
        let env = QuadraticEnv::with_random_target(3, 4, 9);
        assert_abs_diff_eq!(env.evaluate(&plan_for(env.target.clone())).unwrap(), 0.0);
        let off = &env.target + DMatrix::from_element(3, 4, 0.5);
        assert_abs_diff_eq!(env.evaluate(&plan_for(off)).unwrap(), -12.0 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn planted_optimum_scores_zero() {
        let env = PlantedSubspaceEnv::new(8, 10, 3.0, 1.0, 3.0, 11);
        let r = env.evaluate(&plan_for(env.optimum())).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        assert!(env.evaluate(&plan_for(DMatrix::zeros(8, 10))).unwrap() < -1.0);
    }

    #[test]
    fn planted_perpendicular_deviation_costs_more() {
        let env = PlantedSubspaceEnv::new(8, 10, 0.0, 1.0, 4.0, 12);
        let u = env.planted_direction().clone();
        // deviation along u, magnitude 1 in basis column 0
        let mut along = DMatrix::zeros(8, 10);
        along.set_column(0, &u);
        // same magnitude orthogonal to u
        let mut w = DenseVector::zeros(8);
        w[0] = 1.0;
        let mut perp_dir = &w - &u * (u.dot(&w));
        perp_dir /= perp_dir.norm();
        let mut perp = DMatrix::zeros(8, 10);
        perp.set_column(0, &perp_dir);
        let r_along = env.evaluate(&plan_for(along)).unwrap();
        let r_perp = env.evaluate(&plan_for(perp)).unwrap();
        assert_abs_diff_eq!(r_along, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r_perp, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn per_timestep_thetas_are_averaged() {
        let env = QuadraticEnv::new(DMatrix::zeros(2, 2));
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_element(2, 2, -1.0);
        let plan = RolloutPlan { actions: Vec::new(), thetas: vec![a, b], seed: 0 };
        assert_abs_diff_eq!(env.evaluate(&plan).unwrap(), 0.0, epsilon = 1e-12);
    }
}
