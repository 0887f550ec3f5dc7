//! Outer search loop: collect rollouts, weight, fit, evaluate.

use serde::{Deserialize, Serialize};

use super::fit::fit;
use super::weights::compute_weights;
use super::{HyperParams, RolloutRecord};
use crate::env::{RolloutEnv, RolloutPlan};
use crate::error::{EnvError, LearnError};
use crate::policy::{
    basis_vector, mean_action, realized_theta, sample_exploration, DrawMode, PolicyParams,
    PolicyParamsJson,
};
use crate::rng::{child_seed, rng_from_seed};

/// Outer-loop configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Outer iterations. Zero is allowed and records only the initial
    /// mean-policy evaluation.
    pub iterations: usize,
    /// Exploratory rollouts H per iteration.
    pub rollouts: usize,
    /// Steps T per episode.
    pub steps: usize,
    pub hyper: HyperParams,
    pub mode: DrawMode,
    /// How often one rollout may be re-drawn after an environment failure
    /// before the iteration aborts.
    pub max_env_retries: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            rollouts: 20,
            steps: 20,
            hyper: HyperParams::default(),
            mode: DrawMode::PerRollout,
            max_env_retries: 20,
        }
    }
}

/// Everything one iteration produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number; 0 marks the initial-evaluation record of a
    /// zero-iteration run.
    pub iteration: usize,
    /// Reward of the mean policy extracted by this iteration.
    pub mean_policy_reward: f64,
    /// Rewards of the exploratory batch, in rollout order.
    pub batch_rewards: Vec<f64>,
    /// Seed each rollout was derived from.
    pub rollout_seeds: Vec<u64>,
    /// Softmax temperature used for the weights (NaN when not applicable).
    pub beta: f64,
    /// Effective sample size of the weights (NaN when not applicable).
    pub ess: f64,
    pub weights_uniform: bool,
    pub beta_saturated: bool,
    /// ELBO after each inner sweep (empty for methods without a posterior).
    pub elbo: Vec<f64>,
    pub inner_converged: bool,
    /// Expected noise precision per group.
    pub e_tau: Vec<f64>,
    /// Expected ARD precisions, groups×K (empty when K = 0).
    pub e_alpha: Vec<Vec<f64>>,
    /// Policy after this iteration's update.
    pub policy: PolicyParamsJson,
    /// Environment failures that forced re-draws this iteration.
    pub env_retries: u64,
    /// Seed of the mean-policy evaluation episode.
    pub mean_eval_seed: u64,
}

/// Full learning history of one session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearningTrace {
    pub method: String,
    pub session_seed: u64,
    /// Steps per episode.
    pub steps: usize,
    pub init_policy: PolicyParamsJson,
    pub iterations: Vec<IterationRecord>,
    /// Total environment evaluations performed (exploration + mean policy).
    pub executions: u64,
}

impl LearningTrace {
    /// Policy after the last iteration (the initial policy if none ran).
    pub fn final_policy(&self) -> Result<PolicyParams, crate::error::PolicyError> {
        match self.iterations.last() {
            Some(rec) => PolicyParams::from_json(&rec.policy),
            None => PolicyParams::from_json(&self.init_policy),
        }
    }
}

/// Build the episode plan for one exploration draw sequence.
fn build_plan(
    params: &PolicyParams,
    steps: usize,
    mode: DrawMode,
    draw_seed: u64,
    env_seed: u64,
) -> Result<(Vec<crate::policy::ExplorationDraw>, RolloutPlan), LearnError> {
    let mut rng = rng_from_seed(draw_seed);
    let n_draws = match mode {
        DrawMode::PerRollout => 1,
        DrawMode::PerTimestep => steps,
    };
    let draws: Vec<_> = (0..n_draws).map(|_| sample_exploration(params, &mut rng, mode)).collect();
    let thetas: Vec<_> = draws
        .iter()
        .map(|d| realized_theta(params, d))
        .collect::<Result<_, _>>()?;
    let actions = (0..steps)
        .map(|t| {
            let theta = &thetas[t.min(thetas.len() - 1)];
            theta * basis_vector(t, &params.basis)
        })
        .collect();
    Ok((draws, RolloutPlan { actions, thetas, seed: env_seed }))
}

/// Sample and evaluate `h` exploratory rollouts.
///
/// A failed evaluation is excluded and re-drawn from a fresh derived seed, up
/// to `max_retries` attempts per slot; the second return value counts the
/// re-draws. Weights are left at zero for the caller to fill.
pub fn collect_batch(
    env: &dyn RolloutEnv,
    params: &PolicyParams,
    h: usize,
    steps: usize,
    mode: DrawMode,
    batch_seed: u64,
    max_retries: usize,
) -> Result<(Vec<RolloutRecord>, u64), LearnError> {
    if h < 2 {
        return Err(LearnError::InvalidConfig(format!("need at least 2 rollouts, got {h}")));
    }
    let mut records = Vec::with_capacity(h);
    let mut retries = 0u64;
    for slot in 0..h {
        let slot_seed = child_seed(batch_seed, "rollout", slot as u64);
        let mut outcome = None;
        for attempt in 0..=max_retries {
            let seed = if attempt == 0 {
                slot_seed
            } else {
                child_seed(slot_seed, "retry", attempt as u64)
            };
            let draw_seed = child_seed(seed, "draw", 0);
            let env_seed = child_seed(seed, "env", 0);
            let (draws, plan) = build_plan(params, steps, mode, draw_seed, env_seed)?;
            match env.evaluate(&plan).and_then(|r| {
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(EnvError::Failed(format!("non-finite reward {r}")))
                }
            }) {
                Ok(reward) => {
                    outcome = Some(RolloutRecord {
                        draws,
                        thetas: plan.thetas,
                        reward,
                        weight: 0.0,
                        seed,
                    });
                    break;
                }
                Err(err) => {
                    retries += 1;
                    log::warn!("rollout {slot} attempt {attempt} failed: {err}");
                    if attempt == max_retries {
                        return Err(LearnError::EnvExhausted {
                            iteration: 0,
                            rollout: slot,
                            attempts: max_retries + 1,
                            source: err,
                        });
                    }
                }
            }
        }
        records.push(outcome.expect("loop either records or errors"));
    }
    Ok((records, retries))
}

/// Score the deterministic mean policy once.
pub fn evaluate_mean_policy(
    env: &dyn RolloutEnv,
    params: &PolicyParams,
    steps: usize,
    seed: u64,
) -> Result<f64, LearnError> {
    let actions = (0..steps).map(|t| mean_action(params, t)).collect();
    let plan = RolloutPlan { actions, thetas: vec![params.m.clone()], seed };
    env.evaluate(&plan).map_err(|err| LearnError::EnvExhausted {
        iteration: 0,
        rollout: 0,
        attempts: 1,
        source: err,
    })
}

/// Run the full episodic search.
///
/// Each iteration performs `rollouts` exploratory episodes plus one
/// mean-policy evaluation (`rollouts + 1` executions); a zero-iteration
/// config only scores the initial mean policy. All randomness derives from
/// `session_seed`, and every seed is recorded in the trace.
pub fn learn(
    env: &dyn RolloutEnv,
    init: &PolicyParams,
    cfg: &LearnConfig,
    session_seed: u64,
) -> Result<LearningTrace, LearnError> {
    init.validate()?;
    cfg.hyper.validate_for(init)?;
    if cfg.steps < 1 {
        return Err(LearnError::InvalidConfig("steps must be at least 1".into()));
    }
    let mut trace = LearningTrace {
        method: "groups".into(),
        session_seed,
        steps: cfg.steps,
        init_policy: init.to_json(),
        iterations: Vec::with_capacity(cfg.iterations),
        executions: 0,
    };

    if cfg.iterations == 0 {
        push_initial_evaluation(env, init, cfg.steps, session_seed, &mut trace)?;
        return Ok(trace);
    }

    let mut params = init.clone();
    for iteration in 1..=cfg.iterations {
        let iter_seed = child_seed(session_seed, "iter", iteration as u64);
        let (mut records, env_retries) = collect_batch(
            env,
            &params,
            cfg.rollouts,
            cfg.steps,
            cfg.mode,
            iter_seed,
            cfg.max_env_retries,
        )
        .map_err(|e| annotate_iteration(e, iteration))?;
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let weighting = compute_weights(&rewards, &cfg.hyper.beta)
            .map_err(|e| annotate_iteration(e, iteration))?;
        for (rec, &d) in records.iter_mut().zip(weighting.weights.iter()) {
            rec.weight = d;
        }

        let outcome = fit(&records, &params, &cfg.hyper)?;
        params = outcome.params;

        let mean_eval_seed = child_seed(iter_seed, "mean_eval", 0);
        let mean_policy_reward = evaluate_mean_policy(env, &params, cfg.steps, mean_eval_seed)
            .map_err(|e| annotate_iteration(e, iteration))?;
        trace.executions += cfg.rollouts as u64 + 1;

        let g = params.groups.num_groups();
        trace.iterations.push(IterationRecord {
            iteration,
            mean_policy_reward,
            batch_rewards: rewards,
            rollout_seeds: records.iter().map(|r| r.seed).collect(),
            beta: weighting.beta,
            ess: weighting.ess,
            weights_uniform: weighting.uniform,
            beta_saturated: weighting.saturated,
            elbo: outcome.elbo_history,
            inner_converged: outcome.converged,
            e_tau: (0..g).map(|m| outcome.q.e_tau(m)).collect(),
            e_alpha: (0..g)
                .map(|m| (0..cfg.hyper.k).map(|k| outcome.q.e_alpha(m, k)).collect())
                .collect(),
            policy: params.to_json(),
            env_retries,
            mean_eval_seed,
        });
    }
    Ok(trace)
}

/// Score the initial mean policy once and record it as iteration 0. Shared
/// by every method's zero-iteration path so traces stay schema-identical.
pub(crate) fn push_initial_evaluation(
    env: &dyn RolloutEnv,
    init: &PolicyParams,
    steps: usize,
    session_seed: u64,
    trace: &mut LearningTrace,
) -> Result<(), LearnError> {
    let seed = child_seed(session_seed, "mean_eval", 0);
    let reward = evaluate_mean_policy(env, init, steps, seed)?;
    trace.executions = 1;
    trace.iterations.push(IterationRecord {
        iteration: 0,
        mean_policy_reward: reward,
        batch_rewards: Vec::new(),
        rollout_seeds: Vec::new(),
        beta: f64::NAN,
        ess: f64::NAN,
        weights_uniform: false,
        beta_saturated: false,
        elbo: Vec::new(),
        inner_converged: true,
        e_tau: Vec::new(),
        e_alpha: Vec::new(),
        policy: init.to_json(),
        env_retries: 0,
        mean_eval_seed: seed,
    });
    Ok(())
}

/// Stamp the iteration number onto errors bubbling out of the loop body.
fn annotate_iteration(err: LearnError, iteration: usize) -> LearnError {
    match err {
        LearnError::EnvExhausted { rollout, attempts, source, .. } => {
            LearnError::EnvExhausted { iteration, rollout, attempts, source }
        }
        LearnError::NonFiniteReward { rollout, reward, .. } => {
            LearnError::NonFiniteReward { iteration, rollout, reward }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConstantEnv, QuadraticEnv};
    use crate::policy::{BasisConfig, GroupStructure};
    use nalgebra::{DMatrix, DVector};
    use std::cell::Cell;

    fn init_policy() -> PolicyParams {
        PolicyParams::new(
            DMatrix::zeros(4, 5),
            DMatrix::from_element(4, 3, 0.1),
            DVector::from_element(2, 4.0),
            GroupStructure::new(vec![vec![2, 3], vec![0, 1]], vec![]).unwrap(),
            BasisConfig::new(20, 5).unwrap(),
        )
        .unwrap()
    }

    fn small_cfg(iterations: usize) -> LearnConfig {
        LearnConfig { iterations, rollouts: 6, steps: 20, ..LearnConfig::default() }
    }

    #[test]
    fn learn_is_deterministic() {
        let env = QuadraticEnv::with_random_target(4, 5, 77);
        let a = learn(&env, &init_policy(), &small_cfg(3), 123).unwrap();
        let b = learn(&env, &init_policy(), &small_cfg(3), 123).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn execution_accounting_is_exact() {
        let env = ConstantEnv(1.0);
        let trace = learn(&env, &init_policy(), &small_cfg(4), 5).unwrap();
        assert_eq!(trace.executions, 4 * (6 + 1));
        assert_eq!(trace.iterations.len(), 4);
    }

    #[test]
    fn zero_iterations_record_only_initial_evaluation() {
        let env = ConstantEnv(2.5);
        let trace = learn(&env, &init_policy(), &small_cfg(0), 5).unwrap();
        assert_eq!(trace.executions, 1);
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.iterations[0].iteration, 0);
        assert_eq!(trace.iterations[0].mean_policy_reward, 2.5);
        assert!(trace.iterations[0].batch_rewards.is_empty());
    }

    #[test]
    fn constant_env_gives_uniform_weights_and_contracting_exploration() {
        let env = ConstantEnv(3.0);
        let trace = learn(&env, &init_policy(), &small_cfg(5), 9).unwrap();
        for rec in &trace.iterations {
            assert!(rec.weights_uniform);
            for &r in &rec.batch_rewards {
                assert_eq!(r, 3.0);
            }
        }
        // residuals shrink as M absorbs the batch mean, so E[tau] must not fall
        for m in 0..2 {
            let taus: Vec<f64> = trace.iterations.iter().map(|r| r.e_tau[m]).collect();
            for pair in taus.windows(2) {
                assert!(
                    pair[1] >= pair[0] * (1.0 - 1e-9),
                    "E[tau] decreased: {pair:?}"
                );
            }
        }
    }

    struct FlakyEnv {
        fails_left: Cell<u32>,
    }

    impl RolloutEnv for FlakyEnv {
        fn evaluate(&self, _plan: &RolloutPlan) -> Result<f64, EnvError> {
            if self.fails_left.get() > 0 {
                self.fails_left.set(self.fails_left.get() - 1);
                return Err(EnvError::Failed("transient fault".into()));
            }
            Ok(1.0)
        }
    }

    #[test]
    fn failed_rollouts_are_redrawn_and_counted() {
        let env = FlakyEnv { fails_left: Cell::new(3) };
        let policy = init_policy();
        let (records, retries) =
            collect_batch(&env, &policy, 5, 20, DrawMode::PerRollout, 42, 10).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(retries, 3);
        // retried slots carry derived seeds, still fully recorded
        for rec in &records {
            assert!(rec.reward == 1.0);
        }
    }

    #[test]
    fn exhausted_retries_surface_the_failure() {
        let env = FlakyEnv { fails_left: Cell::new(100) };
        let policy = init_policy();
        let err = collect_batch(&env, &policy, 3, 20, DrawMode::PerRollout, 42, 4).unwrap_err();
        match err {
            LearnError::EnvExhausted { attempts, .. } => assert_eq!(attempts, 5),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn per_timestep_mode_draws_every_step() {
        let env = ConstantEnv(0.0);
        let policy = init_policy();
        let (records, _) =
            collect_batch(&env, &policy, 2, 20, DrawMode::PerTimestep, 7, 0).unwrap();
        assert_eq!(records[0].thetas.len(), 20);
        assert_eq!(records[0].draws.len(), 20);
        assert_ne!(records[0].thetas[0], records[0].thetas[1]);
    }
}
