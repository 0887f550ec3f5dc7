//! Reference optimizers for the structure ablation.
//!
//! Both baselines spend exactly the same rollout budget as the main learner
//! (`iterations × (rollouts + 1)` evaluations) and emit the same trace schema,
//! so curves are directly comparable.
//!
//! * [`random_search`] — propose `M + σ·G` per rollout, keep the best so far.
//! * [`diagonal_gaussian_ps`] — the main learner stripped of its latent
//!   space: reward-weighted mean and per-dimension Gamma precision updates on
//!   `M` only. Its updates are written out in closed form here, independently
//!   of the coordinate-ascent machinery, which is what makes the equivalence
//!   test against the full learner with `K = 0` meaningful.

use serde::{Deserialize, Serialize};

use crate::env::RolloutEnv;
use crate::error::LearnError;
use crate::learner::{
    collect_batch, compute_weights, evaluate_mean_policy, push_initial_evaluation,
    IterationRecord, LearnConfig, LearningTrace, RolloutRecord,
};
use crate::policy::{GroupStructure, PolicyParams};
use crate::rng::{child_seed, rng_from_seed};
use crate::{DenseMatrix, DenseVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Which reference optimizer to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    RandomSearch,
    DiagonalGaussian,
}

/// Baseline configuration: budget shape and priors are shared with the main
/// learner through [`LearnConfig`]; `sigma` is the random-search proposal
/// scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Proposal std-dev for random search; zero freezes the policy.
    pub sigma: f64,
    pub learn: LearnConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: BaselineMethod::RandomSearch,
            sigma: 0.1,
            learn: LearnConfig::default(),
        }
    }
}

/// Dispatch on `cfg.method`.
pub fn run_baseline(
    env: &dyn RolloutEnv,
    init: &PolicyParams,
    cfg: &BaselineConfig,
    session_seed: u64,
) -> Result<LearningTrace, LearnError> {
    match cfg.method {
        BaselineMethod::RandomSearch => random_search(env, init, cfg, session_seed),
        BaselineMethod::DiagonalGaussian => diagonal_gaussian_ps(env, init, cfg, session_seed),
    }
}

fn empty_trace(method: &str, init: &PolicyParams, cfg: &LearnConfig, seed: u64) -> LearningTrace {
    LearningTrace {
        method: method.into(),
        session_seed: seed,
        steps: cfg.steps,
        init_policy: init.to_json(),
        iterations: Vec::with_capacity(cfg.iterations),
        executions: 0,
    }
}

/// Propose `M + σ·G` per rollout (G iid standard normal), keep the best.
///
/// Proposals are evaluated as deterministic mean policies; the per-iteration
/// mean-policy evaluation re-scores the incumbent, so the trace is flat on a
/// constant environment and non-decreasing on any deterministic one.
pub fn random_search(
    env: &dyn RolloutEnv,
    init: &PolicyParams,
    cfg: &BaselineConfig,
    session_seed: u64,
) -> Result<LearningTrace, LearnError> {
    init.validate()?;
    if !(cfg.sigma.is_finite() && cfg.sigma >= 0.0) {
        return Err(LearnError::InvalidConfig(format!("sigma {} must be >= 0", cfg.sigma)));
    }
    if cfg.learn.iterations > 0 && cfg.learn.rollouts < 1 {
        return Err(LearnError::InvalidConfig("need at least 1 rollout".into()));
    }
    let mut trace = empty_trace("random_search", init, &cfg.learn, session_seed);
    if cfg.learn.iterations == 0 {
        push_initial_evaluation(env, init, cfg.learn.steps, session_seed, &mut trace)?;
        return Ok(trace);
    }

    let mut best = init.clone();
    let mut best_reward = f64::NEG_INFINITY;
    for iteration in 1..=cfg.learn.iterations {
        let iter_seed = child_seed(session_seed, "iter", iteration as u64);
        let mut batch_rewards = Vec::with_capacity(cfg.learn.rollouts);
        let mut rollout_seeds = Vec::with_capacity(cfg.learn.rollouts);
        let mut env_retries = 0u64;
        for slot in 0..cfg.learn.rollouts {
            let slot_seed = child_seed(iter_seed, "rollout", slot as u64);
            let mut done = false;
            for attempt in 0..=cfg.learn.max_env_retries {
                let seed = if attempt == 0 {
                    slot_seed
                } else {
                    child_seed(slot_seed, "retry", attempt as u64)
                };
                let mut proposal = best.clone();
                let mut rng = rng_from_seed(child_seed(seed, "draw", 0));
                for value in proposal.m.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *value += cfg.sigma * g;
                }
                let env_seed = child_seed(seed, "env", 0);
                match evaluate_mean_policy(env, &proposal, cfg.learn.steps, env_seed) {
                    Ok(reward) if reward.is_finite() => {
                        if reward > best_reward {
                            best_reward = reward;
                            best = proposal;
                        }
                        batch_rewards.push(reward);
                        rollout_seeds.push(seed);
                        done = true;
                        break;
                    }
                    Ok(reward) => {
                        env_retries += 1;
                        log::warn!("proposal {slot} returned non-finite reward {reward}");
                    }
                    Err(err) => {
                        env_retries += 1;
                        log::warn!("proposal {slot} attempt {attempt} failed: {err}");
                    }
                }
            }
            if !done {
                return Err(LearnError::InvalidConfig(format!(
                    "environment failed {} attempts at iteration {iteration}, proposal {slot}",
                    cfg.learn.max_env_retries + 1
                )));
            }
        }

        let mean_eval_seed = child_seed(iter_seed, "mean_eval", 0);
        let mean_policy_reward = evaluate_mean_policy(env, &best, cfg.learn.steps, mean_eval_seed)?;
        trace.executions += cfg.learn.rollouts as u64 + 1;
        trace.iterations.push(IterationRecord {
            iteration,
            mean_policy_reward,
            batch_rewards,
            rollout_seeds,
            beta: f64::NAN,
            ess: f64::NAN,
            weights_uniform: false,
            beta_saturated: false,
            elbo: Vec::new(),
            inner_converged: true,
            e_tau: Vec::new(),
            e_alpha: Vec::new(),
            policy: best.to_json(),
            env_retries,
            mean_eval_seed,
        });
    }
    Ok(trace)
}

/// Closed-form reward-weighted update for the diagonal model: the new mean is
/// the weighted average of the batch, and each dimension's precision is a
/// Gamma posterior over its weighted residuals (one observation per basis
/// column, matching how the batch is counted everywhere else).
fn diagonal_update(
    records: &[RolloutRecord],
    num_basis: usize,
    a_tau: f64,
    b_tau: f64,
    tau_cap: f64,
) -> (DenseMatrix, DenseVector) {
    let dim = records[0].thetas[0].nrows();
    let mut numer = DenseMatrix::zeros(dim, num_basis);
    let mut total_share = 0.0;
    for rec in records {
        let share = rec.weight / rec.thetas.len() as f64;
        for theta in &rec.thetas {
            numer += theta * share;
            total_share += share;
        }
    }
    let mean = numer / total_share;

    let shape = a_tau + num_basis as f64 * total_share / 2.0;
    let mut tau = DenseVector::zeros(dim);
    for i in 0..dim {
        let mut quad = 0.0;
        for rec in records {
            let share = rec.weight / rec.thetas.len() as f64;
            for theta in &rec.thetas {
                for j in 0..num_basis {
                    let r = theta[(i, j)] - mean[(i, j)];
                    quad += share * r * r;
                }
            }
        }
        let rate = (b_tau + 0.5 * quad).max(shape / tau_cap);
        tau[i] = shape / rate;
    }
    (mean, tau)
}

/// The main learner with its latent space removed: independent per-dimension
/// exploration, reward-weighted mean and precision updates.
///
/// The incoming policy's latent part is dropped and its per-group precisions
/// are expanded to one per dimension, so any initialization usable by the
/// full learner is usable here. Sampling goes through the same batch
/// machinery with the same seed tree, which keeps rollouts aligned with a
/// `K = 0` run of the full learner on identical seeds.
pub fn diagonal_gaussian_ps(
    env: &dyn RolloutEnv,
    init: &PolicyParams,
    cfg: &BaselineConfig,
    session_seed: u64,
) -> Result<LearningTrace, LearnError> {
    init.validate()?;
    let hyper = cfg.learn.hyper;
    for (name, v) in [("a_tau", hyper.a_tau), ("b_tau", hyper.b_tau), ("tau_cap", hyper.tau_cap)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(LearnError::InvalidConfig(format!("{name} must be positive, got {v}")));
        }
    }

    let dim = init.action_dim();
    let tau = DenseVector::from_fn(dim, |i, _| init.tau[init.groups.group_of(i)]);
    let mut params = PolicyParams::new(
        init.m.clone(),
        DenseMatrix::zeros(dim, 0),
        tau,
        GroupStructure::singletons(dim),
        init.basis,
    )?;

    let mut trace = empty_trace("diagonal_gaussian", &params, &cfg.learn, session_seed);
    if cfg.learn.iterations == 0 {
        push_initial_evaluation(env, &params, cfg.learn.steps, session_seed, &mut trace)?;
        return Ok(trace);
    }

    for iteration in 1..=cfg.learn.iterations {
        let iter_seed = child_seed(session_seed, "iter", iteration as u64);
        let (mut records, env_retries) = collect_batch(
            env,
            &params,
            cfg.learn.rollouts,
            cfg.learn.steps,
            cfg.learn.mode,
            iter_seed,
            cfg.learn.max_env_retries,
        )?;
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let weighting = compute_weights(&rewards, &hyper.beta)?;
        for (rec, &d) in records.iter_mut().zip(weighting.weights.iter()) {
            rec.weight = d;
        }

        let (mean, tau) = diagonal_update(
            &records,
            params.basis.num_basis,
            hyper.a_tau,
            hyper.b_tau,
            hyper.tau_cap,
        );
        params = PolicyParams::new(
            mean,
            DenseMatrix::zeros(dim, 0),
            tau,
            params.groups.clone(),
            params.basis,
        )?;

        let mean_eval_seed = child_seed(iter_seed, "mean_eval", 0);
        let mean_policy_reward =
            evaluate_mean_policy(env, &params, cfg.learn.steps, mean_eval_seed)?;
        trace.executions += cfg.learn.rollouts as u64 + 1;
        trace.iterations.push(IterationRecord {
            iteration,
            mean_policy_reward,
            batch_rewards: rewards,
            rollout_seeds: records.iter().map(|r| r.seed).collect(),
            beta: weighting.beta,
            ess: weighting.ess,
            weights_uniform: weighting.uniform,
            beta_saturated: weighting.saturated,
            elbo: Vec::new(),
            inner_converged: true,
            e_tau: params.tau.iter().copied().collect(),
            e_alpha: vec![Vec::new(); dim],
            policy: params.to_json(),
            env_retries,
            mean_eval_seed,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConstantEnv, QuadraticEnv};
    use crate::policy::BasisConfig;

    fn init_policy() -> PolicyParams {
        PolicyParams::new(
            DenseMatrix::zeros(4, 5),
            DenseMatrix::zeros(4, 0),
            DenseVector::from_element(2, 4.0),
            GroupStructure::new(vec![vec![2, 3], vec![0, 1]], vec![]).unwrap(),
            BasisConfig::new(20, 5).unwrap(),
        )
        .unwrap()
    }

    fn cfg(method: BaselineMethod, iterations: usize) -> BaselineConfig {
        let mut hyper = crate::learner::HyperParams::default();
        hyper.k = 0;
        BaselineConfig {
            method,
            sigma: 0.2,
            learn: LearnConfig { iterations, rollouts: 6, hyper, ..LearnConfig::default() },
        }
    }

    #[test]
    fn random_search_is_flat_on_constant_env() {
        let env = ConstantEnv(4.0);
        let trace =
            random_search(&env, &init_policy(), &cfg(BaselineMethod::RandomSearch, 5), 3).unwrap();
        for rec in &trace.iterations {
            assert_eq!(rec.mean_policy_reward, 4.0);
        }
        assert_eq!(trace.executions, 5 * 7);
    }

    #[test]
    fn zero_sigma_never_moves_the_policy() {
        let env = QuadraticEnv::with_random_target(4, 5, 1);
        let mut config = cfg(BaselineMethod::RandomSearch, 4);
        config.sigma = 0.0;
        let init = init_policy();
        let trace = random_search(&env, &init, &config, 9).unwrap();
        let last = trace.final_policy().unwrap();
        assert_eq!(last.m, init.m);
    }

    #[test]
    fn random_search_improves_on_quadratic() {
        let env = QuadraticEnv::with_random_target(4, 5, 2);
        let trace =
            random_search(&env, &init_policy(), &cfg(BaselineMethod::RandomSearch, 10), 17)
                .unwrap();
        let rewards: Vec<f64> =
            trace.iterations.iter().map(|r| r.mean_policy_reward).collect();
        for pair in rewards.windows(2) {
            assert!(pair[1] >= pair[0], "incumbent reward regressed: {pair:?}");
        }
        assert!(rewards.last().unwrap() > rewards.first().unwrap());
    }

    #[test]
    fn diagonal_update_with_all_weight_on_one_rollout_copies_it() {
        let theta0 = DenseMatrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64);
        let theta1 = DenseMatrix::from_element(3, 4, -5.0);
        let records = vec![
            RolloutRecord {
                draws: vec![],
                thetas: vec![theta0.clone()],
                reward: 1.0,
                weight: 2.0,
                seed: 0,
            },
            RolloutRecord { draws: vec![], thetas: vec![theta1], reward: 0.0, weight: 0.0, seed: 1 },
        ];
        let (mean, tau) = diagonal_update(&records, 4, 1e-3, 1e-3, 1e4);
        assert_eq!(mean, theta0);
        for &t in tau.iter() {
            assert!(t > 0.0 && t <= 1e4);
        }
    }

    #[test]
    fn diagonal_precision_stays_positive_on_degenerate_batches() {
        let theta = DenseMatrix::from_element(2, 3, 1.5);
        let records: Vec<RolloutRecord> = (0..4)
            .map(|s| RolloutRecord {
                draws: vec![],
                thetas: vec![theta.clone()],
                reward: 1.0,
                weight: 1.0,
                seed: s,
            })
            .collect();
        let (_, tau) = diagonal_update(&records, 3, 1e-3, 1e-3, 1e4);
        for &t in tau.iter() {
            assert!(t.is_finite() && t > 0.0);
            assert!(t <= 1e4 + 1e-9, "precision must respect the cap, got {t}");
        }
    }

    #[test]
    fn diagonal_trace_is_deterministic_and_budgeted() {
        let env = QuadraticEnv::with_random_target(4, 5, 5);
        let config = cfg(BaselineMethod::DiagonalGaussian, 3);
        let a = run_baseline(&env, &init_policy(), &config, 21).unwrap();
        let b = run_baseline(&env, &init_policy(), &config, 21).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.executions, 3 * 7);
        assert_eq!(a.method, "diagonal_gaussian");
        assert_eq!(a.iterations[0].e_tau.len(), 4);
    }

    #[test]
    fn zero_iterations_match_the_main_learner_shape() {
        let env = ConstantEnv(1.0);
        for method in [BaselineMethod::RandomSearch, BaselineMethod::DiagonalGaussian] {
            let trace = run_baseline(&env, &init_policy(), &cfg(method, 0), 2).unwrap();
            assert_eq!(trace.executions, 1);
            assert_eq!(trace.iterations.len(), 1);
            assert_eq!(trace.iterations[0].iteration, 0);
        }
    }
}
