//! The diagonal-Gaussian baseline is the full learner minus the latent space.
//! Its updates are written out in closed form, independently of the
//! coordinate-ascent machinery, so running the full learner with `K = 0` on
//! identical seeds must reproduce it: same batches, same weights, same means,
//! same precisions, same rewards, iteration by iteration.
//!
//! The first iteration starts from bit-identical policies, so its batch is
//! compared bitwise. The two sides accumulate the precision sums in different
//! associations (~1 ulp), which perturbs the next iteration's exploration
//! noise in its last bits, so later iterations are compared to 1e-9 instead.

use groups_core::learner::{HyperParams, LearnConfig, TemperatureMode};
use groups_core::policy::{BasisConfig, DrawMode, GroupStructure, PolicyParams};
use groups_core::{diagonal_gaussian_ps, learn, BaselineConfig, BaselineMethod, QuadraticEnv};
use nalgebra::{DMatrix, DVector};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn latentless_learner_reproduces_the_diagonal_baseline() {
    let d = 3;
    let j = 4;
    let groups = GroupStructure::singletons(d);
    let basis = BasisConfig::new(8, j).unwrap();
    let init = PolicyParams::new(
        DMatrix::zeros(d, j),
        DMatrix::zeros(d, 0),
        DVector::from_element(d, 4.0),
        groups,
        basis,
    )
    .unwrap();
    let env = QuadraticEnv::with_random_target(d, j, 55);

    let learn_cfg = LearnConfig {
        iterations: 4,
        rollouts: 8,
        steps: 8,
        hyper: HyperParams { k: 0, r: 1, beta: TemperatureMode::Auto, ..HyperParams::default() },
        mode: DrawMode::PerRollout,
        max_env_retries: 5,
    };
    let session_seed = 4242;

    let full = learn(&env, &init, &learn_cfg, session_seed).unwrap();
    let baseline_cfg =
        BaselineConfig { method: BaselineMethod::DiagonalGaussian, sigma: 0.0, learn: learn_cfg };
    let diag = diagonal_gaussian_ps(&env, &init, &baseline_cfg, session_seed).unwrap();

    assert_eq!(full.iterations.len(), diag.iterations.len());
    assert_eq!(full.executions, diag.executions, "budgets must match exactly");

    // Identical initial policies and identical seed trees: the first batch
    // is the same set of episodes, bit for bit.
    let (a1, b1) = (&full.iterations[0], &diag.iterations[0]);
    for (x, y) in a1.batch_rewards.iter().zip(b1.batch_rewards.iter()) {
        assert_eq!(x.to_bits(), y.to_bits(), "first batch diverged");
    }
    assert_eq!(a1.beta.to_bits(), b1.beta.to_bits(), "first temperature diverged");
    assert_eq!(a1.ess.to_bits(), b1.ess.to_bits(), "first weight ESS diverged");
    let m1_full = PolicyParams::from_json(&a1.policy).unwrap().m;
    let m1_diag = PolicyParams::from_json(&b1.policy).unwrap().m;
    for (x, y) in m1_full.iter().zip(m1_diag.iter()) {
        assert_eq!(x.to_bits(), y.to_bits(), "first mean update diverged");
    }

    for (a, b) in full.iterations.iter().zip(diag.iterations.iter()) {
        assert_eq!(a.iteration, b.iteration);
        assert_eq!(a.rollout_seeds, b.rollout_seeds, "seed trees diverged");
        assert_eq!(a.mean_eval_seed, b.mean_eval_seed);
        assert_eq!(a.batch_rewards.len(), b.batch_rewards.len());
        for (x, y) in a.batch_rewards.iter().zip(b.batch_rewards.iter()) {
            assert!(
                rel_close(*x, *y, 1e-9),
                "batch rewards diverged at iteration {}: {x} vs {y}",
                a.iteration
            );
        }
        assert!(rel_close(a.beta, b.beta, 1e-9), "temperatures diverged at {}", a.iteration);
        assert!(rel_close(a.ess, b.ess, 1e-9), "weight ESS diverged at {}", a.iteration);

        let pa = PolicyParams::from_json(&a.policy).unwrap();
        let pb = PolicyParams::from_json(&b.policy).unwrap();
        assert_eq!(pa.m.shape(), pb.m.shape());
        for (x, y) in pa.m.iter().zip(pb.m.iter()) {
            assert!(
                rel_close(*x, *y, 1e-9),
                "mean weights diverged at iteration {}: {x} vs {y}",
                a.iteration
            );
        }
        // Full learner groups per-dimension precisions 1:1 (singletons), the
        // baseline stores one per dimension: same vector.
        assert_eq!(a.e_tau.len(), d);
        assert_eq!(b.e_tau.len(), d);
        for (x, y) in a.e_tau.iter().zip(b.e_tau.iter()) {
            assert!(
                rel_close(*x, *y, 1e-9),
                "precisions diverged at iteration {}: {x} vs {y}",
                a.iteration
            );
        }
        for (x, y) in pa.tau.iter().zip(pb.tau.iter()) {
            assert!(rel_close(*x, *y, 1e-9));
        }

        assert!(
            rel_close(a.mean_policy_reward, b.mean_policy_reward, 1e-9),
            "mean-policy rewards diverged at iteration {}: {} vs {}",
            a.iteration,
            a.mean_policy_reward,
            b.mean_policy_reward
        );
    }
}

/// Both methods must also agree on the degenerate zero-iteration trace.
#[test]
fn zero_iteration_traces_match() {
    let d = 2;
    let init = PolicyParams::new(
        DMatrix::zeros(d, 3),
        DMatrix::zeros(d, 0),
        DVector::from_element(d, 1.0),
        GroupStructure::singletons(d),
        BasisConfig::new(6, 3).unwrap(),
    )
    .unwrap();
    let env = QuadraticEnv::with_random_target(d, 3, 7);
    let cfg = LearnConfig {
        iterations: 0,
        hyper: HyperParams { k: 0, ..HyperParams::default() },
        ..LearnConfig::default()
    };
    let full = learn(&env, &init, &cfg, 9).unwrap();
    let diag = diagonal_gaussian_ps(
        &env,
        &init,
        &BaselineConfig { method: BaselineMethod::DiagonalGaussian, sigma: 0.0, learn: cfg },
        9,
    )
    .unwrap();
    assert_eq!(full.executions, 1);
    assert_eq!(diag.executions, 1);
    assert_eq!(full.iterations[0].iteration, 0);
    assert_eq!(
        full.iterations[0].mean_policy_reward.to_bits(),
        diag.iterations[0].mean_policy_reward.to_bits()
    );
}
