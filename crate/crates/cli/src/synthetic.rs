//! Structure ablation on analytic reward stubs.
//!
//! Two stubs with known optima, three optimizers, identical rollout budgets:
//!
//! * `quadratic` — an isotropic bowl; no shared structure to exploit, so the
//!   latent-space learner should at worst match the diagonal one.
//! * `planted` — reward built around a dense action-space direction that no
//!   axis-aligned method can represent; the latent learner can align its
//!   projection with it, and the angle between the two is reported per
//!   iteration.
//!
//! All methods start from the same initialization and session seed; the
//! diagonal baseline is literally the latent learner with `K = 0`, so the
//! comparison isolates the value of the shared exploration subspace.

use std::path::PathBuf;

use groups_core::rng::child_seed;
use groups_core::{
    run_baseline, BaselineConfig, BaselineMethod, DenseMatrix, DenseVector, DrawMode,
    GroupStructure, HyperParams, LearnConfig, LearningTrace, PlantedSubspaceEnv, PolicyParams,
    QuadraticEnv, RolloutEnv,
};

use crate::config::{ExperimentConfig, ExperimentKind, StubParams};
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::output::OutputCollector;
use crate::render::{aggregate_sessions, render_curves, CurveSeries};
use crate::study::mean_and_std;
use crate::transfer::median;

/// Initial exploration precision on the stubs (std-dev `1/√τ0` per policy
/// entry). A proposal std of 0.25 keeps the batch rewards dominated by the
/// informative linear term of the planted objective rather than by the
/// chi-square noise of the quadratic penalties, which is what lets the
/// latent fit resolve the planted direction.
pub const INIT_TAU_SYNTH: f64 = 16.0;

/// Matched proposal scale for random search.
pub const SEARCH_SIGMA: f64 = 0.5;

/// Exploration precision ceiling for the stub runs. The stub rewards are
/// noise-free, so the fitted precision can legitimately grow without bound
/// once the batch concentrates; a moderate ceiling (std floor `1/√100` = 0.1)
/// keeps later iterations moving instead of freezing at the first good batch.
pub const STUB_TAU_CAP: f64 = 100.0;

const METHODS: [&str; 3] = ["groups", "diagonal_gaussian", "random_search"];
const STUBS: [&str; 2] = ["quadratic", "planted"];

/// Final-state digest of one session on one stub.
#[derive(Clone, Copy, Debug)]
pub struct SessionResult {
    pub session: usize,
    /// Mean-policy reward after the last iteration, per method. The
    /// win comparison between learners is made on these.
    pub groups_final: f64,
    pub diagonal_final: f64,
    pub random_final: f64,
    /// Best mean-policy reward over all iterations, per method.
    pub groups_best: f64,
    pub diagonal_best: f64,
    pub random_best: f64,
    /// Angle (degrees) between the final latent projection's column space
    /// and the planted direction; `NaN` on stubs without one.
    pub final_angle_deg: f64,
}

/// All sessions of one stub.
#[derive(Clone, Debug)]
pub struct StubResult {
    pub stub: String,
    pub sessions: Vec<SessionResult>,
}

impl StubResult {
    /// Sessions where the latent learner's final reward strictly beat the
    /// diagonal one's.
    pub fn groups_wins(&self) -> usize {
        self.sessions.iter().filter(|s| s.groups_final > s.diagonal_final).count()
    }

    pub fn win_fraction(&self) -> f64 {
        self.groups_wins() as f64 / self.sessions.len() as f64
    }

    pub fn median_final_angle_deg(&self) -> f64 {
        let angles: Vec<f64> =
            self.sessions.iter().map(|s| s.final_angle_deg).filter(|a| !a.is_nan()).collect();
        if angles.is_empty() {
            f64::NAN
        } else {
            median(&angles)
        }
    }
}

/// Everything a synthetic run produced.
#[derive(Debug)]
pub struct SyntheticOutput {
    pub manifest: RunManifest,
    pub stubs: Vec<StubResult>,
    pub written: Vec<PathBuf>,
}

/// Angle in degrees between the span of `w`'s numerically nonzero left
/// singular vectors and the unit vector `u`. An all-zero (or rank-0) `w`
/// spans nothing, so the angle is 90°.
pub fn subspace_angle_deg(w: &DenseMatrix, u: &DenseVector) -> f64 {
    if w.ncols() == 0 {
        return 90.0;
    }
    let svd = w.clone().svd(true, false);
    let basis = svd.u.expect("left singular vectors were requested");
    let sigma_max = svd.singular_values.max();
    if !(sigma_max.is_finite() && sigma_max > 0.0) {
        return 90.0;
    }
    let mut overlap_sq = 0.0;
    for (c, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > 1e-8 * sigma_max {
            let dot = basis.column(c).dot(u);
            overlap_sq += dot * dot;
        }
    }
    overlap_sq.sqrt().clamp(0.0, 1.0).acos().to_degrees()
}

fn stub_hyper() -> HyperParams {
    HyperParams { tau_cap: STUB_TAU_CAP, inner_max_iters: 60, ..HyperParams::default() }
}

fn stub_learn_config(cfg: &ExperimentConfig) -> LearnConfig {
    LearnConfig {
        iterations: cfg.iterations,
        rollouts: cfg.rollouts,
        steps: cfg.steps,
        hyper: stub_hyper(),
        mode: DrawMode::PerRollout,
        max_env_retries: 0, // analytic stubs never fail
    }
}

fn stub_init(cfg: &ExperimentConfig, session_seed: u64) -> Result<PolicyParams> {
    let stubs = &cfg.stubs;
    let basis = groups_core::BasisConfig::new(cfg.steps, stubs.num_basis)?;
    Ok(PolicyParams::seeded_init(
        GroupStructure::singletons(stubs.action_dim),
        basis,
        stub_hyper().k,
        INIT_TAU_SYNTH,
        crate::study::INIT_W_SCALE,
        child_seed(session_seed, "init", 0),
    )?)
}

fn planted_env(stubs: &StubParams, session_seed: u64) -> PlantedSubspaceEnv {
    PlantedSubspaceEnv::new(
        stubs.action_dim,
        stubs.num_basis,
        stubs.offset,
        stubs.parallel_weight,
        stubs.perpendicular_weight,
        child_seed(session_seed, "stub", 1),
    )
}

fn run_method(
    env: &dyn RolloutEnv,
    method: &str,
    init: &PolicyParams,
    learn: &LearnConfig,
    session_seed: u64,
) -> Result<LearningTrace> {
    let trace = match method {
        "groups" => groups_core::learn(env, init, learn, session_seed)?,
        "diagonal_gaussian" => run_baseline(
            env,
            init,
            &BaselineConfig { method: BaselineMethod::DiagonalGaussian, sigma: 0.0, learn: *learn },
            session_seed,
        )?,
        "random_search" => run_baseline(
            env,
            init,
            &BaselineConfig {
                method: BaselineMethod::RandomSearch,
                sigma: SEARCH_SIGMA,
                learn: *learn,
            },
            session_seed,
        )?,
        other => unreachable!("unknown method {other}"),
    };
    Ok(trace)
}

/// Best-so-far reward at each iteration of a trace.
fn best_so_far(trace: &LearningTrace) -> Vec<(usize, f64)> {
    let mut best = f64::NEG_INFINITY;
    trace
        .iterations
        .iter()
        .map(|rec| {
            best = best.max(rec.mean_policy_reward);
            (rec.iteration, best)
        })
        .collect()
}

/// Run the structure ablation on both stubs.
pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<SyntheticOutput> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::Synthetic {
        return Err(HarnessError::ConfigInvalid(format!(
            "run_synthetic needs experiment=synthetic, got {}",
            cfg.experiment.as_str()
        )));
    }
    let (_, cal_text) = cfg.resolve_calibration()?;
    let mut manifest = RunManifest::new(cfg, &cal_text);
    let mut out = OutputCollector::new(&cfg.output_dir)?;
    let learn = stub_learn_config(cfg);
    let scale = cfg.reward_scale;
    let suffix = crate::study::scale_suffix(scale);

    let mut rows = format!(
        "stub,method,session,iteration,reward{suffix},best_reward{suffix},subspace_angle_deg\n"
    );
    let mut stub_results = Vec::new();
    // (stub, method) -> per-session best-so-far curves, for the plots
    let mut curves: Vec<Vec<Vec<Vec<(usize, f64)>>>> =
        vec![vec![Vec::new(); METHODS.len()]; STUBS.len()];
    let mut executions = Vec::new();

    for (stub_idx, &stub) in STUBS.iter().enumerate() {
        let mut sessions = Vec::new();
        for (s, &session_seed) in manifest.session_seeds.iter().enumerate() {
            let quadratic: QuadraticEnv;
            let planted: PlantedSubspaceEnv;
            let (env, direction): (&dyn RolloutEnv, Option<&DenseVector>) = if stub == "quadratic"
            {
                quadratic = QuadraticEnv::with_random_target(
                    cfg.stubs.action_dim,
                    cfg.stubs.num_basis,
                    child_seed(session_seed, "stub", 0),
                );
                (&quadratic, None)
            } else {
                planted = planted_env(&cfg.stubs, session_seed);
                let dir = planted.planted_direction();
                (&planted, Some(dir))
            };
            let init = stub_init(cfg, session_seed)?;

            let mut finals = [f64::NAN; 3];
            let mut bests = [f64::NAN; 3];
            let mut final_angle = f64::NAN;
            for (m_idx, &method) in METHODS.iter().enumerate() {
                let trace = run_method(env, method, &init, &learn, session_seed)?;
                executions.push(trace.executions);
                finals[m_idx] =
                    trace.iterations.last().map_or(f64::NAN, |rec| rec.mean_policy_reward);
                let best_curve = best_so_far(&trace);
                bests[m_idx] = best_curve.last().map_or(f64::NEG_INFINITY, |&(_, b)| b);
                for (rec, &(iteration, best)) in trace.iterations.iter().zip(&best_curve) {
                    let angle = match (method, direction) {
                        ("groups", Some(u)) => {
                            let policy = PolicyParams::from_json(&rec.policy)?;
                            subspace_angle_deg(&policy.w, u)
                        }
                        _ => f64::NAN,
                    };
                    if method == "groups" && direction.is_some() {
                        final_angle = angle;
                    }
                    rows.push_str(&format!(
                        "{stub},{method},{s},{iteration},{},{},{angle}\n",
                        rec.mean_policy_reward * scale,
                        best * scale,
                    ));
                }
                curves[stub_idx][m_idx].push(
                    best_curve.iter().map(|&(it, b)| (it, b * scale)).collect(),
                );
                let dir = format!("synthetic_{stub}/{method}/session_{s}");
                out.write(
                    &format!("{dir}/trace.jsonl"),
                    &groups_core::trace::iteration_jsonl(&trace),
                )?;
                out.write(
                    &format!("{dir}/summary.csv"),
                    &groups_core::trace::summary_csv(&trace),
                )?;
            }
            sessions.push(SessionResult {
                session: s,
                groups_final: finals[0],
                diagonal_final: finals[1],
                random_final: finals[2],
                groups_best: bests[0],
                diagonal_best: bests[1],
                random_best: bests[2],
                final_angle_deg: final_angle,
            });
        }
        stub_results.push(StubResult { stub: stub.to_string(), sessions });
    }

    out.write("synthetic.csv", &rows)?;

    let mut summary = format!(
        "stub,method,final_reward_mean{suffix},final_reward_std{suffix},\
         final_best_mean{suffix},final_best_std{suffix},executions,sessions\n"
    );
    for (stub_idx, result) in stub_results.iter().enumerate() {
        for (m_idx, &method) in METHODS.iter().enumerate() {
            let finals: Vec<f64> = result
                .sessions
                .iter()
                .map(|sess| {
                    [sess.groups_final, sess.diagonal_final, sess.random_final][m_idx] * scale
                })
                .collect();
            let bests: Vec<f64> = result
                .sessions
                .iter()
                .map(|sess| {
                    [sess.groups_best, sess.diagonal_best, sess.random_best][m_idx] * scale
                })
                .collect();
            let (final_mean, final_std) = mean_and_std(&finals);
            let (best_mean, best_std) = mean_and_std(&bests);
            summary.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                result.stub,
                method,
                final_mean,
                final_std,
                best_mean,
                best_std,
                executions[stub_idx * manifest.session_seeds.len() * METHODS.len() + m_idx],
                result.sessions.len()
            ));
        }
    }
    out.write("synthetic_summary.csv", &summary)?;

    let mut ablation =
        String::from("stub,groups_wins,sessions,win_fraction,median_final_angle_deg\n");
    for result in &stub_results {
        ablation.push_str(&format!(
            "{},{},{},{},{}\n",
            result.stub,
            result.groups_wins(),
            result.sessions.len(),
            result.win_fraction(),
            result.median_final_angle_deg()
        ));
    }
    out.write("ablation.csv", &ablation)?;

    for (stub_idx, &stub) in STUBS.iter().enumerate() {
        let mut series = Vec::new();
        for (m_idx, &method) in METHODS.iter().enumerate() {
            series.push(CurveSeries {
                label: method.replace('_', " "),
                points: aggregate_sessions(&curves[stub_idx][m_idx])?,
            });
        }
        let svg = render_curves(
            &series,
            &format!("structure ablation: {stub} stub"),
            &format!("best reward{suffix}"),
        )?;
        out.write(&format!("curves/{stub}.svg"), &svg)?;
    }

    manifest.outputs = out.relative_paths().to_vec();
    let manifest_path = out.root().join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json())
        .map_err(|e| HarnessError::Io { path: manifest_path.clone(), message: e.to_string() })?;
    let mut written = out.full_paths();
    written.push(manifest_path);
    Ok(SyntheticOutput { manifest, stubs: stub_results, written })
}
