//! Group factor policy search (GrouPS) for periodic gait policies, with a
//! deterministic crawler-on-granular-media simulator and reference baselines.
//!
//! The crate is organised around four pieces:
//!
//! * [`policy`] — the periodic linear-in-features action model: a mean weight
//!   matrix `M`, a latent projection `W`, and per-group exploration precisions
//!   `tau` over a bank of time-shifted sine basis functions.
//! * [`learner`] — the episodic search loop: collect weighted rollouts, fit a
//!   reward-weighted group factor analysis posterior by coordinate ascent on
//!   the ELBO, extract expectations as the next policy.
//! * [`sim`] — a quasi-static two-limb crawler on granular media with
//!   interchangeable fin shapes and media presets; rewards are forward
//!   displacement in centimetres.
//! * [`baselines`] — random search and a diagonal-Gaussian ablation that share
//!   the trace schema, for equal-budget comparisons.
//!
//! Everything is deterministic given a master seed: RNG streams are derived
//! through the tagged tree in [`rng`], and every rollout records the seed that
//! produced it.

pub mod baselines;
pub mod calibration;
pub mod env;
pub mod error;
pub mod learner;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod trace;

/// Dense double-precision matrix used throughout.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
/// Dense double-precision column vector used throughout.
pub type DenseVector = nalgebra::DVector<f64>;

pub use baselines::{
    diagonal_gaussian_ps, random_search, run_baseline, BaselineConfig, BaselineMethod,
};
pub use calibration::Calibration;
pub use env::{ConstantEnv, PlantedSubspaceEnv, QuadraticEnv, RolloutEnv, RolloutPlan};
pub use error::{EnvError, LearnError, PolicyError, SimError};
pub use learner::{learn, HyperParams, LearnConfig, LearningTrace, QPosterior, RolloutRecord};
pub use policy::{
    basis_vector, compute_action, mean_action, sample_exploration, BasisConfig, DrawMode,
    ExplorationDraw, GroupStructure, PolicyParams,
};
pub use sim::{
    crawler_groups, preset_fin, preset_media, CrawlerEnv, CrawlerState, FinShape, MediaParams,
    SimGeometry,
};
