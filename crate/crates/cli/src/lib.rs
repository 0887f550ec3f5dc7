//! Experiment harness around the learner: configuration, run manifests,
//! the fin/transfer/synthetic protocols, and SVG learning-curve rendering.
//!
//! Every run is a pure function of `(config, master seed, calibration
//! content)`: the same triple produces byte-identical CSV and SVG artifacts,
//! and `manifest.json` records enough to re-run it.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod render;
pub mod study;
pub mod synthetic;
pub mod transfer;

pub use config::{ExperimentConfig, ExperimentKind, StubParams};
pub use error::{HarnessError, Result};
pub use manifest::{content_hash, session_seeds, RunManifest};
pub use render::{aggregate_sessions, parse_summary_csv, render_curves, CurvePoint, CurveSeries};
pub use study::{run_fin_study, StudyCell, StudyOutput};
pub use synthetic::{run_synthetic, subspace_angle_deg, SessionResult, StubResult, SyntheticOutput};
pub use transfer::{median, run_transfer, TransferOutput, TransferRow, EVAL_REPS};
