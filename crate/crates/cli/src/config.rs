//! Experiment configuration: one JSON document drives a whole run.
//!
//! The document is strict (unknown keys are rejected) and every omitted field
//! falls back to the protocol defaults: 5 sessions of 10 iterations, 20
//! exploratory rollouts of 20 steps each. `H` and `T` keep their protocol
//! names in the JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use groups_core::Calibration;

use crate::error::{HarnessError, Result};

/// Which protocol a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Learn on one medium, once per fin, across independent sessions.
    FinStudy,
    /// Evaluate policies from a finished fin study on a second medium,
    /// alongside a fresh learning run on that medium.
    Transfer,
    /// A fin study run directly on the target medium.
    Insitu,
    /// Equal-budget method comparison on synthetic objectives.
    Synthetic,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FinStudy => "fin_study",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::Insitu => "insitu",
            ExperimentKind::Synthetic => "synthetic",
        }
    }

    /// Robot experiments execute fins on media; synthetic runs do not.
    pub fn is_robot(&self) -> bool {
        !matches!(self, ExperimentKind::Synthetic)
    }
}

/// Synthetic-stub shape: dimensions of the optimized parameter matrix and the
/// planted rank-1 objective's constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubParams {
    /// Action-space dimension D of the synthetic objectives.
    pub action_dim: usize,
    /// Basis columns J of the synthetic objectives.
    pub num_basis: usize,
    /// Distance of the planted optimum from the zero initialization.
    pub offset: f64,
    /// Penalty weight along the planted direction.
    pub parallel_weight: f64,
    /// Penalty weight off the planted direction (> parallel_weight makes
    /// coherent exploration along the planted axis pay off).
    pub perpendicular_weight: f64,
}

impl Default for StubParams {
    fn default() -> Self {
        Self {
            action_dim: 5,
            num_basis: 10,
            offset: 3.0,
            parallel_weight: 1.0,
            perpendicular_weight: 8.0,
        }
    }
}

/// One experiment, fully described.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Fin labels to run (calibration keys). Ignored by synthetic runs.
    #[serde(default = "default_fins")]
    pub fins: Vec<String>,
    /// Media preset names. Transfer runs take exactly two: [source, target].
    #[serde(default = "default_media")]
    pub media: Vec<String>,
    /// Independent learning sessions per fin × medium.
    #[serde(default = "default_sessions")]
    pub sessions: usize,
    /// Policy-search iterations per session.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Exploratory rollouts per iteration.
    #[serde(default = "default_rollouts", rename = "H")]
    pub rollouts: usize,
    /// Steps per episode; also the gait period, so it must be even.
    #[serde(default = "default_steps", rename = "T")]
    pub steps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Calibration document to load; the embedded default when omitted.
    #[serde(default)]
    pub calibration_path: Option<PathBuf>,
    /// Multiplier applied to rewards at emission time only (e.g. pixels per
    /// cm). Internal arithmetic stays in cm.
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
    /// When set, overrides every medium's traction-noise level. Used by the
    /// noise-free ordering studies.
    #[serde(default)]
    pub heterogeneity: Option<f64>,
    /// Transfer only: output directory of the finished fin study to load
    /// source policies from.
    #[serde(default)]
    pub source_run: Option<PathBuf>,
    /// Synthetic only: stub dimensions and planted-objective constants.
    #[serde(default)]
    pub stubs: StubParams,
}

fn default_fins() -> Vec<String> {
    vec!["A".into(), "B".into(), "C".into(), "D".into()]
}

fn default_media() -> Vec<String> {
    vec!["poppy".into()]
}

fn default_sessions() -> usize {
    5
}

fn default_iterations() -> usize {
    10
}

fn default_rollouts() -> usize {
    20
}

fn default_steps() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_reward_scale() -> f64 {
    1.0
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::FinStudy,
            fins: default_fins(),
            media: default_media(),
            sessions: default_sessions(),
            iterations: default_iterations(),
            rollouts: default_rollouts(),
            steps: default_steps(),
            master_seed: 0,
            output_dir: default_output_dir(),
            calibration_path: None,
            reward_scale: default_reward_scale(),
            heterogeneity: None,
            source_run: None,
            stubs: StubParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Read and validate a config document.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigRead {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // serde_json's message carries "at line L column C"
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::ConfigParse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check the invariants that do not need the calibration document.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        if self.sessions < 1 {
            return fail("sessions must be at least 1".into());
        }
        if self.iterations < 1 {
            return fail("iterations must be at least 1".into());
        }
        if self.rollouts < 2 {
            return fail(format!("H must be at least 2, got {}", self.rollouts));
        }
        if self.steps < 2 || self.steps % 2 != 0 {
            return fail(format!("T must be even and at least 2, got {}", self.steps));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return fail(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        if let Some(h) = self.heterogeneity {
            if !(h.is_finite() && h >= 0.0) {
                return fail(format!("heterogeneity override must be >= 0, got {h}"));
            }
        }
        if self.experiment.is_robot() {
            if self.fins.is_empty() {
                return fail("fins must be nonempty for robot experiments".into());
            }
            for (i, fin) in self.fins.iter().enumerate() {
                if self.fins[..i].contains(fin) {
                    return fail(format!("duplicate fin {fin:?}"));
                }
            }
            if self.media.is_empty() {
                return fail("media must be nonempty for robot experiments".into());
            }
        }
        match self.experiment {
            ExperimentKind::Transfer => {
                if self.media.len() != 2 {
                    return fail(format!(
                        "transfer needs exactly two media [source, target], got {:?}",
                        self.media
                    ));
                }
                if self.source_run.is_none() {
                    return fail("transfer needs source_run: the output directory of a finished fin study".into());
                }
            }
            ExperimentKind::Synthetic => {
                let s = &self.stubs;
                if s.action_dim < 2 || s.num_basis < 1 {
                    return fail(format!(
                        "stubs need action_dim >= 2 and num_basis >= 1, got {} and {}",
                        s.action_dim, s.num_basis
                    ));
                }
                for (name, v) in [
                    ("offset", s.offset),
                    ("parallel_weight", s.parallel_weight),
                    ("perpendicular_weight", s.perpendicular_weight),
                ] {
                    if !(v.is_finite() && v >= 0.0) {
                        return fail(format!("stubs.{name} must be finite and >= 0, got {v}"));
                    }
                }
            }
            ExperimentKind::FinStudy | ExperimentKind::Insitu => {}
        }
        Ok(())
    }

    /// Fold command-line flag overrides into the document, so the echoed
    /// config in the manifest is the effective one.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        calibration: Option<PathBuf>,
    ) {
        if let Some(seed) = seed {
            self.master_seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        if let Some(path) = calibration {
            self.calibration_path = Some(path);
        }
    }

    /// Load the calibration this config points at (embedded default when no
    /// path is set), returning the document and its exact text for hashing.
    pub fn resolve_calibration(&self) -> Result<(Calibration, String)> {
        match &self.calibration_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let cal = Calibration::from_json_str(&text)?;
                Ok((cal, text))
            }
            None => {
                let text = groups_core::calibration::DEFAULT_CALIBRATION_JSON.to_string();
                let cal = Calibration::from_json_str(&text)?;
                Ok((cal, text))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_protocol() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "fin_study"}"#).unwrap();
        assert_eq!(cfg.sessions, 5);
        assert_eq!(cfg.iterations, 10);
        assert_eq!(cfg.rollouts, 20);
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.fins, ["A", "B", "C", "D"]);
        assert_eq!(cfg.media, ["poppy"]);
        assert_eq!(cfg.reward_scale, 1.0);
        assert_eq!(cfg.master_seed, 0);
        cfg.validate().unwrap();
    }

    #[test]
    fn h_and_t_keep_their_protocol_names() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "fin_study", "H": 4, "T": 6}"#).unwrap();
        assert_eq!(cfg.rollouts, 4);
        assert_eq!(cfg.steps, 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"experiment": "fin_study", "sesions": 5}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sesions"));
    }

    #[test]
    fn robot_experiments_need_fins() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "fin_study", "fins": []}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "synthetic", "fins": []}"#).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn transfer_needs_two_media_and_a_source() {
        let base = r#"{"experiment": "transfer", "media": ["poppy", "sand_day1"]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(base).unwrap();
        assert!(cfg.validate().is_err(), "missing source_run must fail");
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"experiment": "transfer", "media": ["poppy"], "source_run": "runs/x"}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err(), "one medium must fail");
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"experiment": "transfer", "media": ["poppy", "sand_day1"], "source_run": "runs/x"}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn odd_episode_lengths_are_rejected() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "fin_study", "T": 7}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_replace_document_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(Some(9), Some(PathBuf::from("elsewhere")), None);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.calibration_path, None);
    }

    #[test]
    fn embedded_calibration_resolves() {
        let cfg = ExperimentConfig::default();
        let (cal, text) = cfg.resolve_calibration().unwrap();
        assert!(cal.media_params("poppy").is_ok());
        assert!(!text.is_empty());
    }
}
