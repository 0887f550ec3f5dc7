//! Run manifest: the provenance record emitted next to every run's outputs.
//!
//! The manifest carries everything needed to reproduce the run's numbers —
//! the effective config (flag overrides already applied), the content hash of
//! the calibration document, and the derived per-session seeds — plus tool
//! version and wall-clock time for the archaeologist. Reruns differ only in
//! the timestamp; every derived artifact is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use groups_core::rng::child_seed;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Provenance record for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Wall-clock time the run started, seconds since the Unix epoch.
    pub created_unix_seconds: u64,
    /// The effective configuration, command-line overrides included.
    pub config: ExperimentConfig,
    /// SHA-256 of the exact calibration text the run used.
    pub calibration_sha256: String,
    /// One derived seed per session, in session order.
    pub session_seeds: Vec<u64>,
    /// Relative paths of every artifact, in write order.
    pub outputs: Vec<String>,
}

/// The per-session seeds for a master seed. Session seeds depend on nothing
/// but the master seed and the session index — in particular not on the fin
/// or medium — so the same sessions can be replayed across conditions.
pub fn session_seeds(master_seed: u64, sessions: usize) -> Vec<u64> {
    (0..sessions).map(|s| child_seed(master_seed, "session", s as u64)).collect()
}

/// SHA-256 of a text document, lowercase hex.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, calibration_text: &str) -> Self {
        let created_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_seconds,
            config: config.clone(),
            calibration_sha256: content_hash(calibration_text),
            session_seeds: session_seeds(config.master_seed, config.sessions),
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifests always serialise");
        text.push('\n');
        text
    }

    /// Load a manifest from a run directory (or a direct file path), as the
    /// transfer protocol does to locate its source study.
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path =
            if run_dir.is_dir() { run_dir.join("manifest.json") } else { run_dir.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::SourceRun {
            path: path.clone(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::SourceRun {
            path,
            message: format!("manifest does not parse: {e}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_seeds_are_stable_and_distinct() {
        let seeds = session_seeds(7, 5);
        assert_eq!(seeds, session_seeds(7, 5));
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "derived session seeds collide: {seeds:?}");
        assert_ne!(seeds, session_seeds(8, 5));
    }

    #[test]
    fn content_hash_matches_a_known_vector() {
        // SHA-256("abc"), the classic test vector
        assert_eq!(
            content_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_echoes_the_config() {
        let cfg = ExperimentConfig::default();
        let manifest = RunManifest::new(&cfg, "{}");
        let back: RunManifest = serde_json::from_str(&manifest.to_json()).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.session_seeds.len(), cfg.sessions);
        assert_eq!(back.calibration_sha256, content_hash("{}"));
    }

    #[test]
    fn loading_a_missing_manifest_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nowhere");
        let err = RunManifest::load(&missing).unwrap_err();
        assert!(err.to_string().contains("nowhere"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
