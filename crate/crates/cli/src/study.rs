//! The fin study: independent learning sessions per fin × medium, with
//! cross-session aggregates and comparison plots.
//!
//! Session seeds derive from the master seed alone, so every fin and medium
//! sees the same session seeds — ordering studies compare fins under
//! identical exploration randomness, and a transfer study can pair its
//! in-situ sessions with the source study's one-to-one.

use std::path::PathBuf;

use groups_core::learner::IterationRecord;
use groups_core::rng::child_seed;
use groups_core::{
    crawler_groups, BasisConfig, Calibration, CrawlerEnv, DrawMode, HyperParams, LearnConfig,
    LearningTrace, PolicyParams,
};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::output::OutputCollector;
use crate::render::{aggregate_sessions, render_curves, CurveSeries};

/// Time-shifted sine basis functions per joint (the gait's frequency
/// resolution). Fixed by the protocol, not the config.
pub const NUM_BASIS: usize = 10;

/// Initial per-group exploration precision. 1/√8 ≈ 0.35 rad of per-entry
/// parameter noise explores a useful fraction of the ±π/2 joint range
/// through the basis without saturating the clamp.
pub const INIT_TAU: f64 = 8.0;

/// Initial scale of the latent projection W. Must be nonzero (the all-zero
/// projection is a fixed point of the posterior updates); small enough that
/// early exploration is dominated by the per-group noise.
pub const INIT_W_SCALE: f64 = 0.1;

/// Ceiling on the learned noise precision, i.e. a floor of 1/√cap on the
/// exploration std. Keeps a greedy early fit from freezing exploration for
/// the remaining iterations.
pub const EXPLORATION_TAU_CAP: f64 = 200.0;

/// Hyper-parameters used for every crawler learning run.
pub fn crawler_hyper() -> HyperParams {
    HyperParams { tau_cap: EXPLORATION_TAU_CAP, ..HyperParams::default() }
}

/// The initial crawler policy for one session: zero mean, seeded latent
/// projection, shared exploration precision per joint group. Depends on the
/// session seed only — not on the fin or the medium.
pub fn crawler_init(steps: usize, session_seed: u64) -> Result<PolicyParams> {
    let basis = BasisConfig::new(steps, NUM_BASIS)?;
    let params = PolicyParams::seeded_init(
        crawler_groups(),
        basis,
        crawler_hyper().k,
        INIT_TAU,
        INIT_W_SCALE,
        child_seed(session_seed, "init", 0),
    )?;
    Ok(params)
}

/// The learning-loop configuration a run's dimensions translate to.
pub fn crawler_learn_config(cfg: &ExperimentConfig) -> LearnConfig {
    LearnConfig {
        iterations: cfg.iterations,
        rollouts: cfg.rollouts,
        steps: cfg.steps,
        hyper: crawler_hyper(),
        mode: DrawMode::PerRollout,
        max_env_retries: 20,
    }
}

/// Build the simulator for one fin × medium cell, applying the config's
/// heterogeneity override if present.
pub fn build_env(
    cal: &Calibration,
    cfg: &ExperimentConfig,
    media: &str,
    fin: &str,
) -> Result<CrawlerEnv> {
    let mut env = CrawlerEnv::from_calibration(cal, media, fin)?;
    if let Some(h) = cfg.heterogeneity {
        env.media.heterogeneity = h;
    }
    Ok(env)
}

/// Directory name for one fin × medium cell.
pub fn cell_dir(fin: &str, media: &str) -> String {
    format!("fin_{fin}_{media}")
}

/// Suffix appended to reward column names: empty at the native scale, the
/// multiplier otherwise, so a scaled CSV says so in its header.
pub fn scale_suffix(scale: f64) -> String {
    if scale == 1.0 {
        String::new()
    } else {
        format!("_x{scale}")
    }
}

/// One fin × medium cell with its per-session traces, in session order.
#[derive(Clone, Debug)]
pub struct StudyCell {
    pub fin: String,
    pub media: String,
    pub traces: Vec<LearningTrace>,
}

impl StudyCell {
    /// `(iteration, mean_policy_reward)` rows for one session, unscaled.
    fn session_rows(&self, s: usize) -> Vec<(usize, f64)> {
        self.traces[s].iterations.iter().map(|r| (r.iteration, r.mean_policy_reward)).collect()
    }

    /// Mean-policy reward of the final iteration, per session, unscaled.
    pub fn final_rewards(&self) -> Vec<f64> {
        self.traces
            .iter()
            .map(|t| t.iterations.last().map_or(f64::NAN, |r| r.mean_policy_reward))
            .collect()
    }

    /// Total environment executions across sessions.
    pub fn executions(&self) -> u64 {
        self.traces.iter().map(|t| t.executions).sum()
    }
}

/// Everything a fin study produced, with the traces still in memory for
/// in-process consumers.
#[derive(Debug)]
pub struct StudyOutput {
    pub manifest: RunManifest,
    pub cells: Vec<StudyCell>,
    /// Every file written, in write order (manifest last).
    pub written: Vec<PathBuf>,
}

/// Sample mean and std (n−1 divisor; 0 for a single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Run a fin study (or an in-situ study — same protocol, different medium):
/// every fin × medium × session combination gets a fresh learner keyed by its
/// session seed. Emits per-session traces and summary CSVs, per-cell
/// aggregates, per-medium comparison plots, a top-level summary, and the run
/// manifest.
pub fn run_fin_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let (cal, cal_text) = cfg.resolve_calibration()?;
    let mut manifest = RunManifest::new(cfg, &cal_text);
    let mut out = OutputCollector::new(&cfg.output_dir)?;
    let learn_cfg = crawler_learn_config(cfg);
    let scale = cfg.reward_scale;
    let suffix = scale_suffix(scale);

    let mut cells = Vec::new();
    for fin in &cfg.fins {
        for media in &cfg.media {
            let env = build_env(&cal, cfg, media, fin)?;
            let mut traces = Vec::with_capacity(cfg.sessions);
            for (s, &session_seed) in manifest.session_seeds.iter().enumerate() {
                let init = crawler_init(cfg.steps, session_seed)?;
                let trace = groups_core::learn(&env, &init, &learn_cfg, session_seed)?;
                let dir = format!("{}/session_{s}", cell_dir(fin, media));
                out.write(
                    &format!("{dir}/trace.jsonl"),
                    &groups_core::trace::iteration_jsonl(&trace),
                )?;
                out.write(&format!("{dir}/summary.csv"), &groups_core::trace::summary_csv(&trace))?;
                traces.push(trace);
            }
            let cell = StudyCell { fin: fin.clone(), media: media.clone(), traces };
            out.write(
                &format!("{}/aggregate.csv", cell_dir(fin, media)),
                &cell_aggregate_csv(&cell, scale, &suffix)?,
            )?;
            cells.push(cell);
        }
    }

    out.write("study_summary.csv", &study_summary_csv(&cells, scale, &suffix))?;

    // one comparison plot per medium: one band per fin
    for media in &cfg.media {
        let mut series = Vec::new();
        for cell in cells.iter().filter(|c| &c.media == media) {
            let rows: Vec<Vec<(usize, f64)>> = (0..cell.traces.len())
                .map(|s| {
                    cell.session_rows(s).into_iter().map(|(it, r)| (it, r * scale)).collect()
                })
                .collect();
            series.push(CurveSeries {
                label: format!("fin {}", cell.fin),
                points: aggregate_sessions(&rows)?,
            });
        }
        let title = format!("mean policy reward on {media}");
        let svg = render_curves(&series, &title, &format!("reward (cm{suffix})"))?;
        out.write(&format!("curves/{media}.svg"), &svg)?;
    }

    manifest.outputs = out.relative_paths().to_vec();
    let manifest_path = out.root().join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json())
        .map_err(|e| HarnessError::Io { path: manifest_path.clone(), message: e.to_string() })?;

    let mut written = out.full_paths();
    written.push(manifest_path);
    Ok(StudyOutput { manifest, cells, written })
}

/// Per-iteration statistics across sessions for one cell.
fn cell_aggregate_csv(cell: &StudyCell, scale: f64, suffix: &str) -> Result<String> {
    let rows: Vec<Vec<(usize, f64)>> = (0..cell.traces.len())
        .map(|s| cell.session_rows(s).into_iter().map(|(it, r)| (it, r * scale)).collect())
        .collect();
    let points = aggregate_sessions(&rows)?;
    let mut text = format!(
        "iteration,mean_reward_cm{suffix},std_reward_cm{suffix},min_reward_cm{suffix},max_reward_cm{suffix},sessions\n"
    );
    for (i, p) in points.iter().enumerate() {
        let at_iter: Vec<f64> = rows.iter().map(|r| r[i].1).collect();
        let lo = at_iter.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = at_iter.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.iteration,
            p.mean,
            p.std,
            lo,
            hi,
            rows.len()
        ));
    }
    Ok(text)
}

/// Final-iteration statistics per cell, plus the execution count.
fn study_summary_csv(cells: &[StudyCell], scale: f64, suffix: &str) -> String {
    let mut text = format!(
        "fin,media,final_iteration,final_mean_cm{suffix},final_std_cm{suffix},executions,sessions\n"
    );
    for cell in cells {
        let finals: Vec<f64> = cell.final_rewards().iter().map(|r| r * scale).collect();
        let (mean, std) = mean_and_std(&finals);
        let final_iter =
            cell.traces.first().and_then(|t| t.iterations.last()).map_or(0, |r| r.iteration);
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.fin,
            cell.media,
            final_iter,
            mean,
            std,
            cell.executions(),
            cell.traces.len()
        ));
    }
    text
}

/// Parse one session's JSONL trace back into iteration records.
pub fn parse_iteration_jsonl(text: &str, origin: &std::path::Path) -> Result<Vec<IterationRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let rec: IterationRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::InvalidInput(format!(
                "{}: line {}: {e}",
                origin.display(),
                idx + 1
            )))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(HarnessError::InvalidInput(format!("{}: no records", origin.display())));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig {
            fins: vec!["A".into()],
            sessions: 2,
            iterations: 2,
            rollouts: 4,
            steps: 8,
            master_seed: 11,
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn study_emits_the_documented_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let output = run_fin_study(&cfg).unwrap();
        assert_eq!(output.cells.len(), 1);
        assert_eq!(output.cells[0].traces.len(), 2);
        // 2 sessions × 2 iterations × (4 + 1)
        assert_eq!(output.cells[0].executions(), 20);
        for rel in [
            "fin_A_poppy/session_0/trace.jsonl",
            "fin_A_poppy/session_0/summary.csv",
            "fin_A_poppy/session_1/summary.csv",
            "fin_A_poppy/aggregate.csv",
            "study_summary.csv",
            "curves/poppy.svg",
            "manifest.json",
        ] {
            assert!(dir.path().join(rel).is_file(), "missing {rel}");
        }
        let manifest = RunManifest::load(dir.path()).unwrap();
        assert_eq!(manifest.session_seeds, output.manifest.session_seeds);
        assert!(manifest.outputs.contains(&"study_summary.csv".to_string()));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_fin_study(&tiny_config(dir_a.path())).unwrap();
        run_fin_study(&tiny_config(dir_b.path())).unwrap();
        for rel in [
            "fin_A_poppy/session_0/trace.jsonl",
            "fin_A_poppy/session_1/summary.csv",
            "fin_A_poppy/aggregate.csv",
            "study_summary.csv",
            "curves/poppy.svg",
        ] {
            let a = std::fs::read(dir_a.path().join(rel)).unwrap();
            let b = std::fs::read(dir_b.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between identical runs");
        }
    }

    #[test]
    fn reward_scale_is_applied_at_emission_and_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.reward_scale = 4.0;
        let output = run_fin_study(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("study_summary.csv")).unwrap();
        assert!(text.starts_with("fin,media,final_iteration,final_mean_cm_x4"), "{text}");
        // the emitted mean is exactly scale × the in-memory cm values
        let finals = output.cells[0].final_rewards();
        let (mean_cm, _) = mean_and_std(&finals);
        let row = text.lines().nth(1).unwrap();
        let emitted: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(emitted, mean_and_std(&[finals[0] * 4.0, finals[1] * 4.0]).0);
        assert!((emitted - 4.0 * mean_cm).abs() < 1e-12);
        // per-session trace CSVs stay in native cm
        let session = std::fs::read_to_string(
            dir.path().join("fin_A_poppy/session_0/summary.csv"),
        )
        .unwrap();
        assert!(session.starts_with("iteration,mean_policy_reward,"));
    }

    #[test]
    fn heterogeneity_override_reaches_the_simulator() {
        let cfg = ExperimentConfig {
            heterogeneity: Some(0.0),
            ..ExperimentConfig::default()
        };
        let (cal, _) = cfg.resolve_calibration().unwrap();
        let env = build_env(&cal, &cfg, "sand_day1", "A").unwrap();
        assert_eq!(env.media.heterogeneity, 0.0);
        let plain = ExperimentConfig::default();
        let env = build_env(&cal, &plain, "sand_day1", "A").unwrap();
        assert!(env.media.heterogeneity > 0.0);
    }

    #[test]
    fn init_is_identical_across_fins_and_media() {
        let a = crawler_init(20, 99).unwrap();
        let b = crawler_init(20, 99).unwrap();
        assert_eq!(a.m, b.m);
        assert_eq!(a.w, b.w);
        assert_eq!(a.tau, b.tau);
        let c = crawler_init(20, 100).unwrap();
        assert_ne!(a.w, c.w);
    }
}
