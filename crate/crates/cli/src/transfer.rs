//! The transfer study: how well do policies learned on one medium hold up on
//! another, against learning in the target medium directly?
//!
//! The source policies come from a finished fin study on the source medium.
//! For every session and iteration the study reports three numbers: the
//! source-learned policy re-scored at home, the same policy scored on the
//! target medium, and the policy of an in-situ learning run on the target
//! medium that shares the source session's seed and initialization. All
//! three use the same evaluation seeds, derived independently of the medium,
//! so a degenerate transfer (source = target) produces identical columns.

use std::path::{Path, PathBuf};

use groups_core::learner::{evaluate_mean_policy, IterationRecord};
use groups_core::rng::child_seed;
use groups_core::{CrawlerEnv, LearningTrace, PolicyParams};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::manifest::{content_hash, RunManifest};
use crate::output::OutputCollector;
use crate::render::{aggregate_sessions, render_curves, CurveSeries};
use crate::study::{build_env, cell_dir, crawler_init, crawler_learn_config, scale_suffix};

/// Evaluation repetitions per policy per medium. The target media are
/// stochastic, so a single evaluation would confound medium noise with
/// policy quality.
pub const EVAL_REPS: usize = 5;

/// The three per-iteration scores of one session, unscaled cm.
#[derive(Clone, Copy, Debug)]
pub struct TransferRow {
    pub session: usize,
    pub iteration: usize,
    /// Source-learned policy evaluated on the source medium.
    pub src_on_src: f64,
    /// Source-learned policy evaluated on the target medium.
    pub src_on_dst: f64,
    /// Target-learned (in-situ) policy evaluated on the target medium.
    pub dst_on_dst: f64,
}

/// Everything a transfer run produced.
#[derive(Debug)]
pub struct TransferOutput {
    pub manifest: RunManifest,
    /// Rows per fin, in config fin order.
    pub rows: Vec<(String, Vec<TransferRow>)>,
    /// The in-situ traces per fin, in session order.
    pub insitu: Vec<(String, Vec<LearningTrace>)>,
    pub written: Vec<PathBuf>,
}

fn source_mismatch(path: &Path, message: String) -> HarnessError {
    HarnessError::SourceRun { path: path.to_path_buf(), message }
}

/// Mean over the evaluation repetitions of one policy on one medium.
fn evaluate_reps(
    env: &CrawlerEnv,
    policy: &PolicyParams,
    steps: usize,
    session_seed: u64,
    iteration: usize,
) -> Result<f64> {
    let base = child_seed(session_seed, "transfer_eval", iteration as u64);
    let mut total = 0.0;
    for rep in 0..EVAL_REPS {
        let seed = child_seed(base, "rep", rep as u64);
        total += evaluate_mean_policy(env, policy, steps, seed)?;
    }
    Ok(total / EVAL_REPS as f64)
}

/// Run the transfer protocol. `cfg.media` is `[source, target]`;
/// `cfg.source_run` points at the fin-study output directory to load source
/// policies from.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<TransferOutput> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::Transfer {
        return Err(HarnessError::ConfigInvalid(format!(
            "run_transfer needs experiment=transfer, got {}",
            cfg.experiment.as_str()
        )));
    }
    let source_dir = cfg.source_run.clone().expect("validated above");
    let source = RunManifest::load(&source_dir)?;
    let src_cfg = &source.config;

    // the source must actually be a learning study covering what we evaluate
    if !matches!(src_cfg.experiment, ExperimentKind::FinStudy | ExperimentKind::Insitu) {
        return Err(source_mismatch(
            &source_dir,
            format!("is a {} run, not a fin study", src_cfg.experiment.as_str()),
        ));
    }
    let src_media = &cfg.media[0];
    let dst_media = &cfg.media[1];
    if !src_cfg.media.contains(src_media) {
        return Err(source_mismatch(
            &source_dir,
            format!("covers media {:?}, not {src_media:?}", src_cfg.media),
        ));
    }
    for fin in &cfg.fins {
        if !src_cfg.fins.contains(fin) {
            return Err(source_mismatch(
                &source_dir,
                format!("covers fins {:?}, not {fin:?}", src_cfg.fins),
            ));
        }
    }
    if cfg.sessions > src_cfg.sessions {
        return Err(source_mismatch(
            &source_dir,
            format!("has {} sessions, config wants {}", src_cfg.sessions, cfg.sessions),
        ));
    }
    if cfg.iterations > src_cfg.iterations {
        return Err(source_mismatch(
            &source_dir,
            format!("has {} iterations, config wants {}", src_cfg.iterations, cfg.iterations),
        ));
    }
    // identical initialization and a fair budget need the same episode shape
    if cfg.steps != src_cfg.steps || cfg.rollouts != src_cfg.rollouts {
        return Err(source_mismatch(
            &source_dir,
            format!(
                "ran H={} T={}, config wants H={} T={}",
                src_cfg.rollouts, src_cfg.steps, cfg.rollouts, cfg.steps
            ),
        ));
    }

    let (cal, cal_text) = cfg.resolve_calibration()?;
    if content_hash(&cal_text) != source.calibration_sha256 {
        return Err(source_mismatch(
            &source_dir,
            format!(
                "was calibrated with {}, this run resolves {} — refusing to mix physics",
                source.calibration_sha256,
                content_hash(&cal_text)
            ),
        ));
    }

    let mut manifest = RunManifest::new(cfg, &cal_text);
    // the sessions being continued are the source's, not fresh derivations
    manifest.session_seeds = source.session_seeds[..cfg.sessions].to_vec();
    let mut out = OutputCollector::new(&cfg.output_dir)?;
    let learn_cfg = crawler_learn_config(cfg);
    let scale = cfg.reward_scale;
    let suffix = scale_suffix(scale);

    let mut all_rows = Vec::new();
    let mut all_insitu = Vec::new();
    for fin in &cfg.fins {
        let env_src = build_env(&cal, cfg, src_media, fin)?;
        let env_dst = build_env(&cal, cfg, dst_media, fin)?;
        let mut fin_rows = Vec::new();
        let mut fin_insitu = Vec::new();
        for (s, &session_seed) in manifest.session_seeds.iter().enumerate() {
            let jsonl_path = source_dir
                .join(cell_dir(fin, src_media))
                .join(format!("session_{s}"))
                .join("trace.jsonl");
            let text = std::fs::read_to_string(&jsonl_path).map_err(|e| {
                source_mismatch(&jsonl_path, format!("missing session trace: {e}"))
            })?;
            let src_records = crate::study::parse_iteration_jsonl(&text, &jsonl_path)?;

            let init = crawler_init(cfg.steps, session_seed)?;
            let insitu_trace = groups_core::learn(&env_dst, &init, &learn_cfg, session_seed)?;
            let dir = format!("insitu_{fin}_{dst_media}/session_{s}");
            out.write(
                &format!("{dir}/trace.jsonl"),
                &groups_core::trace::iteration_jsonl(&insitu_trace),
            )?;
            out.write(
                &format!("{dir}/summary.csv"),
                &groups_core::trace::summary_csv(&insitu_trace),
            )?;

            for iteration in 1..=cfg.iterations {
                let src_rec = find_iteration(&src_records, iteration, &jsonl_path)?;
                let dst_rec = insitu_trace
                    .iterations
                    .iter()
                    .find(|r| r.iteration == iteration)
                    .expect("learn emits every iteration");
                let src_policy = PolicyParams::from_json(&src_rec.policy)?;
                let dst_policy = PolicyParams::from_json(&dst_rec.policy)?;
                fin_rows.push(TransferRow {
                    session: s,
                    iteration,
                    src_on_src: evaluate_reps(
                        &env_src,
                        &src_policy,
                        cfg.steps,
                        session_seed,
                        iteration,
                    )?,
                    src_on_dst: evaluate_reps(
                        &env_dst,
                        &src_policy,
                        cfg.steps,
                        session_seed,
                        iteration,
                    )?,
                    dst_on_dst: evaluate_reps(
                        &env_dst,
                        &dst_policy,
                        cfg.steps,
                        session_seed,
                        iteration,
                    )?,
                });
            }
            fin_insitu.push(insitu_trace);
        }
        all_rows.push((fin.clone(), fin_rows));
        all_insitu.push((fin.clone(), fin_insitu));
    }

    out.write("transfer.csv", &transfer_csv(&all_rows, scale, &suffix))?;
    out.write(
        "transfer_aggregate.csv",
        &transfer_aggregate_csv(&all_rows, cfg.sessions, scale, &suffix)?,
    )?;
    for (fin, rows) in &all_rows {
        let svg = transfer_svg(fin, rows, cfg, scale, &suffix)?;
        out.write(&format!("curves/transfer_{fin}.svg"), &svg)?;
    }

    manifest.outputs = out.relative_paths().to_vec();
    let manifest_path = out.root().join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_json())
        .map_err(|e| HarnessError::Io { path: manifest_path.clone(), message: e.to_string() })?;
    let mut written = out.full_paths();
    written.push(manifest_path);
    Ok(TransferOutput { manifest, rows: all_rows, insitu: all_insitu, written })
}

fn find_iteration<'a>(
    records: &'a [IterationRecord],
    iteration: usize,
    origin: &Path,
) -> Result<&'a IterationRecord> {
    records.iter().find(|r| r.iteration == iteration).ok_or_else(|| {
        source_mismatch(origin, format!("has no record for iteration {iteration}"))
    })
}

fn transfer_csv(rows: &[(String, Vec<TransferRow>)], scale: f64, suffix: &str) -> String {
    let mut text = format!(
        "fin,session,iteration,learned_source_eval_source_cm{suffix},learned_source_eval_target_cm{suffix},learned_target_eval_target_cm{suffix}\n"
    );
    for (fin, fin_rows) in rows {
        for r in fin_rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fin,
                r.session,
                r.iteration,
                r.src_on_src * scale,
                r.src_on_dst * scale,
                r.dst_on_dst * scale
            ));
        }
    }
    text
}

/// Median of a non-empty slice (mean of the middle two for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rewards are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn transfer_aggregate_csv(
    rows: &[(String, Vec<TransferRow>)],
    sessions: usize,
    scale: f64,
    suffix: &str,
) -> Result<String> {
    let mut text = format!(
        "fin,iteration,src_on_src_mean_cm{suffix},src_on_src_median_cm{suffix},src_on_dst_mean_cm{suffix},src_on_dst_median_cm{suffix},dst_on_dst_mean_cm{suffix},dst_on_dst_median_cm{suffix}\n"
    );
    for (fin, fin_rows) in rows {
        let iterations: Vec<usize> = {
            let mut its: Vec<usize> = fin_rows.iter().map(|r| r.iteration).collect();
            its.sort_unstable();
            its.dedup();
            its
        };
        for &it in &iterations {
            let at: Vec<&TransferRow> =
                fin_rows.iter().filter(|r| r.iteration == it).collect();
            if at.len() != sessions {
                return Err(HarnessError::InvalidInput(format!(
                    "iteration {it} has {} rows for {fin}, expected {sessions}",
                    at.len()
                )));
            }
            let col = |f: fn(&TransferRow) -> f64| -> Vec<f64> {
                at.iter().map(|r| f(r) * scale).collect()
            };
            let (a, b, c) = (
                col(|r| r.src_on_src),
                col(|r| r.src_on_dst),
                col(|r| r.dst_on_dst),
            );
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fin,
                it,
                crate::study::mean_and_std(&a).0,
                median(&a),
                crate::study::mean_and_std(&b).0,
                median(&b),
                crate::study::mean_and_std(&c).0,
                median(&c),
            ));
        }
    }
    Ok(text)
}

fn transfer_svg(
    fin: &str,
    rows: &[TransferRow],
    cfg: &ExperimentConfig,
    scale: f64,
    suffix: &str,
) -> Result<String> {
    let src = &cfg.media[0];
    let dst = &cfg.media[1];
    let columns: [(&str, fn(&TransferRow) -> f64); 3] = [
        ("learned on SRC, eval on SRC", |r| r.src_on_src),
        ("learned on SRC, eval on DST", |r| r.src_on_dst),
        ("learned on DST, eval on DST", |r| r.dst_on_dst),
    ];
    let mut series = Vec::new();
    for (label, getter) in columns {
        let per_session: Vec<Vec<(usize, f64)>> = (0..cfg.sessions)
            .map(|s| {
                rows.iter()
                    .filter(|r| r.session == s)
                    .map(|r| (r.iteration, getter(r) * scale))
                    .collect()
            })
            .collect();
        series.push(CurveSeries {
            label: label.replace("SRC", src).replace("DST", dst),
            points: aggregate_sessions(&per_session)?,
        });
    }
    render_curves(
        &series,
        &format!("transfer study, fin {fin}: {src} to {dst}"),
        &format!("reward (cm{suffix})"),
    )
}
