//! Trace serialisation: JSON-lines (one record per iteration) and a summary
//! CSV with a pinned column order.
//!
//! Floats are written through `Display`, which emits the shortest string that
//! round-trips, so identical runs produce byte-identical files. Cells that do
//! not apply (e.g. batch statistics of a zero-iteration trace) hold `NaN`.

use std::fmt::Write as _;
use std::io;

use crate::learner::{IterationRecord, LearningTrace};

/// One JSON document per iteration, newline-terminated.
pub fn iteration_jsonl(trace: &LearningTrace) -> String {
    let mut out = String::new();
    for rec in &trace.iterations {
        out.push_str(&serde_json::to_string(rec).expect("iteration records always serialise"));
        out.push('\n');
    }
    out
}

/// The whole trace as a single pretty JSON document (session metadata
/// included), for archival alongside the JSONL.
pub fn trace_json(trace: &LearningTrace) -> String {
    let mut text =
        serde_json::to_string_pretty(trace).expect("learning traces always serialise");
    text.push('\n');
    text
}

/// Summary CSV column names for a trace whose policy has `num_groups` groups:
/// `iteration, mean_policy_reward, batch_reward_mean, batch_reward_max,
/// elbo_final, e_tau_group1..M, ess`.
pub fn summary_csv_header(num_groups: usize) -> String {
    let mut header =
        String::from("iteration,mean_policy_reward,batch_reward_mean,batch_reward_max,elbo_final");
    for m in 1..=num_groups {
        let _ = write!(header, ",e_tau_group{m}");
    }
    header.push_str(",ess");
    header
}

fn batch_mean(rec: &IterationRecord) -> f64 {
    if rec.batch_rewards.is_empty() {
        f64::NAN
    } else {
        rec.batch_rewards.iter().sum::<f64>() / rec.batch_rewards.len() as f64
    }
}

fn batch_max(rec: &IterationRecord) -> f64 {
    rec.batch_rewards.iter().copied().fold(f64::NAN, f64::max)
}

fn elbo_final(rec: &IterationRecord) -> f64 {
    rec.elbo.last().copied().unwrap_or(f64::NAN)
}

/// Render the per-iteration summary CSV.
pub fn summary_csv(trace: &LearningTrace) -> String {
    let num_groups = trace.init_policy.groups.len();
    let mut out = summary_csv_header(num_groups);
    out.push('\n');
    for rec in &trace.iterations {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            rec.iteration,
            rec.mean_policy_reward,
            batch_mean(rec),
            batch_max(rec),
            elbo_final(rec)
        );
        for m in 0..num_groups {
            let value = rec.e_tau.get(m).copied().unwrap_or(f64::NAN);
            let _ = write!(out, ",{value}");
        }
        let _ = write!(out, ",{}", rec.ess);
        out.push('\n');
    }
    out
}

/// Write the JSONL form to any sink.
pub fn write_iteration_jsonl<W: io::Write>(trace: &LearningTrace, mut w: W) -> io::Result<()> {
    w.write_all(iteration_jsonl(trace).as_bytes())
}

/// Write the summary CSV to any sink.
pub fn write_summary_csv<W: io::Write>(trace: &LearningTrace, mut w: W) -> io::Result<()> {
    w.write_all(summary_csv(trace).as_bytes())
}
