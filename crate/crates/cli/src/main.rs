//! `groups` — run learning studies, transfer evaluations, and stub ablations
//! from a JSON config, and render learning curves from their CSV outputs.
//!
//! Exit codes: 0 on success, 1 for configuration problems (unparseable or
//! invalid config, bad flags), 2 for runtime failures (missing inputs,
//! simulation errors, unwritable outputs).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groups_cli::config::{ExperimentConfig, ExperimentKind};
use groups_cli::error::{HarnessError, Result};
use groups_cli::render::{aggregate_sessions, parse_summary_csv, render_curves, CurveSeries};
use groups_cli::study::run_fin_study;
use groups_cli::synthetic::run_synthetic;
use groups_cli::transfer::run_transfer;

#[derive(Parser)]
#[command(
    name = "groups",
    version,
    about = "Group-factor policy search experiment harness",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learning study (config experiment: fin_study or insitu)
    Learn(RunArgs),
    /// Evaluate policies from a finished study on another medium
    Transfer(RunArgs),
    /// Run the structure ablation on analytic reward stubs
    Synthetic(RunArgs),
    /// Render a mean±std learning curve from per-session summary CSVs
    Render(RenderArgs),
    /// Parse and validate a config (and its calibration) without running
    ValidateConfig(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's calibration file
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Per-session summary CSVs, aggregated as one curve
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Where to write the SVG
    #[arg(long)]
    out: PathBuf,
    /// Series label in the legend
    #[arg(long, default_value = "mean policy")]
    label: String,
    /// Plot title
    #[arg(long, default_value = "learning curve")]
    title: String,
    /// Y-axis label
    #[arg(long, default_value = "reward (cm)")]
    y_label: String,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply_overrides(self.seed, self.out.clone(), self.calibration.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    fn load_for(&self, wanted: &[ExperimentKind], subcommand: &str) -> Result<ExperimentConfig> {
        let cfg = self.load()?;
        if !wanted.contains(&cfg.experiment) {
            return Err(HarnessError::ConfigInvalid(format!(
                "`groups {subcommand}` cannot run a {} config; use the matching subcommand",
                cfg.experiment.as_str()
            )));
        }
        Ok(cfg)
    }
}

fn print_written(written: &[PathBuf]) {
    for path in written {
        println!("{}", path.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn(args) => {
            let cfg =
                args.load_for(&[ExperimentKind::FinStudy, ExperimentKind::Insitu], "learn")?;
            let output = run_fin_study(&cfg)?;
            print_written(&output.written);
        }
        Command::Transfer(args) => {
            let cfg = args.load_for(&[ExperimentKind::Transfer], "transfer")?;
            let output = run_transfer(&cfg)?;
            print_written(&output.written);
        }
        Command::Synthetic(args) => {
            let cfg = args.load_for(&[ExperimentKind::Synthetic], "synthetic")?;
            let output = run_synthetic(&cfg)?;
            print_written(&output.written);
        }
        Command::Render(args) => {
            let mut sessions = Vec::with_capacity(args.inputs.len());
            for path in &args.inputs {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                sessions.push(parse_summary_csv(&text, &path.display().to_string())?);
            }
            let series = CurveSeries {
                label: args.label.clone(),
                points: aggregate_sessions(&sessions)?,
            };
            let svg = render_curves(&[series], &args.title, &args.y_label)?;
            if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io {
                    path: parent.to_path_buf(),
                    message: e.to_string(),
                })?;
            }
            std::fs::write(&args.out, svg).map_err(|e| HarnessError::Io {
                path: args.out.clone(),
                message: e.to_string(),
            })?;
            println!("{}", args.out.display());
        }
        Command::ValidateConfig(args) => {
            let cfg = args.load()?;
            let (_, text) = cfg.resolve_calibration()?;
            println!(
                "config ok: {} ({}, calibration sha256 {})",
                args.config.display(),
                cfg.experiment.as_str(),
                groups_cli::manifest::content_hash(&text)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help and version requests arrive as "errors" but are not failures
            let failed = err.use_stderr();
            let _ = err.print();
            return if failed { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
