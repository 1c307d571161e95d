use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use emlab_cli::config::schema_listing;
use emlab_cli::{emit_report, run_experiment, ExperimentConfig, ExperimentId};

/// Run an emlab experiment, or `emlab list` to show experiment ids and config keys.
#[derive(Debug, Parser)]
#[command(name = "emlab", version)]
struct Args {
    /// Experiment id, or `list`.
    experiment: String,
    /// JSON config file. Without one the experiment's defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled norms, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override `KEY=VALUE`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
}

fn run(args: Args) -> anyhow::Result<bool> {
    if args.experiment == "list" {
        print!("{}", schema_listing());
        return Ok(true);
    }
    let id: ExperimentId = args.experiment.parse()?;
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(id),
    };
    if cfg.experiment != id.as_str() {
        anyhow::bail!("config is for `{}` but `{id}` was requested", cfg.experiment);
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = args.out {
        cfg.output = Some(o);
    }
    cfg.apply_tolerances(&args.tol)?;
    let mut report = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    let files = emit_report(&mut report, &dir).with_context(|| format!("writing report to {}", dir.display()))?;
    print!("{}", report.summary());
    for f in &files {
        println!("wrote {}", f.display());
    }
    println!("{} in {:.2} s: {}", id, report.wall_time, if report.pass { "pass" } else { "FAIL" });
    Ok(report.pass)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
