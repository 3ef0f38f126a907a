use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use mtsbl_cli::config::{parse_config, RunConfig, RunMode};
use mtsbl_cli::runner::{self, config_from_manifest};

/// Multi-task SBL channel tracking experiments.
///
/// Without `--config` every parameter takes its default value. Flags
/// override the corresponding configuration keys.
#[derive(Debug, Parser)]
#[command(name = "mtsbl", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a previous manifest.json.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Base seed; realization i uses base + i (overrides `scenario.rng_seed`).
    #[arg(long)]
    seeds: Option<u64>,
    /// Worker threads for independent realizations.
    #[arg(long)]
    workers: Option<usize>,
    /// Filter mode(s) to run.
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
    /// Number of realizations.
    #[arg(long)]
    realizations: Option<usize>,
    /// Write SVG figures.
    #[arg(long)]
    plots: bool,
    /// Also write the beamspace ground truth of every realization to truth.csv.
    #[arg(long)]
    dump_truth: bool,
    /// Write the effective configuration as TOML to this path and exit.
    #[arg(long)]
    export_config: Option<PathBuf>,
}

fn load(args: &Args) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.replay) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(manifest)) => config_from_manifest(manifest)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seeds {
        cfg.scenario.rng_seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(r) = args.realizations {
        cfg.realizations = r;
    }
    if args.plots {
        cfg.emit_plots = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: &Args) -> Result<()> {
    let cfg = load(args)?;
    if let Some(path) = &args.export_config {
        runner::export_config(&cfg, path)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let summary = runner::run(&cfg, &cfg.output_dir, args.dump_truth)?;
    for (mode, steps) in &summary.aggregates {
        let first = &steps[0];
        let tracked = &steps[1..];
        let mean = |f: fn(&mtsbl::metrics::AggregateStep) -> f64| {
            if tracked.is_empty() {
                f64::NAN
            } else {
                tracked.iter().map(f).sum::<f64>() / tracked.len() as f64
            }
        };
        println!(
            "{:<9} t=0: {:7.1} iterations, RMSE {:.4} | t>=1: {:7.1} iterations, RMSE {:.4}",
            mode.label(),
            first.iterations.mean,
            first.rmse_norm.mean,
            mean(|s| s.iterations.mean),
            mean(|s| s.rmse_norm.mean),
        );
    }
    println!("results in {}", summary.output_dir.display());
    Ok(())
}
