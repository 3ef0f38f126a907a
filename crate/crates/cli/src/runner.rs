//! Monte-Carlo execution: one simulated scenario per realization, tracked
//! once per requested filter mode, scored step by step.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use mtsbl::metrics::{aggregate, score_step, AggregateStep, StepMetrics, SUPPORT_THRESHOLD};
use mtsbl::sbl::{ALPHA_MAX, ALPHA_MIN};
use mtsbl::scenario::{self, simulate, Realization};
use mtsbl::tracker::{track, FilterMode, UNINFORMATIVE_GAMMA};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::plots;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.csv";

const METRICS_HEADER: [&str; 8] = [
    "t",
    "realization",
    "rmse_norm",
    "nmse",
    "support_f1",
    "iterations",
    "mode",
    "seed",
];

/// Result of tracking one realization in one mode.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: FilterMode,
    pub metrics: Vec<StepMetrics>,
    pub durations: Vec<Duration>,
    /// Per step: mean over subcarriers of `‖h[n]‖` and of `‖ĥ[n]‖`.
    pub norms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RealizationRun {
    pub index: usize,
    pub seed: u64,
    pub modes: Vec<ModeRun>,
}

fn mean_norm(vs: &[mtsbl::CVector]) -> f64 {
    vs.iter().map(|v| v.norm()).sum::<f64>() / vs.len() as f64
}

/// Tracks an already simulated realization in `mode`.
pub fn track_realization(
    cfg: &RunConfig,
    real: &Realization,
    mode: FilterMode,
) -> mtsbl::Result<ModeRun> {
    let ys: Vec<_> = real.measurements.iter().map(|m| m.y.clone()).collect();
    let record = track(
        &ys,
        &real.dictionary,
        &cfg.tracker(mode, real.config.rng_seed),
    )?;
    let mut run = ModeRun {
        mode,
        metrics: Vec::with_capacity(record.steps.len()),
        durations: Vec::with_capacity(record.steps.len()),
        norms: Vec::with_capacity(record.steps.len()),
    };
    for (step, truth) in record.steps.iter().zip(&real.truth.steps) {
        run.metrics
            .push(score_step(&step.grid_estimates, &truth.h, step.iterations)?);
        run.durations.push(step.duration);
        run.norms
            .push((mean_norm(&truth.h), mean_norm(&step.grid_estimates)));
    }
    Ok(run)
}

pub fn simulate_realization(cfg: &RunConfig, index: usize) -> mtsbl::Result<Realization> {
    simulate(&cfg.scenario_for(index), cfg.phase_reference)
}

/// Simulates realization `index` and tracks it in every requested mode on
/// the same measurements.
pub fn run_realization(cfg: &RunConfig, index: usize) -> mtsbl::Result<RealizationRun> {
    let real = simulate_realization(cfg, index)?;
    let modes = cfg
        .mode
        .filters()
        .into_iter()
        .map(|mode| track_realization(cfg, &real, mode))
        .collect::<mtsbl::Result<Vec<_>>>()?;
    Ok(RealizationRun {
        index,
        seed: cfg.seed_for(index),
        modes,
    })
}

/// Fixed choices that are not part of the configuration file.
#[derive(Debug, Serialize)]
struct Defaults {
    support_threshold_rel_peak: f64,
    truth_support_rel_energy: f64,
    alpha_clamp: [f64; 2],
    initial_gamma_shape_scale: f64,
    gain_ar_coeff: f64,
    max_delay_fraction: f64,
    path_placement: &'static str,
    pilots: &'static str,
    snr_definition: &'static str,
    scoring_basis: &'static str,
    std_convention: &'static str,
    seed_rule: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    seeds: Vec<u64>,
    modes: Vec<&'static str>,
    defaults: Defaults,
}

fn manifest(cfg: &RunConfig) -> Manifest<'_> {
    Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds: (0..cfg.realizations).map(|i| cfg.seed_for(i)).collect(),
        modes: cfg
            .mode
            .filters()
            .into_iter()
            .map(FilterMode::label)
            .collect(),
        defaults: Defaults {
            support_threshold_rel_peak: SUPPORT_THRESHOLD,
            truth_support_rel_energy: scenario::SUPPORT_REL_ENERGY,
            alpha_clamp: [ALPHA_MIN, ALPHA_MAX],
            initial_gamma_shape_scale: UNINFORMATIVE_GAMMA,
            gain_ar_coeff: scenario::GAIN_AR_COEFF,
            max_delay_fraction: scenario::MAX_DELAY_FRACTION,
            path_placement: "uniform within the angular spread around a uniform centre",
            pilots: "orthogonal DFT rows, unit power",
            snr_definition: "mean received signal energy per sample over noise variance",
            scoring_basis: "estimates mapped onto the DFT beamspace grid",
            std_convention: "population",
            seed_rule: "scenario.rng_seed + realization index",
        },
    }
}

/// Reads the configuration echoed in a manifest written by [`run`].
pub fn config_from_manifest(path: &Path) -> Result<RunConfig> {
    #[derive(serde::Deserialize)]
    struct Echo {
        config: RunConfig,
    }
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let echo: Echo = serde_json::from_str(&text)
        .with_context(|| format!("malformed manifest {}", path.display()))?;
    echo.config.validate()?;
    Ok(echo.config)
}

fn metrics_row(run: &RealizationRun, mode: &ModeRun, t: usize, m: &StepMetrics) -> [String; 8] {
    [
        t.to_string(),
        run.index.to_string(),
        m.rmse_norm.to_string(),
        m.nmse.to_string(),
        m.support_f1.to_string(),
        m.iterations.to_string(),
        mode.mode.label().to_string(),
        run.seed.to_string(),
    ]
}

/// Per-mode aggregates of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub aggregates: Vec<(FilterMode, Vec<AggregateStep>)>,
}

/// Executes the whole experiment and writes every artefact to `out`.
///
/// Realizations are computed in batches of `workers` and written in index
/// order, so the CSV content does not depend on the worker count. On a
/// numerical failure the rows written so far are kept, a `FAILED` marker row
/// is appended and the error is returned.
pub fn run(cfg: &RunConfig, out: &Path, dump_truth: bool) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let json = serde_json::to_string_pretty(&manifest(cfg))?;
    fs::write(out.join(MANIFEST_FILE), json + "\n")?;

    let mut metrics_csv = csv::Writer::from_path(out.join(METRICS_FILE))?;
    metrics_csv.write_record(METRICS_HEADER)?;
    let mut timings_csv = csv::Writer::from_path(out.join(TIMINGS_FILE))?;
    timings_csv.write_record(["t", "realization", "mode", "seconds"])?;
    let mut truth_csv = if dump_truth {
        let mut w = csv::Writer::from_path(out.join(TRUTH_FILE))?;
        w.write_record(["realization", "seed", "t", "n", "index", "re", "im"])?;
        Some(w)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    let filters = cfg.mode.filters();
    let mut per_mode: Vec<Vec<Vec<StepMetrics>>> = vec![Vec::new(); filters.len()];
    let mut first: Option<RealizationRun> = None;

    let indices: Vec<usize> = (0..cfg.realizations).collect();
    for batch in indices.chunks(cfg.workers) {
        let results: Vec<(usize, mtsbl::Result<RealizationRun>)> = pool.install(|| {
            batch
                .par_iter()
                .map(|&i| (i, run_realization(cfg, i)))
                .collect()
        });
        for (index, result) in results {
            let run = match result {
                Ok(run) => run,
                Err(err) => {
                    for mode in &filters {
                        let seed = cfg.seed_for(index).to_string();
                        metrics_csv.write_record([
                            "FAILED",
                            &index.to_string(),
                            "",
                            "",
                            "",
                            "",
                            mode.label(),
                            &seed,
                        ])?;
                    }
                    metrics_csv.flush()?;
                    return Err(
                        anyhow::Error::new(err).context(format!("realization {index} failed"))
                    );
                }
            };
            for (k, mode) in run.modes.iter().enumerate() {
                for (t, m) in mode.metrics.iter().enumerate() {
                    metrics_csv.write_record(metrics_row(&run, mode, t, m))?;
                    let secs = mode.durations[t].as_secs_f64().to_string();
                    timings_csv.write_record([
                        &t.to_string(),
                        &run.index.to_string(),
                        mode.mode.label(),
                        &secs,
                    ])?;
                }
                per_mode[k].push(mode.metrics.clone());
            }
            if let Some(w) = truth_csv.as_mut() {
                write_truth(w, cfg, index)?;
            }
            metrics_csv.flush()?;
            if first.is_none() {
                first = Some(run);
            }
        }
    }
    metrics_csv.flush()?;
    timings_csv.flush()?;
    if let Some(mut w) = truth_csv {
        w.flush()?;
    }

    let aggregates = filters
        .iter()
        .zip(&per_mode)
        .map(|(mode, runs)| Ok((*mode, aggregate(runs)?)))
        .collect::<mtsbl::Result<Vec<_>>>()?;
    write_summary(&out.join(SUMMARY_FILE), &aggregates)?;

    if cfg.emit_plots {
        let first = first.expect("at least one realization");
        plots::write_all(out, &aggregates, &first)?;
    }
    Ok(RunSummary {
        output_dir: out.to_path_buf(),
        aggregates,
    })
}

fn write_truth<W: Write>(w: &mut csv::Writer<W>, cfg: &RunConfig, index: usize) -> Result<()> {
    let real = simulate_realization(cfg, index)?;
    let seed = cfg.seed_for(index).to_string();
    for (t, step) in real.truth.steps.iter().enumerate() {
        for (n, h) in step.h.iter().enumerate() {
            for (l, z) in h.iter().enumerate() {
                w.write_record([
                    index.to_string(),
                    seed.clone(),
                    t.to_string(),
                    n.to_string(),
                    l.to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])?;
            }
        }
    }
    Ok(())
}

fn write_summary(path: &Path, aggregates: &[(FilterMode, Vec<AggregateStep>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t",
        "mode",
        "rmse_norm_mean",
        "rmse_norm_std_pop",
        "nmse_mean",
        "nmse_std_pop",
        "support_f1_mean",
        "support_f1_std_pop",
        "iterations_mean",
        "iterations_std_pop",
    ])?;
    for (mode, steps) in aggregates {
        for s in steps {
            w.write_record([
                s.t.to_string(),
                mode.label().to_string(),
                s.rmse_norm.mean.to_string(),
                s.rmse_norm.std.to_string(),
                s.nmse.mean.to_string(),
                s.nmse.std.to_string(),
                s.support_f1.mean.to_string(),
                s.support_f1.std.to_string(),
                s.iterations.mean.to_string(),
                s.iterations.std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the configuration as a TOML file that `--config` accepts.
pub fn export_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(cfg.to_toml().as_bytes())?;
    Ok(())
}
