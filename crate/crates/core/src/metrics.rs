//! Scoring of estimates against ground truth and Monte-Carlo aggregation.
//!
//! Standard deviations use the population convention (divide by the number
//! of realizations).

use serde::Serialize;

use crate::{CVector, Error, Result};

/// Default support threshold relative to the peak coefficient magnitude.
pub const SUPPORT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub rmse_norm: f64,
    pub nmse: f64,
    pub support_f1: f64,
    pub iterations: usize,
}

fn check_pair(estimates: &[CVector], truth: &[CVector]) -> Result<()> {
    if estimates.is_empty() || estimates.len() != truth.len() {
        return Err(Error::mismatch(
            "metric subcarriers",
            truth.len(),
            estimates.len(),
        ));
    }
    if let Some((n, _)) = estimates
        .iter()
        .zip(truth)
        .enumerate()
        .find(|(_, (e, t))| e.len() != t.len())
    {
        return Err(Error::mismatch(
            "metric vector length",
            truth[n].len(),
            estimates[n].len(),
        ));
    }
    Ok(())
}

/// `sqrt((1/N)·Σ_n (‖ĥ[n]‖ − ‖h[n]‖)²)`.
pub fn rmse_channel_norm(estimates: &[CVector], truth: &[CVector]) -> Result<f64> {
    check_pair(estimates, truth)?;
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.norm() - t.norm()).powi(2))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// `(1/N)·Σ_n ‖ĥ[n] − h[n]‖²/‖h[n]‖²`.
pub fn nmse(estimates: &[CVector], truth: &[CVector]) -> Result<f64> {
    check_pair(estimates, truth)?;
    let mut sum = 0.0;
    for (n, (e, t)) in estimates.iter().zip(truth).enumerate() {
        let energy = t.norm_squared();
        if !(energy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "true channel is zero at subcarrier {n}"
            )));
        }
        sum += (e - t).norm_squared() / energy;
    }
    Ok(sum / truth.len() as f64)
}

fn significant(vs: &[CVector], rel: f64) -> Vec<usize> {
    let len = vs[0].len();
    let rms: Vec<f64> = (0..len)
        .map(|l| (vs.iter().map(|v| v[l].norm_sqr()).sum::<f64>() / vs.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    (0..len).filter(|&l| rms[l] > rel * peak).collect()
}

/// F1 score between the coefficient sets whose RMS magnitude over
/// subcarriers exceeds `rel_threshold` times the respective peak.
pub fn support_f1(estimates: &[CVector], truth: &[CVector], rel_threshold: f64) -> Result<f64> {
    check_pair(estimates, truth)?;
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rel_threshold must lie in (0, 1), got {rel_threshold}"
        )));
    }
    let t = significant(truth, rel_threshold);
    if t.is_empty() {
        return Err(Error::InvalidArgument("true support is empty".into()));
    }
    let e = significant(estimates, rel_threshold);
    let common = e.iter().filter(|l| t.binary_search(l).is_ok()).count();
    Ok(2.0 * common as f64 / (e.len() + t.len()) as f64)
}

pub fn score_step(
    estimates: &[CVector],
    truth: &[CVector],
    iterations: usize,
) -> Result<StepMetrics> {
    Ok(StepMetrics {
        rmse_norm: rmse_channel_norm(estimates, truth)?,
        nmse: nmse(estimates, truth)?,
        support_f1: support_f1(estimates, truth, SUPPORT_THRESHOLD)?,
        iterations,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot aggregate an empty sample".into(),
        ));
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    Ok(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

/// Per-time-step statistics across realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateStep {
    pub t: usize,
    pub rmse_norm: MeanStd,
    pub nmse: MeanStd,
    pub support_f1: MeanStd,
    pub iterations: MeanStd,
}

/// Elementwise mean/std over realizations; all sequences must share a length.
pub fn aggregate(realizations: &[Vec<StepMetrics>]) -> Result<Vec<AggregateStep>> {
    let first = realizations
        .first()
        .ok_or_else(|| Error::InvalidArgument("no realizations to aggregate".into()))?;
    if let Some(bad) = realizations.iter().find(|r| r.len() != first.len()) {
        return Err(Error::mismatch(
            "realization length",
            first.len(),
            bad.len(),
        ));
    }
    (0..first.len())
        .map(|t| {
            let column = |f: fn(&StepMetrics) -> f64| -> Result<MeanStd> {
                mean_std(&realizations.iter().map(|r| f(&r[t])).collect::<Vec<_>>())
            };
            Ok(AggregateStep {
                t,
                rmse_norm: column(|m| m.rmse_norm)?,
                nmse: column(|m| m.nmse)?,
                support_f1: column(|m| m.support_f1)?,
                iterations: column(|m| m.iterations as f64)?,
            })
        })
        .collect()
}
