//! Dynamic filtering across time steps.
//!
//! After the EM run at step `t−1`, the estimate is used as the prediction
//! `ħ[n]` for step `t`. The MSE-optimal precision for that prediction is
//! `α_opt,l = 1/((1/N)Σ_n|ħ_l[n]|²)`, and the Gamma hyperprior of step `t`
//! is set to `c_l = α_opt,l`, `d_l = 1` (with `c_l = √α_opt,l` when
//! `α_opt,l` is large). `α`, `α₀` and `ν` carry over as the EM state.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{OffGridDictionary, OffGridVector};
use crate::sbl::{run_em, EmOptions, Hyperparameters, ALPHA_MAX};
use crate::{CVector, Error, RVector, Result};

/// Mean power below which a beam counts as inactive in `α_opt`.
pub const INACTIVE_POWER: f64 = 1e-12;
/// Gamma parameters used when no dynamic information is available.
pub const UNINFORMATIVE_GAMMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    PreviousEstimate,
    BlurredPreviousEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPrediction {
    pub hbar: Vec<CVector>,
    pub source: PredictionSource,
}

/// Spatial Gaussian blur with additive perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blur {
    /// Kernel standard deviation in grid cells.
    pub width: f64,
    /// Variance of the complex Gaussian perturbation.
    pub q: f64,
}

/// Blur settings of the tracker; `q` is relative to the mean estimate power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    pub width: f64,
    pub q_rel: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            width: 1.0,
            q_rel: 1e-4,
        }
    }
}

fn circular_gaussian_kernel(n_bs: usize, width: f64) -> Vec<f64> {
    let mut kernel: Vec<f64> = (0..n_bs)
        .map(|i| {
            let dist = i.min(n_bs - i) as f64;
            (-dist * dist / (2.0 * width * width)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    kernel
}

/// Dynamic prediction from the previous estimate.
///
/// Without `blur` this is the identity. With `blur`, every user's
/// `n_bs`-long beam block is circularly convolved with a normalized Gaussian
/// kernel and perturbed by `CN(0, q)` noise.
pub fn predict<R: Rng + ?Sized>(
    prev: &[CVector],
    n_bs: usize,
    blur: Option<&Blur>,
    rng: &mut R,
) -> Result<DynamicPrediction> {
    let Some(blur) = blur else {
        return Ok(DynamicPrediction {
            hbar: prev.to_vec(),
            source: PredictionSource::PreviousEstimate,
        });
    };
    if !(blur.width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur width must be positive, got {}",
            blur.width
        )));
    }
    if !(blur.q >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur variance must be >= 0, got {}",
            blur.q
        )));
    }
    if n_bs == 0 || prev.iter().any(|h| h.len() % n_bs != 0) {
        return Err(Error::mismatch(
            "predict block size",
            n_bs,
            "incompatible channel length",
        ));
    }
    let kernel = circular_gaussian_kernel(n_bs, blur.width);
    let s = (blur.q / 2.0).sqrt();
    let hbar = prev
        .iter()
        .map(|h| {
            let mut out = CVector::zeros(h.len());
            for block in 0..h.len() / n_bs {
                let base = block * n_bs;
                for i in 0..n_bs {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, k) in kernel.iter().enumerate() {
                        acc += h[base + (i + n_bs - j) % n_bs] * *k;
                    }
                    out[base + i] = acc;
                }
            }
            if blur.q > 0.0 {
                out.apply(|z| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *z += Complex64::new(s * re, s * im);
                });
            }
            out
        })
        .collect();
    Ok(DynamicPrediction {
        hbar,
        source: PredictionSource::BlurredPreviousEstimate,
    })
}

/// `α_opt,l = 1/((1/N)Σ_n|ħ_l[n]|²)`; inactive beams get `ALPHA_MAX`.
pub fn alpha_opt(prediction: &DynamicPrediction) -> RVector {
    let n = prediction.hbar.len();
    let len = prediction.hbar.first().map_or(0, |h| h.len());
    RVector::from_fn(len, |l, _| {
        let power = prediction.hbar.iter().map(|h| h[l].norm_sqr()).sum::<f64>() / n as f64;
        if power < INACTIVE_POWER {
            ALPHA_MAX
        } else {
            (1.0 / power).min(ALPHA_MAX)
        }
    })
}

/// `(c, d)` with `d_l = 1` and `c_l = α_opt,l`, or `√α_opt,l` above `large_threshold`.
pub fn hyper_warm_start(alpha_opt: &RVector, large_threshold: f64) -> (RVector, RVector) {
    let c = alpha_opt.map(|a| if a <= large_threshold { a } else { a.sqrt() });
    (c, RVector::from_element(alpha_opt.len(), 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Warm-start the Gamma hyperpriors from the previous estimate.
    #[serde(rename = "df")]
    DynamicFiltering,
    /// Reset `c = d = 0.01` at every step.
    Ablation,
}

impl FilterMode {
    pub fn label(self) -> &'static str {
        match self {
            FilterMode::DynamicFiltering => "df",
            FilterMode::Ablation => "ablation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub beta_th: f64,
    pub i_iter: usize,
    pub large_threshold: f64,
    pub mode: FilterMode,
    pub blur: Option<BlurConfig>,
    pub update_offgrid: bool,
    /// Seed of the blur perturbation stream.
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            beta_th: 1e-3,
            i_iter: 1000,
            large_threshold: 1e3,
            mode: FilterMode::DynamicFiltering,
            blur: None,
            update_offgrid: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// `ĥ[n]` in the off-grid dictionary basis.
    pub estimates: Vec<CVector>,
    /// `ĥ[n]` mapped onto the DFT grid, comparable to the beamspace truth.
    pub grid_estimates: Vec<CVector>,
    pub iterations: usize,
    pub rho: f64,
    pub converged: bool,
    pub alpha: RVector,
    pub alpha0: f64,
    /// Offsets of the dictionary the estimates were computed with.
    pub nu: RVector,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackRecord {
    pub steps: Vec<StepRecord>,
}

/// Runs MT-SBL over consecutive time steps, `measurements[t][n]`.
pub fn track(
    measurements: &[Vec<CVector>],
    dict: &OffGridDictionary,
    cfg: &TrackerConfig,
) -> Result<TrackRecord> {
    if !(cfg.large_threshold > 0.0) {
        return Err(Error::InvalidArgument(
            "large_threshold must be positive".into(),
        ));
    }
    let mut dict = dict.clone();
    dict.set_nu(OffGridVector::zeros(dict.n_bs()))?;
    let mut hyper = Hyperparameters::initial(dict.n_coeffs());
    let opts = EmOptions {
        beta_th: cfg.beta_th,
        max_iter: cfg.i_iter,
        update_offgrid: cfg.update_offgrid,
        track_evidence: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut record = TrackRecord::default();

    for (t, ys) in measurements.iter().enumerate() {
        let tag = |e: Error| Error::Track {
            step: t,
            source: Box::new(e),
        };
        let start = Instant::now();
        let outcome = run_em(ys, &dict, &hyper, &opts).map_err(tag)?;
        let duration = start.elapsed();

        let grid = dict.grid_projection(&outcome.estimate_nu);
        let grid_estimates = outcome
            .estimates
            .iter()
            .map(|h| dict.map_blocks(&grid, h))
            .collect();

        hyper = outcome.hyper.clone();
        dict.set_nu(outcome.nu.clone())?;
        match cfg.mode {
            FilterMode::DynamicFiltering => {
                let blur = cfg.blur.map(|b| Blur {
                    width: b.width,
                    q: b.q_rel * mean_power(&outcome.estimates),
                });
                let prediction = predict(&outcome.estimates, dict.n_bs(), blur.as_ref(), &mut rng)
                    .map_err(tag)?;
                let (c, d) = hyper_warm_start(&alpha_opt(&prediction), cfg.large_threshold);
                hyper.c = c;
                hyper.d = d;
            }
            FilterMode::Ablation => {
                hyper.c.fill(UNINFORMATIVE_GAMMA);
                hyper.d.fill(UNINFORMATIVE_GAMMA);
            }
        }

        record.steps.push(StepRecord {
            t,
            estimates: outcome.estimates,
            grid_estimates,
            iterations: outcome.convergence.iter,
            rho: outcome.convergence.rho,
            converged: outcome.convergence.converged,
            alpha: outcome.hyper.alpha,
            alpha0: outcome.hyper.alpha0,
            nu: outcome.estimate_nu.as_vector().clone(),
            duration,
        });
    }
    Ok(record)
}

fn mean_power(h: &[CVector]) -> f64 {
    let count: usize = h.iter().map(|v| v.len()).sum();
    if count == 0 {
        return 0.0;
    }
    h.iter().map(|v| v.norm_squared()).sum::<f64>() / count as f64
}
