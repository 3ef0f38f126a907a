//! MT-SBL expectation-maximization core.
//!
//! All `N` subcarriers share one vector of sparsity precisions `α`, one
//! noise precision `α₀` and one off-grid vector `ν`; each subcarrier keeps
//! its own Gaussian posterior over the beamspace channel.

mod evidence;
mod offgrid;
mod operator;
mod posterior;
mod updates;

pub use evidence::{marginal_log_likelihood, marginal_log_likelihood_from_posterior};
pub use offgrid::{offgrid_objective, solve_offgrid, update_offgrid, OffGridSystem};
pub use operator::{KroneckerDictionary, SubcarrierDictionary};
pub use posterior::{posterior_stats, PosteriorEntry, PosteriorStats};
pub use updates::{update_alpha, update_alpha0};

use crate::dictionary::{OffGridDictionary, OffGridVector};
use crate::{CMatrix, CVector, Error, RVector, Result};

/// Lower clamp for sparsity precisions.
pub const ALPHA_MIN: f64 = 1e-10;
/// Upper clamp for sparsity precisions; coefficients at the ceiling are pruned.
pub const ALPHA_MAX: f64 = 1e12;

/// Sparsity and noise precisions together with their Gamma hyperpriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub alpha: RVector,
    pub alpha0: f64,
    /// Gamma shapes of `α`.
    pub c: RVector,
    /// Gamma scales of `α`.
    pub d: RVector,
    pub a: f64,
    pub b: f64,
}

impl Hyperparameters {
    /// Uninformative start: `α = 1`, `α₀ = 1`, `a = b = c = d = 0.01`.
    pub fn initial(n_coeffs: usize) -> Self {
        Self {
            alpha: RVector::from_element(n_coeffs, 1.0),
            alpha0: 1.0,
            c: RVector::from_element(n_coeffs, 0.01),
            d: RVector::from_element(n_coeffs, 0.01),
            a: 0.01,
            b: 0.01,
        }
    }

    pub fn n_coeffs(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alpha.len();
        if self.c.len() != k || self.d.len() != k {
            return Err(Error::mismatch(
                "hyperparameter lengths",
                k,
                format!("c: {}, d: {}", self.c.len(), self.d.len()),
            ));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(
                "alpha must be positive and finite".into(),
            ));
        }
        if !(self.alpha0 > 0.0) || !self.alpha0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha0 must be positive, got {}",
                self.alpha0
            )));
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !self.c.iter().chain(self.d.iter()).all(|v| nonneg(*v))
            || !nonneg(self.a)
            || !nonneg(self.b)
        {
            return Err(Error::InvalidArgument(
                "Gamma parameters must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Convergence bookkeeping of one EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceState {
    /// Relative change `‖α − α′‖₂/‖α′‖₂` of the last iteration (infinite
    /// until the second iteration).
    pub rho: f64,
    pub iter: usize,
    pub converged: bool,
    /// Marginal log-likelihood before every iteration's update (diagnostic).
    pub evidence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub beta_th: f64,
    pub max_iter: usize,
    /// When false `ν` stays frozen at its initial value.
    pub update_offgrid: bool,
    pub track_evidence: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            beta_th: 1e-3,
            max_iter: 1000,
            update_offgrid: true,
            track_evidence: false,
        }
    }
}

/// Snapshot handed to an observer after every EM iteration.
#[derive(Debug)]
pub struct IterationReport<'a> {
    pub iter: usize,
    /// Posterior computed at the top of the iteration.
    pub posterior: &'a PosteriorStats,
    /// Hyperparameters used for that posterior.
    pub previous: &'a Hyperparameters,
    /// Hyperparameters after the update.
    pub updated: &'a Hyperparameters,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    /// `ĥ[n] = μ[n]`, with pruned coefficients zeroed.
    pub estimates: Vec<CVector>,
    pub hyper: Hyperparameters,
    /// Off-grid vector after the last update (the state carried forward).
    pub nu: OffGridVector,
    /// Off-grid vector of the dictionary the estimates were computed with.
    pub estimate_nu: OffGridVector,
    pub convergence: ConvergenceState,
    pub posterior: PosteriorStats,
}

/// Structured per-iteration view of the dictionary: `Ω(ν)` and `ΩᴴΩ`.
pub(crate) struct IterationDictionary {
    pub omega: CMatrix,
    pub omega_gram: CMatrix,
}

impl IterationDictionary {
    pub fn new(dict: &OffGridDictionary) -> Self {
        let omega = dict.omega();
        let omega_gram = omega.adjoint() * &omega;
        Self { omega, omega_gram }
    }

    pub fn at<'a>(&'a self, dict: &'a OffGridDictionary, n: usize) -> KroneckerDictionary<'a> {
        KroneckerDictionary::new(&self.omega, &self.omega_gram, dict.pilots(n))
    }
}

pub(crate) fn check_measurements(ys: &[CVector], dict: &OffGridDictionary) -> Result<()> {
    if ys.len() != dict.n_subcarriers() {
        return Err(Error::mismatch(
            "measurement subcarriers",
            dict.n_subcarriers(),
            ys.len(),
        ));
    }
    if let Some((n, y)) = ys
        .iter()
        .enumerate()
        .find(|(_, y)| y.len() != dict.n_measurements())
    {
        return Err(Error::mismatch(
            "measurement length",
            dict.n_measurements(),
            format!("{} at n={n}", y.len()),
        ));
    }
    Ok(())
}

/// Posterior statistics for every subcarrier under the dictionary's current `ν`.
pub fn posterior_all(
    ys: &[CVector],
    dict: &OffGridDictionary,
    hyper: &Hyperparameters,
) -> Result<PosteriorStats> {
    check_measurements(ys, dict)?;
    let cache = IterationDictionary::new(dict);
    let entries = ys
        .iter()
        .enumerate()
        .map(|(n, y)| posterior_stats(y, &cache.at(dict, n), hyper, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorStats { entries })
}

/// Runs the EM loop until `ρ ≤ β_th` or `max_iter` iterations.
///
/// Each iteration: posterior under the current `ν` → `α` → `α₀` → `ν`,
/// then `ρ` (from the second iteration on).
pub fn run_em(
    ys: &[CVector],
    dict: &OffGridDictionary,
    init: &Hyperparameters,
    opts: &EmOptions,
) -> Result<EmOutcome> {
    run_em_observed(ys, dict, init, opts, |_| {})
}

pub fn run_em_observed<F>(
    ys: &[CVector],
    dict: &OffGridDictionary,
    init: &Hyperparameters,
    opts: &EmOptions,
    mut observer: F,
) -> Result<EmOutcome>
where
    F: FnMut(&IterationReport<'_>),
{
    check_measurements(ys, dict)?;
    init.validate()?;
    if init.n_coeffs() != dict.n_coeffs() {
        return Err(Error::mismatch(
            "hyperparameter length",
            dict.n_coeffs(),
            init.n_coeffs(),
        ));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(opts.beta_th > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta_th must be positive, got {}",
            opts.beta_th
        )));
    }

    let mut dict = dict.clone();
    let mut hyper = init.clone();
    let mut state = ConvergenceState {
        rho: f64::INFINITY,
        iter: 0,
        converged: false,
        evidence: Vec::new(),
    };
    loop {
        state.iter += 1;
        let iteration = state.iter;
        let tag = |e: Error| Error::Em {
            iteration,
            source: Box::new(e),
        };

        let cache = IterationDictionary::new(&dict);
        let entries = ys
            .iter()
            .enumerate()
            .map(|(n, y)| posterior_stats(y, &cache.at(&dict, n), &hyper, n))
            .collect::<Result<Vec<_>>>()
            .map_err(tag)?;
        let posterior = PosteriorStats { entries };
        if opts.track_evidence {
            state.evidence.push(marginal_log_likelihood_from_posterior(
                ys,
                &posterior,
                &hyper,
                dict.n_measurements(),
            ));
        }

        let previous = hyper.clone();
        hyper.alpha = update_alpha(&hyper, &posterior).map_err(tag)?;
        hyper.alpha0 = update_alpha0(&hyper, &posterior, ys, &dict).map_err(tag)?;
        let estimate_nu = dict.nu().clone();
        if opts.update_offgrid {
            let nu = update_offgrid(&posterior, ys, &dict).map_err(tag)?;
            dict.set_nu(nu)?;
        }
        if iteration > 1 {
            state.rho = (&hyper.alpha - &previous.alpha).norm() / previous.alpha.norm();
        }
        observer(&IterationReport {
            iter: iteration,
            posterior: &posterior,
            previous: &previous,
            updated: &hyper,
            rho: state.rho,
        });

        state.converged = state.rho <= opts.beta_th;
        if state.converged || iteration >= opts.max_iter {
            let estimates = posterior
                .entries
                .iter()
                .map(|e| {
                    let mut mu = e.mu.clone();
                    for (l, a) in hyper.alpha.iter().enumerate() {
                        if *a >= ALPHA_MAX {
                            mu[l] = num_complex::Complex64::new(0.0, 0.0);
                        }
                    }
                    mu
                })
                .collect();
            return Ok(EmOutcome {
                estimates,
                hyper,
                nu: dict.nu().clone(),
                estimate_nu,
                convergence: state,
                posterior,
            });
        }
    }
}
