//! Off-grid refinement.
//!
//! With `Ω(ν) = F + Ḟ·diag(ν)` the prediction splits into
//! `Υ̃h = Υ̃₀h + B(h)ν` where `Υ̃₀` uses `F` alone and
//! `B(h) = Σ_m x_m ⊗ Ḟ·diag(h_m)`. The expected residual
//! `Σ_n E‖y[n] − Υ̃[n]h[n]‖² = Σ_n T^(a)[n] + T^(b)[n]` is therefore an exact
//! quadratic in the real vector `ν`; its stationary point solves `Aν = b`
//! with `A = Re Σ_n E[BᴴB]` and `b = Re Σ_n E[Bᴴ(y − Υ̃₀h)]`, the
//! expectations taken under the current posterior.

use nalgebra::{Cholesky, DMatrix};

use super::operator::despread;
use super::updates::residual_terms;
use super::PosteriorStats;
use crate::dictionary::{OffGridDictionary, OffGridVector};
use crate::{CVector, Error, RVector, Result};

/// Normal equations of the off-grid objective and their solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OffGridSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: RVector,
    /// Stationary point before clipping to the grid cell.
    pub unclipped: RVector,
}

/// `Σ_n T^(a)[n] + T^(b)[n]` at the dictionary's current `ν`.
pub fn offgrid_objective(
    posterior: &PosteriorStats,
    ys: &[CVector],
    dict: &OffGridDictionary,
) -> f64 {
    let (fit, spread) = residual_terms(posterior, ys, dict, false);
    fit + spread
}

/// Assembles and solves the normal equations for `ν`. Does not clip.
///
/// The posterior may come from any `ν`; the objective depends on it only
/// through `μ[n]` and `Σ[n]`.
pub fn solve_offgrid(
    posterior: &PosteriorStats,
    ys: &[CVector],
    dict: &OffGridDictionary,
) -> Result<OffGridSystem> {
    super::check_measurements(ys, dict)?;
    if posterior.n_subcarriers() != ys.len() {
        return Err(Error::mismatch(
            "posterior subcarriers",
            ys.len(),
            posterior.n_subcarriers(),
        ));
    }
    let n_bs = dict.n_bs();
    let users = dict.m_users();
    let f = dict.f_base();
    let fd = dict.f_deriv();
    let w = fd.ad_mul(fd);
    let v = fd.ad_mul(f);

    let mut a = DMatrix::<f64>::zeros(n_bs, n_bs);
    let mut b = RVector::zeros(n_bs);
    for (n, (entry, y)) in posterior.entries.iter().zip(ys).enumerate() {
        let pilot_gram = dict.pilot_gram(n);
        let mu = &entry.mu;
        let second_moment = &entry.sigma + mu * mu.adjoint();

        // data term: Σ_m conj(μ_{m,r})·(Ḟᴴz_m)_r
        for (m, z) in despread(dict.pilots(n), y, n_bs).iter().enumerate() {
            let dz = fd.ad_mul(z);
            for r in 0..n_bs {
                b[r] += (mu[m * n_bs + r].conj() * dz[r]).re;
            }
        }

        for m in 0..users {
            for mp in 0..users {
                let p = pilot_gram[(m, mp)];
                // block[(i, j)] = E[h_{m',i} conj(h_{m,j})]
                let block = second_moment.view((mp * n_bs, m * n_bs), (n_bs, n_bs));
                for r in 0..n_bs {
                    let mut cross = num_complex::Complex64::new(0.0, 0.0);
                    for k in 0..n_bs {
                        cross += v[(r, k)] * block[(k, r)];
                    }
                    b[r] -= (p * cross).re;
                    for rp in 0..n_bs {
                        a[(r, rp)] += (p * w[(r, rp)] * block[(rp, r)]).re;
                    }
                }
            }
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let unclipped = solve_symmetric(&a, &b).unwrap_or_else(|| dict.nu().as_vector().clone());
    Ok(OffGridSystem {
        matrix: a,
        rhs: b,
        unclipped,
    })
}

/// Cholesky solve, falling back to `A + εI` with `ε = 1e-8·tr(A)/N_BS` and
/// finally LU. `None` when `A` carries no information.
fn solve_symmetric(a: &DMatrix<f64>, b: &RVector) -> Option<RVector> {
    let n = a.nrows();
    let trace = a.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return None;
    }
    if let Some(ch) = Cholesky::new(a.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let eps = 1e-8 * trace / n as f64;
    let damped = a + DMatrix::<f64>::identity(n, n) * eps;
    if let Some(ch) = Cholesky::new(damped.clone()) {
        return Some(ch.solve(b));
    }
    damped
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Minimizes the expected residual over `ν` and clips to `[-δ/2, δ/2]`.
pub fn update_offgrid(
    posterior: &PosteriorStats,
    ys: &[CVector],
    dict: &OffGridDictionary,
) -> Result<OffGridVector> {
    let system = solve_offgrid(posterior, ys, dict)?;
    Ok(OffGridVector::clipped(system.unclipped))
}
