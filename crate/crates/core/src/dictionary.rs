//! DFT beamspace basis, its first-order angular derivative and the off-grid
//! measurement dictionaries.
//!
//! Grid points are `θ_k = 2πk/N_BS` and the steering column for angle `θ` has
//! entries `exp(-j·r·θ)/√N_BS`, `r = 0..N_BS`. The off-grid steering matrix
//! is the first-order expansion `Ω(ν) = F + Ḟ·diag(ν)` of every grid column
//! around its grid angle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, RVector, Result, J};

/// Antenna index about which the angular derivative is taken.
///
/// The DFT basis itself is unaffected; the choice only decides which element
/// carries zero phase in the Taylor expansion. Expanding about the array
/// centre keeps `|r - r_ref|·ν` below `π/2` for every admissible offset and
/// makes the first-order model far more accurate than expanding about the
/// first element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// Element `r = 0`.
    FirstElement,
    /// Element `r = (N_BS - 1)/2`.
    #[default]
    Center,
}

impl PhaseReference {
    pub fn index(self, n_bs: usize) -> f64 {
        match self {
            PhaseReference::FirstElement => 0.0,
            PhaseReference::Center => (n_bs as f64 - 1.0) / 2.0,
        }
    }
}

/// Grid cell width `δ = 2π/N_BS`.
pub fn grid_spacing(n_bs: usize) -> f64 {
    2.0 * PI / n_bs as f64
}

pub fn grid_angle(k: usize, n_bs: usize) -> f64 {
    grid_spacing(n_bs) * k as f64
}

/// Exact (unit-norm) steering column for spatial frequency `theta`.
pub fn steering_vector(n_bs: usize, theta: f64) -> CVector {
    let scale = 1.0 / (n_bs as f64).sqrt();
    CVector::from_fn(n_bs, |r, _| {
        Complex64::from_polar(scale, -(r as f64) * theta)
    })
}

/// Normalized `n_bs`-point DFT matrix, entry `(r, k) = exp(-j·r·θ_k)/√n_bs`.
pub fn dft_matrix(n_bs: usize) -> Result<CMatrix> {
    if n_bs == 0 {
        return Err(Error::InvalidArgument("n_bs must be at least 1".into()));
    }
    let scale = 1.0 / (n_bs as f64).sqrt();
    Ok(CMatrix::from_fn(n_bs, n_bs, |r, k| {
        Complex64::from_polar(scale, -(r as f64) * grid_angle(k, n_bs))
    }))
}

/// Angular derivative of every DFT column, expanded about the first element:
/// entry `(r, k) = -j·r·exp(-j·r·θ_k)/√n_bs`.
pub fn dft_derivative_matrix(n_bs: usize) -> Result<CMatrix> {
    dft_derivative_matrix_with(n_bs, PhaseReference::FirstElement)
}

/// Angular derivative of every DFT column with the phase reference placed at
/// `reference`: entry `(r, k) = -j·(r - r_ref)·F[r, k]`.
pub fn dft_derivative_matrix_with(n_bs: usize, reference: PhaseReference) -> Result<CMatrix> {
    let f = dft_matrix(n_bs)?;
    let r_ref = reference.index(n_bs);
    Ok(CMatrix::from_fn(n_bs, n_bs, |r, k| {
        -J * (r as f64 - r_ref) * f[(r, k)]
    }))
}

/// Per-grid-point angular offsets, each confined to `[-δ/2, δ/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffGridVector {
    nu: RVector,
}

impl OffGridVector {
    pub fn zeros(n_bs: usize) -> Self {
        Self {
            nu: RVector::zeros(n_bs),
        }
    }

    /// Validates that every offset lies inside the grid cell.
    pub fn new(nu: RVector) -> Result<Self> {
        let half = grid_spacing(nu.len()) / 2.0;
        if let Some((r, v)) = nu
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > half * (1.0 + 1e-12))
        {
            return Err(Error::InvalidArgument(format!(
                "off-grid offset nu[{r}] = {v} outside [-{half}, {half}]"
            )));
        }
        Ok(Self { nu })
    }

    /// Projects arbitrary offsets onto the box; non-finite entries become 0.
    pub fn clipped(mut nu: RVector) -> Self {
        let half = grid_spacing(nu.len()) / 2.0;
        nu.apply(|v| {
            *v = if v.is_finite() {
                v.clamp(-half, half)
            } else {
                0.0
            }
        });
        Self { nu }
    }

    pub fn half_width(&self) -> f64 {
        grid_spacing(self.nu.len()) / 2.0
    }

    pub fn as_vector(&self) -> &RVector {
        &self.nu
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

/// Off-grid steering matrix `Ω(ν) = F + Ḟ·diag(ν)`.
pub fn steering_offgrid(
    f_base: &CMatrix,
    f_deriv: &CMatrix,
    nu: &OffGridVector,
) -> Result<CMatrix> {
    let n = f_base.nrows();
    if f_base.shape() != (n, n) || f_deriv.shape() != (n, n) || nu.len() != n {
        return Err(Error::mismatch(
            "steering_offgrid",
            format!("{n}x{n} bases and {n} offsets"),
            format!("{:?}, {:?}, {}", f_base.shape(), f_deriv.shape(), nu.len()),
        ));
    }
    let mut omega = f_base.clone();
    for (k, &v) in nu.as_vector().iter().enumerate() {
        omega
            .column_mut(k)
            .axpy(Complex64::from(v), &f_deriv.column(k), Complex64::from(1.0));
    }
    Ok(omega)
}

/// Dictionary block of one user, `pilot ⊗ Ω`.
pub fn user_dictionary(pilot: &CVector, omega: &CMatrix) -> Result<CMatrix> {
    if pilot.is_empty() {
        return Err(Error::InvalidArgument("pilot must be non-empty".into()));
    }
    Ok(pilot.kronecker(omega))
}

/// Shared pieces of the per-subcarrier stacked dictionaries.
///
/// Only the pilots differ across subcarriers; the stacked matrix for
/// subcarrier `n` is assembled on demand by [`stacked_dictionary`].
#[derive(Debug, Clone)]
pub struct OffGridDictionary {
    f_base: CMatrix,
    f_deriv: CMatrix,
    nu: OffGridVector,
    /// `pilots[n][m]` is the pilot of user `m` on subcarrier `n`.
    pilots: Vec<Vec<CVector>>,
}

impl OffGridDictionary {
    pub fn new(n_bs: usize, reference: PhaseReference, pilots: Vec<Vec<CVector>>) -> Result<Self> {
        let f_base = dft_matrix(n_bs)?;
        let f_deriv = dft_derivative_matrix_with(n_bs, reference)?;
        Self::from_parts(f_base, f_deriv, OffGridVector::zeros(n_bs), pilots)
    }

    pub fn from_parts(
        f_base: CMatrix,
        f_deriv: CMatrix,
        nu: OffGridVector,
        pilots: Vec<Vec<CVector>>,
    ) -> Result<Self> {
        let n_bs = f_base.nrows();
        if f_base.shape() != (n_bs, n_bs) || f_deriv.shape() != (n_bs, n_bs) || nu.len() != n_bs {
            return Err(Error::mismatch(
                "OffGridDictionary",
                format!("{n_bs}x{n_bs}"),
                format!(
                    "{:?} / {:?} / {}",
                    f_base.shape(),
                    f_deriv.shape(),
                    nu.len()
                ),
            ));
        }
        let first = pilots
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one subcarrier required".into()))?;
        if first.is_empty() {
            return Err(Error::InvalidArgument("at least one user required".into()));
        }
        let users = first.len();
        let len = first[0].len();
        if len == 0 {
            return Err(Error::InvalidArgument("pilot must be non-empty".into()));
        }
        for (n, per_user) in pilots.iter().enumerate() {
            if per_user.len() != users {
                return Err(Error::mismatch(
                    "pilot users",
                    users,
                    format!("{} at n={n}", per_user.len()),
                ));
            }
            if let Some(bad) = per_user.iter().find(|p| p.len() != len) {
                return Err(Error::mismatch(
                    "pilot length",
                    len,
                    format!("{} at n={n}", bad.len()),
                ));
            }
        }
        Ok(Self {
            f_base,
            f_deriv,
            nu,
            pilots,
        })
    }

    pub fn n_bs(&self) -> usize {
        self.f_base.nrows()
    }

    pub fn m_users(&self) -> usize {
        self.pilots[0].len()
    }

    pub fn pilot_len(&self) -> usize {
        self.pilots[0][0].len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.pilots.len()
    }

    /// Length of the stacked channel vector, `M·N_BS`.
    pub fn n_coeffs(&self) -> usize {
        self.m_users() * self.n_bs()
    }

    /// Length of a measurement vector, `N_BS·L_m`.
    pub fn n_measurements(&self) -> usize {
        self.n_bs() * self.pilot_len()
    }

    pub fn f_base(&self) -> &CMatrix {
        &self.f_base
    }

    pub fn f_deriv(&self) -> &CMatrix {
        &self.f_deriv
    }

    pub fn nu(&self) -> &OffGridVector {
        &self.nu
    }

    pub fn set_nu(&mut self, nu: OffGridVector) -> Result<()> {
        if nu.len() != self.n_bs() {
            return Err(Error::mismatch("set_nu", self.n_bs(), nu.len()));
        }
        self.nu = nu;
        Ok(())
    }

    pub fn pilots(&self, n: usize) -> &[CVector] {
        &self.pilots[n]
    }

    pub fn omega(&self) -> CMatrix {
        steering_offgrid(&self.f_base, &self.f_deriv, &self.nu)
            .expect("dimensions validated at construction")
    }

    /// `FᴴΩ(ν)`: maps coefficients of the off-grid basis onto the DFT grid.
    pub fn grid_projection(&self, nu: &OffGridVector) -> CMatrix {
        let omega =
            steering_offgrid(&self.f_base, &self.f_deriv, nu).expect("validated dimensions");
        self.f_base.ad_mul(&omega)
    }

    /// Applies an `N_BS×N_BS` matrix to every user block of a stacked vector.
    pub fn map_blocks(&self, mat: &CMatrix, h: &CVector) -> CVector {
        let n_bs = self.n_bs();
        let mut out = CVector::zeros(h.len());
        for m in 0..h.len() / n_bs {
            out.rows_mut(m * n_bs, n_bs)
                .copy_from(&(mat * h.rows(m * n_bs, n_bs)));
        }
        out
    }

    /// `M×M` pilot Gram matrix `[x_mᴴ x_m']` on subcarrier `n`.
    pub fn pilot_gram(&self, n: usize) -> CMatrix {
        let p = &self.pilots[n];
        CMatrix::from_fn(p.len(), p.len(), |a, b| p[a].dotc(&p[b]))
    }
}

/// Stacked dictionary `[x_1 ⊗ Ω, …, x_M ⊗ Ω]` for subcarrier `n`.
pub fn stacked_dictionary(dict: &OffGridDictionary, n: usize) -> Result<CMatrix> {
    if n >= dict.n_subcarriers() {
        return Err(Error::InvalidArgument(format!(
            "subcarrier {n} out of range (N = {})",
            dict.n_subcarriers()
        )));
    }
    let omega = dict.omega();
    let n_bs = dict.n_bs();
    let mut out = CMatrix::zeros(dict.n_measurements(), dict.n_coeffs());
    for (m, pilot) in dict.pilots(n).iter().enumerate() {
        out.columns_mut(m * n_bs, n_bs)
            .copy_from(&user_dictionary(pilot, &omega)?);
    }
    Ok(out)
}

/// Eigenvalues of the stacked Gram matrix under orthogonal pilots.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    /// `λ = p ⊗ ς`, user-major ordering.
    pub eigenvalues: RVector,
    /// Eigenvalues `ς` of `ΩᴴΩ`, ascending.
    pub omega_eigenvalues: RVector,
}

/// Spectrum of `P ⊗ ΩᴴΩ` from the eigenvalues of the two factors.
///
/// Only valid when the pilots are mutually orthogonal so that the Gram matrix
/// has the Kronecker form; the estimator never relies on it.
pub fn gram_eigenstructure(power: &[f64], omega: &CMatrix) -> Result<GramSpectrum> {
    if power.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one user power required".into(),
        ));
    }
    if let Some(p) = power.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "user power must be positive, got {p}"
        )));
    }
    if !omega.is_square() {
        return Err(Error::mismatch(
            "gram_eigenstructure",
            "square omega",
            format!("{:?}", omega.shape()),
        ));
    }
    let gram = omega.adjoint() * omega;
    let mut sigma: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    sigma.sort_by(f64::total_cmp);
    let sigma = RVector::from_vec(sigma);
    let p = DMatrix::from_column_slice(power.len(), 1, power);
    Ok(GramSpectrum {
        eigenvalues: RVector::from_column_slice(p.kronecker(&sigma).as_slice()),
        omega_eigenvalues: sigma,
    })
}
