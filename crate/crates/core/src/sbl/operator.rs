use num_complex::Complex64;

use crate::{CMatrix, CVector};

/// Linear measurement operator of one subcarrier, `h ↦ Υ̃h`.
pub trait SubcarrierDictionary {
    fn n_measurements(&self) -> usize;
    fn n_coeffs(&self) -> usize;
    /// `Υ̃ᴴΥ̃`.
    fn gram(&self) -> CMatrix;
    /// `Υ̃h`.
    fn apply(&self, h: &CVector) -> CVector;
    /// `Υ̃ᴴy`.
    fn apply_adjoint(&self, y: &CVector) -> CVector;
    /// Size of the equal diagonal blocks when the Gram matrix is block
    /// diagonal (cross blocks below `1e-12` of the largest diagonal entry).
    fn gram_block_size(&self) -> Option<usize> {
        None
    }
}

/// Explicit dense dictionary.
impl SubcarrierDictionary for CMatrix {
    fn n_measurements(&self) -> usize {
        self.nrows()
    }

    fn n_coeffs(&self) -> usize {
        self.ncols()
    }

    fn gram(&self) -> CMatrix {
        self.adjoint() * self
    }

    fn apply(&self, h: &CVector) -> CVector {
        self * h
    }

    fn apply_adjoint(&self, y: &CVector) -> CVector {
        self.ad_mul(y)
    }
}

/// `[x_1 ⊗ Ω, …, x_M ⊗ Ω]` applied without forming the stacked matrix.
///
/// The Gram matrix is `[x_mᴴx_m'] ⊗ ΩᴴΩ`, exact for any pilots.
#[derive(Debug, Clone, Copy)]
pub struct KroneckerDictionary<'a> {
    omega: &'a CMatrix,
    omega_gram: &'a CMatrix,
    pilots: &'a [CVector],
}

impl<'a> KroneckerDictionary<'a> {
    pub fn new(omega: &'a CMatrix, omega_gram: &'a CMatrix, pilots: &'a [CVector]) -> Self {
        Self {
            omega,
            omega_gram,
            pilots,
        }
    }

    fn n_bs(&self) -> usize {
        self.omega.nrows()
    }

    fn pilot_len(&self) -> usize {
        self.pilots[0].len()
    }

    fn pilot_gram(&self) -> CMatrix {
        let m = self.pilots.len();
        CMatrix::from_fn(m, m, |a, b| self.pilots[a].dotc(&self.pilots[b]))
    }
}

impl SubcarrierDictionary for KroneckerDictionary<'_> {
    fn n_measurements(&self) -> usize {
        self.n_bs() * self.pilot_len()
    }

    fn n_coeffs(&self) -> usize {
        self.n_bs() * self.pilots.len()
    }

    fn gram(&self) -> CMatrix {
        self.pilot_gram().kronecker(self.omega_gram)
    }

    fn gram_block_size(&self) -> Option<usize> {
        let p = self.pilot_gram();
        let scale = p.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cross = (0..p.nrows())
            .flat_map(|a| (0..p.ncols()).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| p[(a, b)].norm())
            .fold(0.0, f64::max);
        (cross <= 1e-12 * scale).then(|| self.n_bs())
    }

    fn apply(&self, h: &CVector) -> CVector {
        let n_bs = self.n_bs();
        let beams: Vec<CVector> = (0..self.pilots.len())
            .map(|m| self.omega * h.rows(m * n_bs, n_bs))
            .collect();
        let mut y = CVector::zeros(self.n_measurements());
        for i in 0..self.pilot_len() {
            let mut block = y.rows_mut(i * n_bs, n_bs);
            for (x, g) in self.pilots.iter().zip(&beams) {
                block.axpy(x[i], g, Complex64::new(1.0, 0.0));
            }
        }
        y
    }

    fn apply_adjoint(&self, y: &CVector) -> CVector {
        let n_bs = self.n_bs();
        let mut out = CVector::zeros(self.n_coeffs());
        for (m, z) in despread(self.pilots, y, n_bs).iter().enumerate() {
            out.rows_mut(m * n_bs, n_bs)
                .copy_from(&self.omega.ad_mul(z));
        }
        out
    }
}

/// `z_m = Σ_i conj(x_m[i])·y_i` with `y_i` the `i`-th antenna block of `y`.
pub(crate) fn despread(pilots: &[CVector], y: &CVector, n_bs: usize) -> Vec<CVector> {
    pilots
        .iter()
        .map(|x| {
            let mut z = CVector::zeros(n_bs);
            for (i, xi) in x.iter().enumerate() {
                z.axpy(xi.conj(), &y.rows(i * n_bs, n_bs), Complex64::new(1.0, 0.0));
            }
            z
        })
        .collect()
}
