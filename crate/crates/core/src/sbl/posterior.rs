use nalgebra::Cholesky;
use num_complex::Complex64;

use super::{Hyperparameters, SubcarrierDictionary};
use crate::{CMatrix, CVector, Error, Result};

/// Gaussian posterior of one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEntry {
    pub mu: CVector,
    pub sigma: CMatrix,
    /// `log|diag(α) + α₀Υ̃ᴴΥ̃|`.
    pub log_det_precision: f64,
    /// `Υ̃ᴴy`, kept for the evidence and noise terms.
    pub projected: CVector,
    /// `Υ̃ᴴΥ̃`.
    pub gram: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub entries: Vec<PosteriorEntry>,
}

impl PosteriorStats {
    pub fn n_subcarriers(&self) -> usize {
        self.entries.len()
    }
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `(LLᴴ)⁻¹ = L⁻ᴴL⁻¹` from the lower factor (upper triangle ignored), Hermitian
/// by construction. Works column by column on contiguous storage.
fn inverse_from_factor(l: &CMatrix) -> CMatrix {
    let k = l.nrows();
    let ls = l.as_slice();
    // columns of L⁻¹, each nonzero from its diagonal down
    let mut x = vec![Complex64::new(0.0, 0.0); k * k];
    for j in 0..k {
        let col = &mut x[j * k..(j + 1) * k];
        col[j] = Complex64::new(1.0, 0.0);
        for c in j..k {
            let lc = &ls[c * k..(c + 1) * k];
            let v = col[c] / lc[c];
            col[c] = v;
            for (xi, li) in col[c + 1..].iter_mut().zip(&lc[c + 1..]) {
                *xi -= li * v;
            }
        }
    }
    let mut out = CMatrix::zeros(k, k);
    for j in 0..k {
        let xj = &x[j * k..(j + 1) * k];
        for i in j..k {
            let xi = &x[i * k..(i + 1) * k];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in xi[i..].iter().zip(&xj[i..]) {
                acc += a.conj() * b;
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc.conj();
        }
    }
    out
}

/// `Σ = (diag(α) + α₀Υ̃ᴴΥ̃)⁻¹`, `μ = α₀ΣΥ̃ᴴy`, via one Cholesky factorization.
pub fn posterior_stats<D: SubcarrierDictionary>(
    y: &CVector,
    dict: &D,
    hyper: &Hyperparameters,
    subcarrier: usize,
) -> Result<PosteriorEntry> {
    let k = dict.n_coeffs();
    if hyper.alpha.len() != k {
        return Err(Error::mismatch(
            "posterior alpha length",
            k,
            hyper.alpha.len(),
        ));
    }
    if y.len() != dict.n_measurements() {
        return Err(Error::mismatch(
            "posterior measurement length",
            dict.n_measurements(),
            y.len(),
        ));
    }
    let gram = hermitian_part(&dict.gram());
    let projected = dict.apply_adjoint(y);
    let block = dict
        .gram_block_size()
        .filter(|b| *b > 0 && *b < k && k.is_multiple_of(*b))
        .unwrap_or(k);

    // orthogonal pilots decouple the users: factor each diagonal block alone
    let mut mu = CVector::zeros(k);
    let mut sigma = CMatrix::zeros(k, k);
    let mut log_det_precision = 0.0;
    for start in (0..k).step_by(block) {
        let mut precision =
            gram.view((start, start), (block, block)) * Complex64::new(hyper.alpha0, 0.0);
        for l in 0..block {
            precision[(l, l)] += hyper.alpha[start + l];
        }
        let condition = || {
            let diag = precision.diagonal().map(|z| z.re);
            diag.max() / diag.min()
        };
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| Error::Factorization {
            subcarrier,
            condition: condition(),
        })?;
        log_det_precision += 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|z| z.re.ln())
                .sum::<f64>();
        if !log_det_precision.is_finite() {
            return Err(Error::Factorization {
                subcarrier,
                condition: condition(),
            });
        }
        let rhs = projected.rows(start, block).into_owned();
        mu.rows_mut(start, block)
            .copy_from(&(chol.solve(&rhs) * Complex64::new(hyper.alpha0, 0.0)));
        sigma
            .view_mut((start, start), (block, block))
            .copy_from(&inverse_from_factor(chol.l_dirty()));
    }
    Ok(PosteriorEntry {
        mu,
        sigma,
        log_det_precision,
        projected,
        gram,
    })
}
