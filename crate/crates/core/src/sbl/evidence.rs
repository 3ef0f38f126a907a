use super::{posterior_stats, Hyperparameters, PosteriorStats, SubcarrierDictionary};
use crate::{CVector, Error, Result};

/// `Σ_n [log|C[n]| + y[n]ᴴC[n]⁻¹y[n]] + 2N·Σ_l (c_l log α_l − d_l α_l)`
/// with `C[n] = α₀⁻¹I + Υ̃[n] diag(α)⁻¹ Υ̃[n]ᴴ`.
///
/// Evaluated in the `M·N_BS`-dimensional coefficient space through the
/// determinant lemma and the Woodbury identity:
/// `log|C| = log|Σ⁻¹| − Σ_l log α_l − N_BS·L_m·log α₀` and
/// `yᴴC⁻¹y = α₀‖y‖² − α₀·Re((Υ̃ᴴy)ᴴμ)`.
pub fn marginal_log_likelihood<D: SubcarrierDictionary>(
    ys: &[CVector],
    dicts: &[D],
    hyper: &Hyperparameters,
) -> Result<f64> {
    if ys.len() != dicts.len() {
        return Err(Error::mismatch(
            "evidence subcarriers",
            dicts.len(),
            ys.len(),
        ));
    }
    hyper.validate()?;
    let entries = ys
        .iter()
        .zip(dicts)
        .enumerate()
        .map(|(n, (y, d))| {
            posterior_stats(y, d, hyper, n).map_err(|_| Error::NotPositiveDefinite(n))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_meas = dicts.first().map_or(0, |d| d.n_measurements());
    Ok(marginal_log_likelihood_from_posterior(
        ys,
        &PosteriorStats { entries },
        hyper,
        n_meas,
    ))
}

/// Same quantity reusing an already computed posterior.
pub fn marginal_log_likelihood_from_posterior(
    ys: &[CVector],
    posterior: &PosteriorStats,
    hyper: &Hyperparameters,
    n_measurements: usize,
) -> f64 {
    let log_alpha: f64 = hyper.alpha.iter().map(|a| a.ln()).sum();
    let data: f64 = posterior
        .entries
        .iter()
        .zip(ys)
        .map(|(e, y)| {
            let log_det =
                e.log_det_precision - log_alpha - n_measurements as f64 * hyper.alpha0.ln();
            let quad = hyper.alpha0 * (y.norm_squared() - e.projected.dotc(&e.mu).re);
            log_det + quad
        })
        .sum();
    let prior: f64 = hyper
        .alpha
        .iter()
        .zip(hyper.c.iter().zip(hyper.d.iter()))
        .map(|(a, (c, d))| c * a.ln() - d * a)
        .sum();
    data + 2.0 * ys.len() as f64 * prior
}
