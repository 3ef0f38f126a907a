use super::{
    Hyperparameters, IterationDictionary, PosteriorStats, SubcarrierDictionary, ALPHA_MAX,
    ALPHA_MIN,
};
use crate::dictionary::OffGridDictionary;
use crate::{CVector, Error, RVector, Result};

/// `α_l = (c_l − 1 + N) / (d_l + Σ_n Σ[n]_ll + Σ_n |μ_l[n]|²)`, clamped to
/// `[ALPHA_MIN, ALPHA_MAX]`.
pub fn update_alpha(hyper: &Hyperparameters, posterior: &PosteriorStats) -> Result<RVector> {
    let n = posterior.n_subcarriers();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "posterior has no subcarriers".into(),
        ));
    }
    let k = hyper.n_coeffs();
    let mut alpha = RVector::zeros(k);
    for l in 0..k {
        let spread: f64 = posterior.entries.iter().map(|e| e.sigma[(l, l)].re).sum();
        let energy: f64 = posterior.entries.iter().map(|e| e.mu[l].norm_sqr()).sum();
        let denom = hyper.d[l] + spread + energy;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha update denominator for coefficient {l} is {denom}"
            )));
        }
        let value = (hyper.c[l] - 1.0 + n as f64) / denom;
        alpha[l] = if value.is_nan() {
            ALPHA_MAX
        } else {
            value.clamp(ALPHA_MIN, ALPHA_MAX)
        };
    }
    Ok(alpha)
}

/// `T^(a)[n] = ‖y[n] − Υ̃[n]μ[n]‖²` and `T^(b)[n] = tr(Υ̃ᴴΥ̃Σ[n])` summed over `n`.
///
/// With `cached_gram` the Gram stored in the posterior is reused, which is
/// only valid when the posterior was computed at the dictionary's `ν`.
pub(crate) fn residual_terms(
    posterior: &PosteriorStats,
    ys: &[CVector],
    dict: &OffGridDictionary,
    cached_gram: bool,
) -> (f64, f64) {
    let cache = IterationDictionary::new(dict);
    let mut fit = 0.0;
    let mut spread = 0.0;
    for (n, (e, y)) in posterior.entries.iter().zip(ys).enumerate() {
        let op = cache.at(dict, n);
        fit += (y - op.apply(&e.mu)).norm_squared();
        let fresh;
        let gram = if cached_gram {
            &e.gram
        } else {
            fresh = op.gram();
            &fresh
        };
        // tr(GΣ) = Σ_ij G_ij·conj(Σ_ij) for Hermitian Σ
        spread += gram
            .iter()
            .zip(e.sigma.iter())
            .map(|(g, s)| g.re * s.re + g.im * s.im)
            .sum::<f64>();
    }
    (fit, spread)
}

/// `α₀ = (N_BS·L_m·N + a − 1) / (Σ_n T^(a)[n] + Σ_n T^(b)[n] + b)`.
///
/// The posterior must have been computed with the dictionary's current `ν`.
pub fn update_alpha0(
    hyper: &Hyperparameters,
    posterior: &PosteriorStats,
    ys: &[CVector],
    dict: &OffGridDictionary,
) -> Result<f64> {
    super::check_measurements(ys, dict)?;
    if posterior.n_subcarriers() != ys.len() {
        return Err(Error::mismatch(
            "posterior subcarriers",
            ys.len(),
            posterior.n_subcarriers(),
        ));
    }
    let numerator = (dict.n_measurements() * ys.len()) as f64 + hyper.a - 1.0;
    if !(numerator > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise precision numerator must be positive, got {numerator}"
        )));
    }
    let (fit, spread) = residual_terms(posterior, ys, dict, true);
    let denom = fit + spread + hyper.b;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateNoise(denom));
    }
    Ok(numerator / denom)
}
