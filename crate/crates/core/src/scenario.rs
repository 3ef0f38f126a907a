//! Ground-truth channel trajectories, pilots and noisy uplink measurements.
//!
//! Every user sees a single scattering cluster: `paths_per_user` paths
//! placed uniformly inside the angular spread around a random centre angle.
//! The antenna-domain response on subcarrier `n` is
//! `g_m[n] = √N_BS · e^{-j2πnτ_m/N} · Σ_p β_p a(π sin φ_p)` and the
//! beamspace truth is its projection `h_m[n] = Fᴴ g_m[n]` onto the DFT basis.
//! Because `F` is unitary the projection is lossless, so off-grid estimates
//! can be mapped back to the same beamspace for scoring.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{self, stacked_dictionary, OffGridDictionary, PhaseReference};
use crate::{CVector, Error, Result};

/// First-order autoregressive coefficient of the path gains.
pub const GAIN_AR_COEFF: f64 = 0.999;
/// Beams above this fraction of the per-user peak energy form the support.
pub const SUPPORT_REL_ENERGY: f64 = 0.01;
/// Upper bound of the per-user delay, as a fraction of the subcarrier count.
pub const MAX_DELAY_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs: usize,
    pub m_users: usize,
    /// Pilot length `L`, at least `m_users`. With `L == m_users` the noise
    /// precision is poorly identified.
    pub pilot_len: usize,
    pub n_subcarriers: usize,
    pub snr_db: f64,
    pub aoa_range_deg: [f64; 2],
    pub angular_spread_deg: f64,
    pub paths_per_user: usize,
    pub drift_deg_per_step: f64,
    /// Tracking horizon `T`; steps `t = 0..=T` are generated.
    pub t_steps: usize,
    /// Step at which every user moves to a new environment. When it lies
    /// beyond `T` the horizon is extended to include it.
    pub env_change_at: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs: 64,
            m_users: 2,
            pilot_len: 4,
            n_subcarriers: 40,
            snr_db: 10.0,
            aoa_range_deg: [-80.0, 80.0],
            angular_spread_deg: 2.0,
            paths_per_user: 3,
            drift_deg_per_step: 0.5,
            t_steps: 50,
            env_change_at: None,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidArgument(format!("{field}: {msg}")));
        if self.n_bs == 0 {
            return bad("n_bs", "must be at least 1".into());
        }
        if self.m_users == 0 {
            return bad("m_users", "must be at least 1".into());
        }
        if self.pilot_len < self.m_users {
            return bad(
                "pilot_len",
                format!(
                    "must be >= m_users ({}) for orthogonal pilots, got {}",
                    self.m_users, self.pilot_len
                ),
            );
        }
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers", "must be at least 1".into());
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db", format!("must be finite, got {}", self.snr_db));
        }
        let [lo, hi] = self.aoa_range_deg;
        if !(lo.is_finite() && hi.is_finite()) || lo < -90.0 || hi > 90.0 {
            return bad(
                "aoa_range_deg",
                format!("must lie within [-90, 90], got [{lo}, {hi}]"),
            );
        }
        if lo >= hi {
            return bad("aoa_range_deg", format!("empty interval [{lo}, {hi}]"));
        }
        if !(self.angular_spread_deg >= 0.0) {
            return bad(
                "angular_spread_deg",
                format!("must be >= 0, got {}", self.angular_spread_deg),
            );
        }
        if self.paths_per_user == 0 {
            return bad("paths_per_user", "must be at least 1".into());
        }
        if !(self.drift_deg_per_step >= 0.0) || !self.drift_deg_per_step.is_finite() {
            return bad(
                "drift_deg_per_step",
                format!("must be >= 0, got {}", self.drift_deg_per_step),
            );
        }
        if self.t_steps == 0 {
            return bad("t_steps", "must be at least 1".into());
        }
        if self.env_change_at == Some(0) {
            return bad("env_change_at", "must be at least 1".into());
        }
        Ok(())
    }

    /// Index of the last generated step.
    pub fn last_step(&self) -> usize {
        self.t_steps.max(self.env_change_at.unwrap_or(0))
    }
}

/// Spatial frequency of a half-wavelength ULA for physical angle `phi`.
pub fn spatial_frequency(phi: f64) -> f64 {
    PI * phi.sin()
}

/// Physical angle whose spatial frequency equals `theta` modulo `2π`.
pub fn angle_for_spatial_frequency(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    (wrapped / PI).asin()
}

/// Physical multipath description of one user at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPaths {
    /// Angle of arrival of every path (radians).
    pub angles: Vec<f64>,
    pub gains: Vec<Complex64>,
    /// Cluster delay in samples; sets the phase ramp across subcarriers.
    pub delay: f64,
    /// Cluster centre angle (radians).
    pub center: f64,
}

impl UserPaths {
    /// Antenna-domain response on subcarrier `n`.
    pub fn response(&self, n_bs: usize, n: usize, n_subcarriers: usize) -> CVector {
        let scale = (n_bs as f64).sqrt();
        let ramp = Complex64::from_polar(
            1.0,
            -2.0 * PI * n as f64 * self.delay / n_subcarriers as f64,
        );
        let mut g = CVector::zeros(n_bs);
        for (&phi, &beta) in self.angles.iter().zip(&self.gains) {
            g.axpy(
                beta * ramp * scale,
                &dictionary::steering_vector(n_bs, spatial_frequency(phi)),
                Complex64::from(1.0),
            );
        }
        g
    }
}

/// Ground truth at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTruth {
    pub users: Vec<UserPaths>,
    /// Beamspace channel per subcarrier, user blocks concatenated in order.
    pub h: Vec<CVector>,
    /// Significant beams (indices into the stacked vector), ascending.
    pub support: Vec<usize>,
}

impl StepTruth {
    pub fn from_users(users: Vec<UserPaths>, n_bs: usize, n_subcarriers: usize) -> Result<Self> {
        if users.is_empty() || n_bs == 0 || n_subcarriers == 0 {
            return Err(Error::InvalidArgument(
                "need users, antennas and subcarriers".into(),
            ));
        }
        let f = dictionary::dft_matrix(n_bs)?;
        let fh = f.adjoint();
        let m_users = users.len();
        let h: Vec<CVector> = (0..n_subcarriers)
            .map(|n| {
                let mut v = CVector::zeros(m_users * n_bs);
                for (m, u) in users.iter().enumerate() {
                    v.rows_mut(m * n_bs, n_bs)
                        .copy_from(&(&fh * u.response(n_bs, n, n_subcarriers)));
                }
                v
            })
            .collect();
        let support = support_of(&h, m_users, SUPPORT_REL_ENERGY);
        Ok(Self { users, h, support })
    }
}

/// Beams whose energy, averaged over subcarriers, reaches `rel` times the
/// peak of their user block.
pub fn support_of(h: &[CVector], m_users: usize, rel: f64) -> Vec<usize> {
    let len = h.first().map_or(0, |v| v.len());
    let block = len / m_users.max(1);
    let energy: Vec<f64> = (0..len)
        .map(|l| h.iter().map(|v| v[l].norm_sqr()).sum::<f64>() / h.len() as f64)
        .collect();
    let mut support = Vec::new();
    for m in 0..m_users {
        let slice = &energy[m * block..(m + 1) * block];
        let peak = slice.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        support.extend(
            slice
                .iter()
                .enumerate()
                .filter(|(_, &e)| e >= rel * peak)
                .map(|(i, _)| m * block + i),
        );
    }
    support
}

/// Channel trajectory over all generated steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTruth {
    pub steps: Vec<StepTruth>,
}

/// `M` mutually orthogonal pilots of length `L` with `‖x_m‖² = P_m`, built
/// from the rows of an `L`-point DFT.
pub fn generate_pilots(m_users: usize, pilot_len: usize, power: &[f64]) -> Result<Vec<CVector>> {
    if m_users == 0 {
        return Err(Error::InvalidArgument("m_users must be at least 1".into()));
    }
    if pilot_len < m_users {
        return Err(Error::InvalidArgument(format!(
            "pilot_len ({pilot_len}) must be >= m_users ({m_users}) for orthogonal pilots"
        )));
    }
    if power.len() != m_users {
        return Err(Error::mismatch(
            "generate_pilots power",
            m_users,
            power.len(),
        ));
    }
    if let Some(p) = power.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pilot power must be positive, got {p}"
        )));
    }
    Ok(power
        .iter()
        .enumerate()
        .map(|(m, &p)| {
            let amp = (p / pilot_len as f64).sqrt();
            CVector::from_fn(pilot_len, |i, _| {
                let phase = -2.0 * PI * ((m * i) % pilot_len) as f64 / pilot_len as f64;
                Complex64::from_polar(amp, phase)
            })
        })
        .collect())
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn draw_user<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    n_subcarriers: usize,
    rng: &mut R,
) -> UserPaths {
    let [lo, hi] = cfg.aoa_range_deg;
    let center = rng.random_range(lo..hi).to_radians();
    let half = cfg.angular_spread_deg.to_radians() / 2.0;
    let paths = cfg.paths_per_user;
    let angles = (0..paths)
        .map(|_| {
            if half > 0.0 {
                center + rng.random_range(-half..half)
            } else {
                center
            }
        })
        .collect();
    let gains = (0..paths)
        .map(|_| complex_gaussian(rng, 1.0 / paths as f64))
        .collect();
    let delay = rng.random_range(0.0..MAX_DELAY_FRACTION) * n_subcarriers as f64;
    UserPaths {
        angles,
        gains,
        delay,
        center,
    }
}

fn evolve_user<R: Rng + ?Sized>(cfg: &ScenarioConfig, prev: &UserPaths, rng: &mut R) -> UserPaths {
    let drift = cfg.drift_deg_per_step.to_radians();
    let [lo, hi] = cfg.aoa_range_deg;
    let (lo, hi) = (lo.to_radians(), hi.to_radians());
    let step = if drift > 0.0 {
        rng.random_range(-drift..=drift)
    } else {
        0.0
    };
    // keep the cluster centre inside the range; the step never exceeds the bound
    let center = (prev.center + step).clamp(lo, hi);
    let shift = center - prev.center;
    let paths = prev.gains.len() as f64;
    let innovation = (1.0 - GAIN_AR_COEFF * GAIN_AR_COEFF) / paths;
    UserPaths {
        angles: prev.angles.iter().map(|a| a + shift).collect(),
        gains: prev
            .gains
            .iter()
            .map(|&g| g * GAIN_AR_COEFF + complex_gaussian(rng, innovation))
            .collect(),
        delay: prev.delay,
        center,
    }
}

/// Draws the channel trajectory for `t = 0..=cfg.last_step()`.
pub fn generate_channel<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelTruth> {
    cfg.validate()?;
    let mut users: Vec<UserPaths> = (0..cfg.m_users)
        .map(|_| draw_user(cfg, cfg.n_subcarriers, rng))
        .collect();
    let mut steps = Vec::with_capacity(cfg.last_step() + 1);
    for t in 0..=cfg.last_step() {
        if t > 0 {
            users = if cfg.env_change_at == Some(t) {
                (0..cfg.m_users)
                    .map(|_| draw_user(cfg, cfg.n_subcarriers, rng))
                    .collect()
            } else {
                users.iter().map(|u| evolve_user(cfg, u, rng)).collect()
            };
        }
        steps.push(StepTruth::from_users(
            users.clone(),
            cfg.n_bs,
            cfg.n_subcarriers,
        )?);
    }
    Ok(ChannelTruth { steps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Noiseless,
    /// Mean received signal energy per complex sample over noise variance.
    SnrDb(f64),
    /// Explicit per-sample noise variance `1/α₀`.
    Variance(f64),
}

/// Received signals of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    pub y: Vec<CVector>,
    /// Noise variance actually applied.
    pub noise_var: f64,
    /// True noise precision `1/noise_var` (infinite when noiseless).
    pub alpha0: f64,
}

/// Forms `y[n] = Υ̃[n]·h[n] + noise` with the dictionary's current offsets.
pub fn synthesize_measurement<R: Rng + ?Sized>(
    h: &[CVector],
    dict: &OffGridDictionary,
    noise: NoiseLevel,
    rng: &mut R,
) -> Result<MeasurementBatch> {
    if h.len() != dict.n_subcarriers() {
        return Err(Error::mismatch(
            "synthesize_measurement subcarriers",
            dict.n_subcarriers(),
            h.len(),
        ));
    }
    let mut y = Vec::with_capacity(h.len());
    for (n, hn) in h.iter().enumerate() {
        if hn.len() != dict.n_coeffs() {
            return Err(Error::mismatch(
                "synthesize_measurement channel length",
                dict.n_coeffs(),
                hn.len(),
            ));
        }
        y.push(stacked_dictionary(dict, n)? * hn);
    }
    let samples = (h.len() * dict.n_measurements()) as f64;
    let noise_var = match noise {
        NoiseLevel::Noiseless => 0.0,
        NoiseLevel::SnrDb(snr) => {
            if !snr.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "snr must be finite, got {snr}"
                )));
            }
            let energy: f64 = y.iter().map(|v| v.norm_squared()).sum::<f64>() / samples;
            energy / 10f64.powf(snr / 10.0)
        }
        NoiseLevel::Variance(v) => {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "noise variance must be >= 0, got {v}"
                )));
            }
            v
        }
    };
    if noise_var > 0.0 {
        for v in y.iter_mut() {
            v.apply(|z| *z += complex_gaussian(rng, noise_var));
        }
    }
    Ok(MeasurementBatch {
        y,
        noise_var,
        alpha0: 1.0 / noise_var,
    })
}

/// One Monte-Carlo realization: pilots, channel trajectory and measurements.
#[derive(Debug, Clone)]
pub struct Realization {
    pub config: ScenarioConfig,
    pub dictionary: OffGridDictionary,
    pub truth: ChannelTruth,
    pub measurements: Vec<MeasurementBatch>,
}

/// Generates a full realization from `cfg.rng_seed`. Unit pilot power per
/// user; measurements use the on-grid dictionary.
pub fn simulate(cfg: &ScenarioConfig, reference: PhaseReference) -> Result<Realization> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let pilots = generate_pilots(cfg.m_users, cfg.pilot_len, &vec![1.0; cfg.m_users])?;
    let dictionary = OffGridDictionary::new(cfg.n_bs, reference, vec![pilots; cfg.n_subcarriers])?;
    let truth = generate_channel(cfg, &mut rng)?;
    let measurements = truth
        .steps
        .iter()
        .map(|s| synthesize_measurement(&s.h, &dictionary, NoiseLevel::SnrDb(cfg.snr_db), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Realization {
        config: cfg.clone(),
        dictionary,
        truth,
        measurements,
    })
}
