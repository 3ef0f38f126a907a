//! Run configuration.
//!
//! The file is TOML. Every key is optional; omitted keys take the defaults
//! shown below. A complete file looks like
//!
//! ```toml
//! beta_th = 1e-3
//! i_iter = 1000
//! realizations = 100
//! mode = "both"            # "df", "ablation" or "both"
//! large_threshold = 1e3
//! update_offgrid = true
//! phase_reference = "center"   # or "first_element"
//! output_dir = "results"
//! emit_plots = false
//! workers = 1
//!
//! [scenario]
//! n_bs = 64
//! m_users = 2
//! pilot_len = 4           # > m_users keeps the noise level identifiable
//! n_subcarriers = 40
//! snr_db = 10.0
//! aoa_range_deg = [-80.0, 80.0]
//! angular_spread_deg = 2.0
//! paths_per_user = 3
//! drift_deg_per_step = 0.5
//! t_steps = 50
//! # env_change_at = 51
//! rng_seed = 0             # base seed; realization i uses rng_seed + i
//!
//! # optional blurred prediction
//! # [blur]
//! # width = 1.0
//! # q_rel = 1e-4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use mtsbl::dictionary::PhaseReference;
use mtsbl::scenario::ScenarioConfig;
use mtsbl::tracker::{BlurConfig, FilterMode, TrackerConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Df,
    Ablation,
    Both,
}

impl RunMode {
    pub fn filters(self) -> Vec<FilterMode> {
        match self {
            RunMode::Df => vec![FilterMode::DynamicFiltering],
            RunMode::Ablation => vec![FilterMode::Ablation],
            RunMode::Both => vec![FilterMode::DynamicFiltering, FilterMode::Ablation],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub beta_th: f64,
    pub i_iter: usize,
    pub realizations: usize,
    pub mode: RunMode,
    pub large_threshold: f64,
    pub update_offgrid: bool,
    pub phase_reference: PhaseReference,
    pub blur: Option<BlurConfig>,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            beta_th: 1e-3,
            i_iter: 1000,
            realizations: 100,
            mode: RunMode::Both,
            large_threshold: 1e3,
            update_offgrid: true,
            phase_reference: PhaseReference::Center,
            blur: None,
            output_dir: PathBuf::from("results"),
            emit_plots: false,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beta_th > 0.0) {
            return Err(invalid(
                "beta_th",
                format!("must be > 0, got {}", self.beta_th),
            ));
        }
        if self.i_iter == 0 {
            return Err(invalid("i_iter", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be at least 1"));
        }
        if !(self.large_threshold > 0.0) {
            return Err(invalid(
                "large_threshold",
                format!("must be > 0, got {}", self.large_threshold),
            ));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if let Some(b) = &self.blur {
            if !(b.width > 0.0) || !b.width.is_finite() {
                return Err(invalid(
                    "blur.width",
                    format!("must be > 0, got {}", b.width),
                ));
            }
            if !(b.q_rel >= 0.0) || !b.q_rel.is_finite() {
                return Err(invalid(
                    "blur.q_rel",
                    format!("must be >= 0, got {}", b.q_rel),
                ));
            }
        }
        self.scenario.validate().map_err(|e| match e {
            mtsbl::Error::InvalidArgument(text) => {
                let (field, message) = text.split_once(": ").unwrap_or(("", &text));
                invalid(&format!("scenario.{field}"), message)
            }
            other => invalid("scenario", other.to_string()),
        })
    }

    /// Scenario of realization `index` (seed `rng_seed + index`).
    pub fn scenario_for(&self, index: usize) -> ScenarioConfig {
        ScenarioConfig {
            rng_seed: self.seed_for(index),
            ..self.scenario.clone()
        }
    }

    pub fn seed_for(&self, index: usize) -> u64 {
        self.scenario.rng_seed.wrapping_add(index as u64)
    }

    pub fn tracker(&self, mode: FilterMode, seed: u64) -> TrackerConfig {
        TrackerConfig {
            beta_th: self.beta_th,
            i_iter: self.i_iter,
            large_threshold: self.large_threshold,
            mode,
            blur: self.blur,
            update_offgrid: self.update_offgrid,
            seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable in TOML")
    }
}

/// Parses TOML text, reporting schema errors with the offending key path.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunConfig, ConfigError> {
    let schema = |field: String, message: String| ConfigError::Schema {
        path: origin.to_path_buf(),
        field,
        message,
    };
    let de =
        toml::Deserializer::parse(text).map_err(|e| schema("<document>".into(), e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        schema(field, e.into_inner().to_string().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}
