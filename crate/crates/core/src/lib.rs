//! Multi-task sparse Bayesian learning (MT-SBL) with dynamic filtering for
//! tracking time-varying sparse multi-user massive MIMO-OFDM uplink channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`dictionary`] builds the DFT basis, its angular derivative and the
//!   off-grid measurement dictionaries.
//! * [`scenario`] generates ground-truth beamspace channels, pilots and noisy
//!   uplink measurements.
//! * [`sbl`] is the EM core: posterior statistics, hyperparameter updates and
//!   off-grid refinement.
//! * [`tracker`] runs the EM core over time, warm-starting the Gamma
//!   hyperpriors from the previous estimate.
//! * [`metrics`] scores estimates against ground truth and aggregates
//!   Monte-Carlo statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod metrics;
pub mod sbl;
pub mod scenario;
pub mod tracker;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;
/// Dense real column vector.
pub type RVector = DVector<f64>;

pub(crate) const J: Complex64 = Complex64::new(0.0, 1.0);
