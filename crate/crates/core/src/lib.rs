//! Frequency-domain synthesis of mixed H2 / H-infinity full-information
//! controllers for discrete-time linear plants with a scalar disturbance.
//!
//! The library computes the exact optimal controller as a transfer function on
//! a frequency grid via a fixed-point iteration on a scalar spectrum, and
//! produces fixed-order rational approximations with state-space realizations.
//! Independent reference computations for validating the main pipeline live in
//! [`oracle`].

pub mod error;
mod fft;
pub mod fixed_point;
pub mod lti;
pub mod oracle;
pub mod rational;
pub mod spectral;
pub mod synthesis;
pub mod util;

pub use error::{Error, Result};
pub use lti::{
    closed_loop, eval_plant, h2_norm, hinf_norm, hinf_norm_refined, sigma_max, weighted_h2_cost,
    FrequencyGrid, GridSpectrum, StateSpaceSystem, DEFAULT_GRID,
};
