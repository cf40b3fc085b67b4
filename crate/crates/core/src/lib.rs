//! Predictions and audits for Eberhard/Clauser-Horne and CHSH Bell tests.
//!
//! * [`quantum_model`]: exact quantum probabilities for the two partially
//!   entangled state families, efficiency and background folding, angle
//!   optimization and efficiency thresholds.
//! * [`hvdz_model`]: the HV+DZ hidden-variables model with a measurement
//!   dependence parameter `q`, analytically and by Monte Carlo.
//! * [`experiment_analysis`]: experiment records, derived audit quantities
//!   and loophole verdicts.
//! * [`trial_simulator`]: a pulsed-source time-tag generator and the
//!   coincidence analysis that turns streams back into counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::large_enum_variant)]

pub mod error;
pub mod experiment_analysis;
pub mod hvdz_model;
pub mod kv;
pub mod quantum_model;
pub mod report;
pub mod trial_simulator;

pub use error::{Error, Result};
