//! Simulation and online estimation of sampling rate offsets (SRO) and
//! sampling time offsets (STO) between two asynchronously sampled acoustic
//! sensor nodes.
//!
//! The crate is split along the processing chain:
//!
//! - [`sro_model`] generates time-varying SRO trajectories (discrete
//!   Ornstein-Uhlenbeck process).
//! - [`async_model`] applies STO and SRO to a synchronous signal, either in
//!   the STFT domain or with a windowed-sinc reference resampler, and
//!   compensates estimated offsets.
//! - [`scene`] renders two-node recordings of a meeting with one active
//!   source at a time, together with ground truth.
//! - [`sad`] is the energy-based source activity detector gating both
//!   estimators.
//! - [`dwacd`] is the online coherence-drift SRO estimator.
//! - [`sto`] separates the STO from the time difference of flight with
//!   least squares inside RANSAC.
//! - [`eval`] runs scenario batches and computes the error metrics.
//!
//! Sign convention: a positive lag or delay always means the second stream is
//! late relative to the first.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod async_model;
pub mod dsp;
pub mod dwacd;
pub mod error;
pub mod eval;
pub mod io;
pub mod sad;
pub mod scene;
pub mod signals;
pub mod sro_model;
pub mod sto;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

/// Default nominal sampling rate in Hz.
pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Parts-per-million to ratio.
pub const PPM: f64 = 1e-6;
