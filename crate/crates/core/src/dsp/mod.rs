//! DSP primitives shared by the simulator and the estimators.
//!
//! Lag sign convention, used by every module of the crate: a positive lag
//! means the second argument is delayed relative to the first.

pub(crate) mod fft;
mod gcc;
mod golden;
mod interp;
mod stft;
mod window;
mod xcorr;

pub use gcc::{gcc_magnitude, gcc_phat, lag_search, GccResult, LAG_TOLERANCE, PHAT_FLOOR};
pub use golden::golden_section_max;
pub use interp::{fractional_delay, SincInterpolator};
pub(crate) use interp::bessel_i0;
pub use stft::{frame_count, stft, Spectrogram};
pub(crate) use stft::check_frame_params;
pub use window::WindowKind;
pub use xcorr::{cross_correlate_offset, cross_correlation, CorrelationPeak};
