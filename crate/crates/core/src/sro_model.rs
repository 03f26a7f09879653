//! Time-varying sampling rate offsets as a discrete Ornstein-Uhlenbeck process.
//!
//! The process is integrated with the Euler-Maruyama recursion
//!
//! ```text
//! ε[ℓ] = ε[ℓ-1] + θ·(μ∞ - ε[ℓ-1]) + x[ℓ],   x[ℓ] ~ N(0, σ²)
//! ```
//!
//! starting from `ε[0] = μ∞ + Δ_start`. All values are in ppm.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signals::rng;

/// Steady-state standard deviation the default smoothing factor is tuned for (ppm).
pub const STEADY_STATE_STD_PPM: f64 = 1.25;

/// Default innovation standard deviation (ppm).
pub const DEFAULT_SIGMA_OU_PPM: f64 = 0.05;

/// Largest admissible asymptotic SRO magnitude (ppm).
pub const MAX_MU_INF_PPM: f64 = 100.0;

/// Largest admissible start offset from the asymptotic mean (ppm).
pub const MAX_DELTA_START_PPM: f64 = 10.0;

/// Smoothing factor giving a steady-state std of [`STEADY_STATE_STD_PPM`] for innovation std `sigma_ou`.
pub fn default_theta(sigma_ou: f64) -> f64 {
    sigma_ou * sigma_ou / (2.0 * STEADY_STATE_STD_PPM * STEADY_STATE_STD_PPM)
}

/// Stationary variance `σ² / (1 - (1-θ)²)` of the recursion.
pub fn stationary_variance(theta: f64, sigma_ou: f64) -> f64 {
    sigma_ou * sigma_ou / (1.0 - (1.0 - theta).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub theta: f64,
    pub mu_inf: f64,
    pub sigma_ou: f64,
    pub delta_start: f64,
    /// Seconds per process step.
    #[serde(default = "default_step_duration")]
    pub step_duration: f64,
}

/// One resampler frame shift (512 samples) at 16 kHz.
pub fn default_step_duration() -> f64 {
    512.0 / crate::DEFAULT_SAMPLE_RATE
}

impl OuParams {
    /// Default innovation std and smoothing factor around the given mean and start offset.
    pub fn new(mu_inf: f64, delta_start: f64, step_duration: f64) -> Self {
        Self {
            theta: default_theta(DEFAULT_SIGMA_OU_PPM),
            mu_inf,
            sigma_ou: DEFAULT_SIGMA_OU_PPM,
            delta_start,
            step_duration,
        }
    }

    /// A noise-free, constant trajectory at `mu_inf`.
    pub fn constant(mu_inf: f64, step_duration: f64) -> Self {
        Self {
            sigma_ou: 0.0,
            delta_start: 0.0,
            ..Self::new(mu_inf, 0.0, step_duration)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta {} must lie in (0, 1)", self.theta));
        }
        if !(self.sigma_ou >= 0.0) {
            return invalid(format!("sigma_ou {} must be nonnegative", self.sigma_ou));
        }
        if !(self.mu_inf.abs() <= MAX_MU_INF_PPM) {
            return invalid(format!(
                "mu_inf {} ppm exceeds ±{MAX_MU_INF_PPM} ppm",
                self.mu_inf
            ));
        }
        if !(self.delta_start.abs() <= MAX_DELTA_START_PPM) {
            return invalid(format!(
                "delta_start {} ppm exceeds ±{MAX_DELTA_START_PPM} ppm",
                self.delta_start
            ));
        }
        if !(self.step_duration > 0.0) {
            return invalid("step duration must be positive");
        }
        Ok(())
    }
}

/// SRO values in ppm, one per process step.
#[derive(Debug, Clone, PartialEq)]
pub struct SroTrajectory {
    pub values: Vec<f64>,
    pub step_duration: f64,
    pub params: Option<OuParams>,
    pub seed: Option<u64>,
}

impl SroTrajectory {
    /// Wrap explicit per-step values (e.g. estimates or constructed test curves).
    pub fn from_values(values: Vec<f64>, step_duration: f64) -> Self {
        Self {
            values,
            step_duration,
            params: None,
            seed: None,
        }
    }

    pub fn constant(value: f64, num_steps: usize, step_duration: f64) -> Self {
        Self::from_values(vec![value; num_steps], step_duration)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Step-wise difference `self - other` over the common length.
    pub fn difference(&self, other: &SroTrajectory) -> SroTrajectory {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        SroTrajectory::from_values(values, self.step_duration)
    }

    pub fn negated(&self) -> SroTrajectory {
        SroTrajectory::from_values(self.values.iter().map(|v| -v).collect(), self.step_duration)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step_index,epsilon_ppm")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

pub fn simulate_trajectory(params: &OuParams, num_steps: usize, seed: u64) -> Result<SroTrajectory> {
    params.validate()?;
    if num_steps == 0 {
        return invalid("trajectory needs at least one step");
    }
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, params.sigma_ou)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut values = Vec::with_capacity(num_steps);
    let mut eps = params.mu_inf + params.delta_start;
    values.push(eps);
    for _ in 1..num_steps {
        let innovation = if params.sigma_ou > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        eps = eps + params.theta * (params.mu_inf - eps) + innovation;
        values.push(eps);
    }
    Ok(SroTrajectory {
        values,
        step_duration: params.step_duration,
        params: Some(*params),
        seed: Some(seed),
    })
}

/// Sample standard deviation of the trajectory after discarding `burn_in` steps.
pub fn trajectory_std(traj: &SroTrajectory, burn_in: usize) -> Result<f64> {
    if burn_in >= traj.len() {
        return invalid(format!(
            "burn-in {burn_in} covers the whole trajectory of {} steps",
            traj.len()
        ));
    }
    let tail = &traj.values[burn_in..];
    if tail.len() < 2 {
        return invalid("need at least two values after burn-in");
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}
