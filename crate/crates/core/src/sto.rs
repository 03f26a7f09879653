//! Sampling time offset estimation on SRO-compensated recordings.
//!
//! After SRO compensation the shift between the streams is
//! `τ_12[ℓ] = τ_geo^(m) - τ_STO` during activity of position `m`. Each active
//! segment yields a GCC-PhaT shift `τ̂[ℓ]` and distance estimates
//! `d̂_1, d̂_2`, so `(d̂_2 - d̂_1)/c·f_s - τ̂[ℓ]` is one noisy observation of
//! `τ_STO`. Least squares averages them; RANSAC removes outliers first.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::async_model::{compensate_stft, AsyncSpec, RESAMPLER_FRAME_SHIFT, RESAMPLER_FRAME_SIZE};
use crate::dsp::gcc_phat;
use crate::dwacd::SroTrace;
use crate::error::{invalid, Error, Result};
use crate::sad::{segment_is_active, ActivityMask};
use crate::scene::{flight_samples, GroundTruth};
use crate::signals::{rng, sub_seed};
use crate::sro_model::SroTrajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftObservation {
    pub segment_index: usize,
    /// GCC-PhaT shift of the second stream, samples.
    pub shift: f64,
    pub d1: f64,
    pub d2: f64,
    pub active: bool,
}

impl ShiftObservation {
    /// The observation's own STO value `(d2 - d1)/c·f_s - τ̂`.
    pub fn sto_sample(&self, sample_rate: f64) -> f64 {
        flight_samples(self.d2 - self.d1, sample_rate) - self.shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoEstimate {
    /// `τ̂_STO` in samples.
    pub sto: f64,
    pub inlier_count: usize,
    pub observation_count: usize,
    /// RMS deviation of the inlier observations from `sto`.
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoParams {
    pub segment_len: usize,
    pub segment_shift: usize,
    /// Lag range of the per-segment GCC-PhaT around the coarse offset.
    pub max_lag: usize,
    pub min_active_ratio: f64,
    pub ransac_iterations: usize,
    pub inlier_tol: f64,
    pub min_inlier_frac: f64,
    pub seed: u64,
    pub sample_rate: f64,
}

impl Default for StoParams {
    fn default() -> Self {
        Self {
            segment_len: 1 << 14,
            segment_shift: 1 << 11,
            max_lag: 1024,
            min_active_ratio: crate::sad::DEFAULT_MIN_RATIO,
            ransac_iterations: 100,
            inlier_tol: 4.0,
            min_inlier_frac: 0.5,
            seed: 0,
            sample_rate: crate::DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Source-node distance estimates for a segment of the first stream.
pub trait DistanceProvider {
    fn distances(&self, segment_start: usize, segment_len: usize) -> Result<[f64; 2]>;
}

/// Ground-truth distances of the position active in the segment plus
/// Gaussian noise. Segments without activity use the nearest active frame.
/// The noise of a segment depends only on the seed and the segment start, so
/// answers do not depend on the query order.
pub struct OracleDistanceProvider<'a> {
    truth: &'a GroundTruth,
    noise_std_m: f64,
    seed: u64,
}

pub fn oracle_distance_provider(truth: &GroundTruth, noise_std_m: f64, seed: u64) -> OracleDistanceProvider<'_> {
    OracleDistanceProvider {
        truth,
        noise_std_m,
        seed,
    }
}

impl OracleDistanceProvider<'_> {
    fn position_near(&self, sample: usize) -> Option<usize> {
        let idx = &self.truth.position_index;
        let f = sample / self.truth.activity_mask.frame_shift;
        (0..idx.len()).find_map(|r| {
            let after = idx.get(f + r).copied().flatten();
            let before = f.checked_sub(r).and_then(|i| idx.get(i).copied().flatten());
            before.or(after)
        })
    }
}

impl DistanceProvider for OracleDistanceProvider<'_> {
    fn distances(&self, segment_start: usize, segment_len: usize) -> Result<[f64; 2]> {
        let len = self.truth.activity_mask.signal_len;
        if segment_len == 0 || segment_start + segment_len > len {
            return invalid(format!(
                "distance query [{segment_start}, {}) outside the {len}-sample recording",
                segment_start + segment_len
            ));
        }
        let m = self
            .position_near(segment_start + segment_len / 2)
            .ok_or_else(|| Error::InvalidArgument("scene has no active position".into()))?;
        let d = self.truth.distances[m];
        if self.noise_std_m == 0.0 {
            return Ok(d);
        }
        let mut rng = rng(sub_seed(self.seed, segment_start as u64));
        let mut noisy = d;
        for v in &mut noisy {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            *v = (*v + self.noise_std_m * z).max(1e-3);
        }
        Ok(noisy)
    }
}

/// Piecewise-constant distances from `start_sample,end_sample,d1_m,d2_m` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDistanceProvider {
    pub rows: Vec<(usize, usize, [f64; 2])>,
}

impl TableDistanceProvider {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            rows: truth
                .spans
                .iter()
                .map(|s| (s.start, s.start + s.len, truth.distances[s.position]))
                .collect(),
        }
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("distance table line {}: '{line}'", i + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let d1: f64 = f[2].parse().map_err(|_| bad())?;
            let d2: f64 = f[3].parse().map_err(|_| bad())?;
            if !(d1 > 0.0 && d2 > 0.0) {
                return Err(bad());
            }
            rows.push((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, [d1, d2]));
        }
        if rows.is_empty() {
            return Err(Error::Config("distance table has no rows".into()));
        }
        Ok(Self { rows })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "start_sample,end_sample,d1_m,d2_m")?;
        for (s, e, d) in &self.rows {
            writeln!(out, "{s},{e},{},{}", d[0], d[1])?;
        }
        Ok(())
    }
}

impl DistanceProvider for TableDistanceProvider {
    fn distances(&self, segment_start: usize, segment_len: usize) -> Result<[f64; 2]> {
        let c = segment_start + segment_len / 2;
        let gap = |&(s, e, _): &(usize, usize, [f64; 2])| {
            if c < s {
                s - c
            } else {
                c.saturating_sub(e.saturating_sub(1))
            }
        };
        self.rows
            .iter()
            .min_by_key(|r| gap(r))
            .map(|r| r.2)
            .ok_or(Error::NoObservations)
    }
}

fn read_padded(x: &[f64], start: i64, len: usize) -> Option<Vec<f64>> {
    if start < 0 || start as usize + len > x.len() {
        return None;
    }
    Some(x[start as usize..start as usize + len].to_vec())
}

/// GCC-PhaT shift and distances for every active segment. The second stream
/// is read `coarse_offset` samples later, and the offset is added back to the
/// measured shift.
pub fn collect_observations(
    x1: &[f64],
    x2_compensated: &[f64],
    provider: &dyn DistanceProvider,
    mask: &ActivityMask,
    coarse_offset: i64,
    params: &StoParams,
) -> Result<Vec<ShiftObservation>> {
    let (n, b) = (params.segment_len, params.segment_shift);
    if x1.len() < n {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for l in 0..=(x1.len() - n) / b {
        let start = l * b;
        if !segment_is_active(mask, start, n, params.min_active_ratio).unwrap_or(false) {
            continue;
        }
        let Some(seg2) = read_padded(x2_compensated, start as i64 + coarse_offset, n) else {
            continue;
        };
        let shift = match gcc_phat(&x1[start..start + n], &seg2, params.max_lag) {
            Ok(r) => r.refined_lag + coarse_offset as f64,
            Err(Error::DegenerateSegment) => continue,
            Err(e) => return Err(e),
        };
        let obs = match provider.distances(start, n) {
            Ok([d1, d2]) => ShiftObservation {
                segment_index: l,
                shift,
                d1,
                d2,
                active: true,
            },
            Err(_) => ShiftObservation {
                segment_index: l,
                shift,
                d1: 0.0,
                d2: 0.0,
                active: false,
            },
        };
        out.push(obs);
    }
    Ok(out)
}

fn mean_and_rms(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let rms = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, rms)
}

fn active_values(observations: &[ShiftObservation], fs: f64) -> Vec<f64> {
    observations
        .iter()
        .filter(|o| o.active)
        .map(|o| o.sto_sample(fs))
        .collect()
}

/// Least-squares STO: the mean of the per-observation STO values.
pub fn ls_sto(observations: &[ShiftObservation], sample_rate: f64) -> Result<StoEstimate> {
    let values = active_values(observations, sample_rate);
    if values.is_empty() {
        return Err(Error::NoObservations);
    }
    let (sto, residual_rms) = mean_and_rms(&values);
    Ok(StoEstimate {
        sto,
        inlier_count: values.len(),
        observation_count: values.len(),
        residual_rms,
    })
}

/// Least squares inside RANSAC with minimal samples of one observation.
///
/// Candidates are drawn from the sorted observation values, so the result
/// does not depend on the order of `observations`.
pub fn ransac_sto(observations: &[ShiftObservation], params: &StoParams) -> Result<StoEstimate> {
    let values = active_values(observations, params.sample_rate);
    if values.is_empty() {
        return Err(Error::NoObservations);
    }
    if values.len() < 3 {
        return invalid(format!(
            "RANSAC needs at least 3 active observations, got {}",
            values.len()
        ));
    }
    if params.ransac_iterations == 0 || !(params.inlier_tol >= 0.0) {
        return invalid("RANSAC needs iterations and a nonnegative inlier tolerance");
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let count = |c: f64| values.iter().filter(|v| (*v - c).abs() <= params.inlier_tol).count();
    let mut rng = rng(params.seed);
    let mut best = (0usize, 0.0);
    for _ in 0..params.ransac_iterations {
        let cand = sorted[rng.random_range(0..sorted.len())];
        let c = count(cand);
        if c > best.0 || (c == best.0 && cand < best.1) {
            best = (c, cand);
        }
    }
    let inliers: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| (v - best.1).abs() <= params.inlier_tol)
        .collect();
    let (sto, residual_rms) = mean_and_rms(&inliers);
    let estimate = StoEstimate {
        sto,
        inlier_count: inliers.len(),
        observation_count: values.len(),
        residual_rms,
    };
    if (inliers.len() as f64) < params.min_inlier_frac * values.len() as f64 {
        return Err(Error::NoConsensus {
            inliers: inliers.len(),
            total: values.len(),
            best_effort: estimate,
        });
    }
    Ok(estimate)
}

/// Remove the drift described by an SRO trace from the second stream with the
/// STFT resampler. The trace's last estimate is held beyond its end.
pub fn compensate_with_trace(x2: &[f64], trace: &SroTrace) -> Result<Vec<f64>> {
    if trace.points.is_empty() {
        return Err(Error::NoObservations);
    }
    let step = trace.segment_shift as f64 / trace.sample_rate;
    let mut values = trace.estimates();
    let needed = (x2.len() as f64 / trace.sample_rate / step).ceil() as usize + 2;
    let last = *values.last().expect("non-empty trace");
    if values.len() < needed {
        values.resize(needed, last);
    }
    let spec = AsyncSpec::new(0.0, SroTrajectory::from_values(values, step), trace.sample_rate)?;
    compensate_stft(x2, &spec, RESAMPLER_FRAME_SIZE, RESAMPLER_FRAME_SHIFT)
}

pub fn write_observations_csv<W: Write>(observations: &[ShiftObservation], mut out: W) -> Result<()> {
    writeln!(out, "segment_index,shift_samples,d1_m,d2_m,active")?;
    for o in observations {
        writeln!(out, "{},{},{},{},{}", o.segment_index, o.shift, o.d1, o.d2, u8::from(o.active))?;
    }
    Ok(())
}

impl StoEstimate {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "sto_samples,inlier_count,observation_count,residual_rms")?;
        writeln!(
            out,
            "{},{},{},{}",
            self.sto, self.inlier_count, self.observation_count, self.residual_rms
        )?;
        Ok(())
    }
}
