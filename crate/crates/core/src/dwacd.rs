//! Online SRO estimation by dynamic weighted average coherence drift.
//!
//! Per segment `ℓ` (shift `B_s`, length `N_W`) the coherence `Γ(ℓ,k)` between
//! both streams is estimated with Welch's method, once for the current
//! segment and once for the segment `ℓ_d` shifts earlier. Both are read from
//! the second stream with the same compensation shift `τ_comp`, so the phase of
//!
//! ```text
//! P(ℓ,k) = Γ(ℓ,k)·conj(Γ(ℓ-ℓ_d,k)) ≈ W·exp(j·2π·k/N·ℓ_d·B_s·ε)
//! ```
//!
//! only carries the drift accumulated over `ℓ_d·B_s` samples. `P` is averaged
//! recursively over activity-gated segments and the SRO is read off the peak
//! of the GCC function of the average, `ε̂ = -λ_max/(ℓ_d·B_s)`.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{cross_correlate_offset, fft, lag_search, WindowKind};
use crate::error::{invalid, Error, Result};
use crate::sad::{detect_activity, segment_is_active, ActivityMask};
use crate::{DEFAULT_SAMPLE_RATE, PPM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwacdParams {
    /// Welch frame shift `B`.
    pub frame_shift: usize,
    /// Welch frame and FFT size `N`.
    pub fft_size: usize,
    /// Segment shift `B_s`.
    pub segment_shift: usize,
    /// Segment length `N_W`.
    pub segment_len: usize,
    /// Distance `ℓ_d` between the two coherence estimates, in segments.
    pub temporal_distance: usize,
    /// Recursive smoothing factor `α`.
    pub smoothing: f64,
    /// First segment index with a valid estimate, `ℓ_min`.
    pub settling: usize,
    /// Length of the coarse synchronisation window in seconds.
    pub coarse_sync_window_s: f64,
    /// Largest searched SRO magnitude; sets the lag search halfwidth.
    pub max_sro_ppm: f64,
    pub window: WindowKind,
    pub sample_rate: f64,
    pub sad_frame_size: usize,
    pub sad_frame_shift: usize,
    pub sad_threshold_db: f64,
    /// Fraction of active activity frames a segment needs to update the average.
    pub min_active_ratio: f64,
}

impl Default for DwacdParams {
    fn default() -> Self {
        Self {
            frame_shift: 512,
            fft_size: 4096,
            segment_shift: 2048,
            segment_len: 8192,
            temporal_distance: 4,
            smoothing: 0.95,
            settling: 40,
            coarse_sync_window_s: 20.0,
            max_sro_ppm: 250.0,
            window: WindowKind::Blackman,
            sample_rate: DEFAULT_SAMPLE_RATE,
            sad_frame_size: 1024,
            sad_frame_shift: 512,
            sad_threshold_db: crate::sad::DEFAULT_THRESHOLD_DB,
            min_active_ratio: crate::sad::DEFAULT_MIN_RATIO,
        }
    }
}

impl DwacdParams {
    /// Number of Welch frames per segment, `ν_W = ⌊(N_W - N + B)/B⌋`.
    pub fn welch_frames(&self) -> usize {
        (self.segment_len - self.fft_size + self.frame_shift) / self.frame_shift
    }

    /// Lag distance `ℓ_d·B_s` between the two coherence estimates.
    pub fn drift_span(&self) -> f64 {
        (self.temporal_distance * self.segment_shift) as f64
    }

    /// Halfwidth of the readout lag search, `⌈max_sro·ℓ_d·B_s⌉`.
    pub fn search_halfwidth(&self) -> usize {
        (self.max_sro_ppm * PPM * self.drift_span()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.fft_size;
        if !n.is_power_of_two() || n < 4 {
            return invalid(format!("FFT size {n} must be a power of two"));
        }
        if self.frame_shift == 0 || self.frame_shift > n {
            return invalid("frame shift must lie in (0, N]");
        }
        if self.segment_len < n || self.segment_shift == 0 {
            return invalid("segment must hold at least one frame and advance");
        }
        if self.temporal_distance == 0 {
            return invalid("temporal distance must be at least one segment");
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return invalid("smoothing factor must lie in (0, 1)");
        }
        if !(self.max_sro_ppm > 0.0) {
            return invalid("maximum SRO must be positive");
        }
        let h = self.search_halfwidth();
        if h >= n / 2 {
            return invalid(format!(
                "max SRO {} ppm needs a lag range of {h}, beyond N/2",
                self.max_sro_ppm
            ));
        }
        if !(self.sample_rate > 0.0 && self.coarse_sync_window_s > 0.0) {
            return invalid("sample rate and coarse sync window must be positive");
        }
        if self.sad_frame_size == 0 || self.sad_frame_shift == 0 {
            return invalid("activity frames must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.min_active_ratio) {
            return invalid("minimum activity ratio must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwacdState {
    /// Smoothed coherence product `P̄(ℓ,k)` over all `N` bins.
    pub smoothed_product: Vec<Complex64>,
    /// Integer read offset `τ_comp` into the second stream on top of the coarse offset.
    pub comp_shift: i64,
    /// SRO estimate of the previous segment, ppm.
    pub last_sro: f64,
    pub segment_index: usize,
    pub coarse_offset: i64,
    /// Delay accumulated from the estimates up to the previous segment, samples.
    pub accumulated_delay: f64,
    pub updates: usize,
    pub settled: bool,
}

impl DwacdState {
    pub fn new(params: &DwacdParams, coarse_offset: i64) -> Self {
        Self {
            smoothed_product: vec![Complex64::new(0.0, 0.0); params.fft_size],
            comp_shift: 0,
            last_sro: 0.0,
            segment_index: 0,
            coarse_offset,
            accumulated_delay: 0.0,
            updates: 0,
            settled: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SroTracePoint {
    pub segment_index: usize,
    /// Centre of the segment in seconds.
    pub time_s: f64,
    pub sro_ppm: f64,
    pub valid: bool,
    /// The readout hit the edge of the searched range and was clamped.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SroTrace {
    pub points: Vec<SroTracePoint>,
    pub coarse_offset: i64,
    pub segment_shift: usize,
    pub segment_len: usize,
    pub sample_rate: f64,
}

impl SroTrace {
    /// Per-segment estimates including back-filled and held values.
    pub fn estimates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sro_ppm).collect()
    }

    pub fn valid_points(&self) -> impl Iterator<Item = &SroTracePoint> {
        self.points.iter().filter(|p| p.valid)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "segment_index,time_s,sro_ppm,valid")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.segment_index,
                p.time_s,
                p.sro_ppm,
                u8::from(p.valid)
            )?;
        }
        Ok(())
    }

    /// Read a trace written by [`SroTrace::write_csv`]. Segment geometry comes from `params`.
    pub fn read_csv(text: &str, params: &DwacdParams) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Config(format!("trace line {}: malformed '{line}'", i + 1));
            if f.len() < 4 {
                return Err(bad());
            }
            points.push(SroTracePoint {
                segment_index: f[0].parse().map_err(|_| bad())?,
                time_s: f[1].parse().map_err(|_| bad())?,
                sro_ppm: f[2].parse().map_err(|_| bad())?,
                valid: matches!(f[3], "1" | "true"),
                saturated: false,
            });
        }
        Ok(Self {
            points,
            coarse_offset: 0,
            segment_shift: params.segment_shift,
            segment_len: params.segment_len,
            sample_rate: params.sample_rate,
        })
    }
}

/// Integer offset of `x2` relative to `x1`, from a cross-correlation over the
/// first `coarse_sync_window_s` seconds after the first active frame of `mask`.
///
/// The lag range is `⌈1.1·f_s⌉`, reduced to half the window for short inputs.
pub fn coarse_sync(x1: &[f64], x2: &[f64], mask: &ActivityMask, params: &DwacdParams) -> Result<i64> {
    let first = mask
        .first_active_frame()
        .ok_or_else(|| Error::CoarseSyncUnavailable("no source activity detected".into()))?;
    let start = first * mask.frame_shift;
    let len = x1.len().min(x2.len());
    if start >= len {
        return Err(Error::CoarseSyncUnavailable(
            "activity starts after the end of the second stream".into(),
        ));
    }
    let window = ((params.coarse_sync_window_s * params.sample_rate).round() as usize).min(len - start);
    let max_lag = ((1.1 * params.sample_rate).ceil() as usize).min(window / 2);
    if max_lag == 0 {
        return Err(Error::CoarseSyncUnavailable(format!(
            "only {window} samples of activity"
        )));
    }
    let a = &x1[start..start + window];
    let b = &x2[start..start + window];
    match cross_correlate_offset(a, b, max_lag) {
        Ok(peak) => Ok(peak.lag),
        Err(Error::DegenerateCorrelation) => Err(Error::CoarseSyncUnavailable(
            "silent coarse synchronisation window".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Welch coherence `Φ12/√(Φ11·Φ22)` over all `N` bins with `Φ12 = Y1·conj(Y2)`.
///
/// Frame `κ` of `seg2` is rotated by `exp(j·2π·k/N·κ·B·ε_prev)` to undo the
/// drift expected inside the segment.
pub fn estimate_coherence(
    seg1: &[f64],
    seg2: &[f64],
    prev_sro: f64,
    params: &DwacdParams,
) -> Result<Vec<Complex64>> {
    let half = coherence_onesided(seg1, seg2, prev_sro, params)?;
    Ok(fft::hermitian_full(&half, params.fft_size))
}

fn coherence_onesided(
    seg1: &[f64],
    seg2: &[f64],
    prev_sro: f64,
    params: &DwacdParams,
) -> Result<Vec<Complex64>> {
    let (n, b) = (params.fft_size, params.frame_shift);
    if seg1.len() != params.segment_len || seg2.len() != params.segment_len {
        return invalid(format!(
            "segments of {} and {} samples, expected {}",
            seg1.len(),
            seg2.len(),
            params.segment_len
        ));
    }
    let win = params.window.coefficients(n);
    let plan = fft::real_forward_plan(n);
    let bins = n / 2 + 1;
    let mut buf = vec![0.0; n];
    let mut y1 = plan.make_output_vec();
    let mut y2 = plan.make_output_vec();
    let mut p12 = vec![Complex64::new(0.0, 0.0); bins];
    let mut p11 = vec![0.0; bins];
    let mut p22 = vec![0.0; bins];
    let drift = prev_sro * PPM * b as f64;
    for kappa in 0..params.welch_frames() {
        let off = kappa * b;
        for ((o, x), w) in buf.iter_mut().zip(&seg1[off..off + n]).zip(&win) {
            *o = x * w;
        }
        plan.process(&mut buf, &mut y1).expect("buffer sizes match the plan");
        for ((o, x), w) in buf.iter_mut().zip(&seg2[off..off + n]).zip(&win) {
            *o = x * w;
        }
        plan.process(&mut buf, &mut y2).expect("buffer sizes match the plan");
        let step = Complex64::from_polar(1.0, 2.0 * PI * kappa as f64 * drift / n as f64);
        let mut rot = Complex64::new(1.0, 0.0);
        for k in 0..bins {
            // the Nyquist bin stays real
            let z2 = if k == n / 2 { y2[k] } else { y2[k] * rot };
            p12[k] += y1[k] * z2.conj();
            p11[k] += y1[k].norm_sqr();
            p22[k] += z2.norm_sqr();
            rot *= step;
        }
    }
    let floor1 = 1e-12 * p11.iter().sum::<f64>() / bins as f64;
    let floor2 = 1e-12 * p22.iter().sum::<f64>() / bins as f64;
    Ok(p12
        .iter()
        .zip(p11.iter().zip(&p22))
        .map(|(c, (a, b))| {
            let den = (a.max(floor1) * b.max(floor2)).sqrt();
            if den > 0.0 {
                c / den
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect())
}

/// `P(k) = Γ_now(k)·conj(Γ_past(k))`.
pub fn coherence_product(now: &[Complex64], past: &[Complex64]) -> Vec<Complex64> {
    now.iter().zip(past).map(|(a, b)| a * b.conj()).collect()
}

/// `P̄ ← α·P̄ + (1-α)·P` when `gate` is open; otherwise the state is untouched.
pub fn update_smoothed(state: &mut DwacdState, product: &[Complex64], gate: bool, params: &DwacdParams) {
    if !gate {
        return;
    }
    let a = params.smoothing;
    for (s, p) in state.smoothed_product.iter_mut().zip(product) {
        *s = a * *s + (1.0 - a) * p;
    }
    state.updates += 1;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SroReadout {
    pub sro_ppm: f64,
    /// Peak on the edge of the search range; the value is clamped to `±max_sro_ppm`.
    pub saturated: bool,
}

/// `ε̂ = -λ_max/(ℓ_d·B_s)` in ppm from the GCC function of `P̄`.
pub fn sro_from_smoothed(smoothed: &[Complex64], params: &DwacdParams) -> Result<SroReadout> {
    if smoothed.len() != params.fft_size {
        return invalid(format!(
            "smoothed product has {} bins, expected {}",
            smoothed.len(),
            params.fft_size
        ));
    }
    let r = match lag_search(smoothed, params.search_halfwidth()) {
        Err(Error::DegenerateSpectrum) => return Err(Error::NotSettled),
        other => other?,
    };
    let sro = -r.refined_lag / params.drift_span() / PPM;
    let saturated = r.at_boundary || sro.abs() > params.max_sro_ppm;
    Ok(SroReadout {
        sro_ppm: sro.clamp(-params.max_sro_ppm, params.max_sro_ppm),
        saturated,
    })
}

/// Copy of `x[start..start + len]` with zeros outside the stream.
fn read_padded(x: &[f64], start: i64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let lo = start.max(0);
    let hi = (start + len as i64).min(x.len() as i64);
    if lo < hi {
        out[(lo - start) as usize..(hi - start) as usize]
            .copy_from_slice(&x[lo as usize..hi as usize]);
    }
    out
}

fn active_at(mask: &ActivityMask, start: i64, len: usize, min_ratio: f64) -> bool {
    start >= 0 && segment_is_active(mask, start as usize, len, min_ratio).unwrap_or(false)
}

/// Outcome of one segment update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentUpdate {
    pub gate: bool,
    pub point: SroTracePoint,
}

/// Streaming estimator over two complete recordings. Segments are processed
/// strictly in order; [`DwacdEstimator::step`] advances by one.
pub struct DwacdEstimator<'a> {
    x1: &'a [f64],
    x2: &'a [f64],
    mask1: ActivityMask,
    mask2: ActivityMask,
    params: DwacdParams,
    pub state: DwacdState,
    estimates: Vec<f64>,
}

impl<'a> DwacdEstimator<'a> {
    pub fn new(x1: &'a [f64], x2: &'a [f64], params: &DwacdParams) -> Result<Self> {
        params.validate()?;
        let needed = params.segment_len + params.temporal_distance * params.segment_shift;
        if x1.len() < needed || x2.len() < needed {
            return Err(Error::InsufficientSamples {
                needed,
                got: x1.len().min(x2.len()),
            });
        }
        let detect = |x| {
            detect_activity(x, params.sad_frame_size, params.sad_frame_shift, params.sad_threshold_db)
        };
        let mask1 = detect(x1)?;
        let mask2 = detect(x2)?;
        let coarse = coarse_sync(x1, x2, &mask1, params)?;
        Ok(Self {
            x1,
            x2,
            mask1,
            mask2,
            params: params.clone(),
            state: DwacdState::new(params, coarse),
            estimates: Vec::new(),
        })
    }

    pub fn num_segments(&self) -> usize {
        (self.x1.len() - self.params.segment_len) / self.params.segment_shift + 1
    }

    pub fn step(&mut self) -> Result<Option<SegmentUpdate>> {
        let p = &self.params;
        let l = self.state.segment_index;
        if l >= self.num_segments() {
            return Ok(None);
        }
        let (nw, bs) = (p.segment_len, p.segment_shift);
        let shift = |eps: f64| eps * PPM * bs as f64;
        self.state.comp_shift = if l == 0 {
            0
        } else {
            (self.state.accumulated_delay + shift(self.state.last_sro)).round() as i64
        };
        let pos1 = (l * bs) as i64;
        let pos2 = pos1 + self.state.coarse_offset + self.state.comp_shift;
        let back = (p.temporal_distance * bs) as i64;
        let gate = l >= p.temporal_distance
            && active_at(&self.mask1, pos1, nw, p.min_active_ratio)
            && active_at(&self.mask1, pos1 - back, nw, p.min_active_ratio)
            && active_at(&self.mask2, pos2, nw, p.min_active_ratio)
            && active_at(&self.mask2, pos2 - back, nw, p.min_active_ratio);
        if gate {
            let prev = self.state.last_sro;
            let now = coherence_onesided(
                &self.x1[pos1 as usize..pos1 as usize + nw],
                &read_padded(self.x2, pos2, nw),
                prev,
                p,
            )?;
            let past = coherence_onesided(
                &self.x1[(pos1 - back) as usize..(pos1 - back) as usize + nw],
                &read_padded(self.x2, pos2 - back, nw),
                prev,
                p,
            )?;
            let product = fft::hermitian_full(&coherence_product(&now, &past), p.fft_size);
            update_smoothed(&mut self.state, &product, true, p);
        }

        let mut saturated = false;
        let mut sro = self.state.last_sro;
        let mut have_estimate = false;
        if l >= p.settling {
            match sro_from_smoothed(&self.state.smoothed_product, p) {
                Ok(r) => {
                    sro = r.sro_ppm;
                    saturated = r.saturated;
                    have_estimate = true;
                }
                Err(Error::NotSettled) => {}
                Err(e) => return Err(e),
            }
        }
        if have_estimate && !self.state.settled {
            // take the first settled estimate over for all earlier segments
            self.state.settled = true;
            self.estimates.iter_mut().for_each(|e| *e = sro);
            self.state.accumulated_delay =
                nw as f64 / 2.0 * sro * PPM + (l.saturating_sub(1) * bs) as f64 * sro * PPM;
        }
        let acc_shift = shift(sro);
        self.state.accumulated_delay = if l == 0 {
            nw as f64 / 2.0 * sro * PPM
        } else {
            self.state.accumulated_delay + acc_shift
        };
        self.estimates.push(sro);
        self.state.last_sro = sro;
        self.state.segment_index += 1;
        Ok(Some(SegmentUpdate {
            gate,
            point: SroTracePoint {
                segment_index: l,
                time_s: (l * bs + nw / 2) as f64 / p.sample_rate,
                sro_ppm: sro,
                valid: have_estimate && gate,
                saturated,
            },
        }))
    }
}

/// Run the estimator over complete recordings. Points before the first valid
/// readout carry the back-filled settled estimate.
pub fn run_dwacd(x1: &[f64], x2: &[f64], params: &DwacdParams) -> Result<SroTrace> {
    let mut est = DwacdEstimator::new(x1, x2, params)?;
    let mut points = Vec::with_capacity(est.num_segments());
    while let Some(u) = est.step()? {
        points.push(u.point);
    }
    for (p, e) in points.iter_mut().zip(&est.estimates) {
        p.sro_ppm = *e;
    }
    Ok(SroTrace {
        points,
        coarse_offset: est.state.coarse_offset,
        segment_shift: params.segment_shift,
        segment_len: params.segment_len,
        sample_rate: params.sample_rate,
    })
}
