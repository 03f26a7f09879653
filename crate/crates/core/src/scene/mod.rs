//! Two-node recordings of a meeting in which one source at a time is active,
//! rendered together with ground truth.

mod propagation;
mod speech;

use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use propagation::{
    convolve, distance, flight_samples, render_propagation, reverb_tail, room_impulse_response,
    Point, ReverbSpec,
};
pub use speech::{synthetic_utterance, SPEECH_RMS};

use crate::async_model::{
    add_sensor_noise, apply_async_stft, AsyncSpec, RESAMPLER_FRAME_SHIFT, RESAMPLER_FRAME_SIZE,
};
use crate::error::{invalid, Result};
use crate::io::ingest_wav;
use crate::sad::ActivityMask;
use crate::signals::{rng, sub_seed};
use crate::sro_model::{
    default_step_duration, simulate_trajectory, OuParams, SroTrajectory, MAX_DELTA_START_PPM,
    MAX_MU_INF_PPM,
};
use crate::DEFAULT_SAMPLE_RATE;

/// Source-node distance at which the sensor noise is calibrated to `snr_db`.
pub const NOISE_REFERENCE_DISTANCE_M: f64 = 3.2;
/// Ground-truth activity frame length in samples.
pub const TRUTH_FRAME: usize = 512;

pub const ROOM_M: Point = [8.0, 6.0, 3.0];
const WALL_MARGIN_M: f64 = 0.5;
const MIN_SOURCE_DISTANCE_M: f64 = 1.0;
const UTTERANCE_S: (f64, f64) = (2.0, 4.0);
const MIN_UTTERANCE_S: f64 = 0.5;
const MAX_UTTERANCES_PER_POSITION: usize = 4;
pub const DEFAULT_PAUSE_RANGE_S: [f64; 2] = [0.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSignal {
    /// Built-in speech-shaped noise.
    Synthetic { duration_s: f64 },
    /// Mono WAV file, resampled if its rate differs.
    Wav { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub position: usize,
    pub source: SourceSignal,
    /// Silence inserted before this utterance. When absent, a pause is drawn
    /// from `pause_range_s` at position changes.
    #[serde(default)]
    pub pause_before_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    pub duration_s: f64,
    pub node_positions: [Point; 2],
    pub source_positions: Vec<Point>,
    pub utterances: Vec<Utterance>,
    #[serde(default)]
    pub pause_range_s: Option<[f64; 2]>,
    /// Sensor SNR in dB; `inf` disables the noise.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    pub ou_params: [OuParams; 2],
    /// Recording start time of each node in seconds.
    #[serde(default)]
    pub sto_s: [f64; 2],
    #[serde(default)]
    pub reverb: Option<ReverbSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

fn default_snr() -> f64 {
    30.0
}

/// The three binary properties distinguishing Scenario-1..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioFlags {
    pub time_varying_sro: bool,
    pub multi_position: bool,
    pub silence: bool,
}

impl ScenarioFlags {
    pub fn scenario(number: u8) -> Result<Self> {
        let (t, m, s) = match number {
            1 => (false, false, false),
            2 => (true, false, false),
            3 => (true, true, true),
            4 => (true, true, false),
            n => return invalid(format!("unknown scenario {n}, expected 1 to 4")),
        };
        Ok(Self {
            time_varying_sro: t,
            multi_position: m,
            silence: s,
        })
    }
}

fn random_point<R: Rng>(rng: &mut R, height: (f64, f64)) -> Point {
    [
        rng.random_range(WALL_MARGIN_M..ROOM_M[0] - WALL_MARGIN_M),
        rng.random_range(WALL_MARGIN_M..ROOM_M[1] - WALL_MARGIN_M),
        rng.random_range(height.0..height.1),
    ]
}

impl ScenarioSpec {
    /// Random meeting in an 8 m × 6 m × 3 m room with the properties in `flags`.
    ///
    /// Positions are added in blocks of 1 to 4 utterances until the duration
    /// is filled, so the number of positions grows with the duration.
    pub fn random(flags: ScenarioFlags, duration_s: f64, seed: u64) -> Self {
        let fs = DEFAULT_SAMPLE_RATE;
        let mut rng = rng(sub_seed(seed, 1));
        let nodes = loop {
            let a = random_point(&mut rng, (0.8, 1.8));
            let b = random_point(&mut rng, (0.8, 1.8));
            if distance(&a, &b) >= 2.0 * MIN_SOURCE_DISTANCE_M {
                break [a, b];
            }
        };
        let new_source = |rng: &mut rand_chacha::ChaCha8Rng, prev: Option<&Point>| loop {
            let p = random_point(rng, (1.2, 1.8));
            let far = nodes.iter().all(|n| distance(n, &p) >= MIN_SOURCE_DISTANCE_M);
            let moved = prev.is_none_or(|q| distance(q, &p) >= MIN_SOURCE_DISTANCE_M);
            if far && moved {
                return p;
            }
        };
        let mut source_positions = vec![new_source(&mut rng, None)];
        let mut utterances = Vec::new();
        let mut t = 0.0;
        let mut left_in_block = if flags.multi_position {
            rng.random_range(1..=MAX_UTTERANCES_PER_POSITION)
        } else {
            usize::MAX
        };
        while duration_s - t >= MIN_UTTERANCE_S {
            let mut pause = None;
            if left_in_block == 0 {
                let prev = *source_positions.last().expect("at least one position");
                source_positions.push(new_source(&mut rng, Some(&prev)));
                left_in_block = rng.random_range(1..=MAX_UTTERANCES_PER_POSITION);
                if flags.silence {
                    let p = rng.random_range(DEFAULT_PAUSE_RANGE_S[0]..DEFAULT_PAUSE_RANGE_S[1]);
                    pause = Some(p);
                    t += p;
                } else {
                    pause = Some(0.0);
                }
            }
            let want = rng.random_range(UTTERANCE_S.0..UTTERANCE_S.1);
            let len = want.min(duration_s - t);
            if len < MIN_UTTERANCE_S {
                break;
            }
            // whole samples so that the timeline adds up exactly
            let len = (len * fs).floor() / fs;
            utterances.push(Utterance {
                position: source_positions.len() - 1,
                source: SourceSignal::Synthetic { duration_s: len },
                pause_before_s: pause,
            });
            t += len;
            left_in_block -= 1;
        }
        let step = default_step_duration();
        let mut node_params = |_| {
            let mu = rng.random_range(-MAX_MU_INF_PPM..MAX_MU_INF_PPM);
            if flags.time_varying_sro {
                let delta = rng.random_range(-MAX_DELTA_START_PPM..MAX_DELTA_START_PPM);
                OuParams::new(mu, delta, step)
            } else {
                OuParams::constant(mu, step)
            }
        };
        let ou_params = [node_params(0), node_params(1)];
        let sto_s = [0.0, rng.random_range(-1.0..1.0)];
        Self {
            sample_rate: fs,
            duration_s,
            node_positions: nodes,
            source_positions,
            utterances,
            pause_range_s: flags.silence.then_some(DEFAULT_PAUSE_RANGE_S),
            snr_db: default_snr(),
            ou_params,
            sto_s,
            reverb: Some(ReverbSpec::default()),
            seed,
        }
    }

    /// Synchronous nodes: zero SRO and STO on both.
    pub fn make_synchronous(&mut self) {
        for p in &mut self.ou_params {
            *p = OuParams::constant(0.0, p.step_duration);
        }
        self.sto_s = [0.0, 0.0];
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.duration_s > 0.0) {
            return invalid("sample rate and duration must be positive");
        }
        if self.source_positions.is_empty() {
            return invalid("at least one source position is required");
        }
        for (u, utt) in self.utterances.iter().enumerate() {
            if utt.position >= self.source_positions.len() {
                return invalid(format!(
                    "utterance {u} refers to position {} of {}",
                    utt.position,
                    self.source_positions.len()
                ));
            }
            if let SourceSignal::Synthetic { duration_s } = utt.source {
                if !(duration_s > 0.0) {
                    return invalid(format!("utterance {u} has a non-positive duration"));
                }
            }
            if utt.pause_before_s.is_some_and(|p| !(p >= 0.0)) {
                return invalid(format!("utterance {u} has a negative pause"));
            }
        }
        if let Some([lo, hi]) = self.pause_range_s {
            if !(0.0 <= lo && lo <= hi) {
                return invalid("pause range must satisfy 0 <= low <= high");
            }
        }
        for src in &self.source_positions {
            for node in &self.node_positions {
                if !(distance(src, node) > 0.0) {
                    return invalid("a source position coincides with a node");
                }
            }
        }
        for p in &self.ou_params {
            p.validate()?;
        }
        if self.snr_db.is_nan() {
            return invalid("SNR must be a number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RecordingPair {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub sample_rate: f64,
}

/// Placement of one utterance on the source timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub sample_rate: f64,
    /// `ε_2 - ε_1` per process step, ppm.
    pub sro_diff_trajectory: SroTrajectory,
    pub node_trajectories: [SroTrajectory; 2],
    /// `(T_2 - T_1)·f_s`.
    pub sto_12: f64,
    /// `(d_2 - d_1)/c·f_s` per source position.
    pub tdof_per_position: Vec<f64>,
    /// Source-node distances `[d_1, d_2]` per position.
    pub distances: Vec<[f64; 2]>,
    /// Source activity per [`TRUTH_FRAME`]-sample frame of the source timeline.
    pub activity_mask: ActivityMask,
    pub position_index: Vec<Option<usize>>,
    pub spans: Vec<Span>,
}

impl GroundTruth {
    /// Active position of the truth frame containing `sample`.
    pub fn position_at(&self, sample: usize) -> Option<usize> {
        self.position_index
            .get(sample / self.activity_mask.frame_shift)
            .copied()
            .flatten()
    }

    pub fn write_activity_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frame_index,start_sample,active,position")?;
        for (i, (a, p)) in self
            .activity_mask
            .frame_flags
            .iter()
            .zip(&self.position_index)
            .enumerate()
        {
            let pos = p.map_or(String::new(), |p| p.to_string());
            writeln!(out, "{i},{},{},{pos}", i * self.activity_mask.frame_shift, u8::from(*a))?;
        }
        Ok(())
    }

    pub fn write_positions_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "position,d1_m,d2_m,tdof_samples")?;
        for (m, (d, t)) in self.distances.iter().zip(&self.tdof_per_position).enumerate() {
            writeln!(out, "{m},{},{},{t}", d[0], d[1])?;
        }
        Ok(())
    }
}

fn load_source(utt: &Utterance, sample_rate: f64, seed: u64) -> Result<Vec<f64>> {
    match &utt.source {
        SourceSignal::Synthetic { duration_s } => Ok(synthetic_utterance(
            (duration_s * sample_rate).round() as usize,
            sample_rate,
            seed,
        )),
        SourceSignal::Wav { path } => ingest_wav(path, sample_rate.round() as u32, true),
    }
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(RecordingPair, GroundTruth)> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let len = spec.num_samples();
    let mut pause_rng = rng(sub_seed(spec.seed, 2));

    let mut spans = Vec::with_capacity(spec.utterances.len());
    let mut sources = Vec::with_capacity(spec.utterances.len());
    let mut t = 0usize;
    let mut prev_position = None;
    for (u, utt) in spec.utterances.iter().enumerate() {
        let audio = load_source(utt, fs, sub_seed(spec.seed, 1000 + u as u64))?;
        let pause = match (utt.pause_before_s, spec.pause_range_s) {
            (Some(p), _) => p,
            (None, Some([lo, hi])) if prev_position.is_some_and(|p| p != utt.position) => {
                if hi > lo {
                    pause_rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            _ => 0.0,
        };
        t += (pause * fs).round() as usize;
        spans.push(Span {
            start: t,
            len: audio.len(),
            position: utt.position,
        });
        t += audio.len();
        prev_position = Some(utt.position);
        sources.push(audio);
    }
    if t > len {
        return invalid(format!(
            "utterances and pauses need {:.3} s but the scene lasts {} s",
            t as f64 / fs,
            spec.duration_s
        ));
    }

    let mut clean = [vec![0.0; len], vec![0.0; len]];
    for (span, audio) in spans.iter().zip(&sources) {
        let src = &spec.source_positions[span.position];
        for (i, node) in spec.node_positions.iter().enumerate() {
            let rir_seed = sub_seed(spec.seed, 100 + 2 * span.position as u64 + i as u64);
            let y = render_propagation(audio, src, node, spec.reverb.as_ref(), fs, rir_seed)?;
            for (o, v) in clean[i][span.start..].iter_mut().zip(&y) {
                *o += v;
            }
        }
    }

    let reference: Vec<f64> = sources
        .iter()
        .flatten()
        .map(|v| v / NOISE_REFERENCE_DISTANCE_M)
        .collect();
    let mut trajectories = Vec::with_capacity(2);
    let mut outputs = Vec::with_capacity(2);
    for i in 0..2 {
        let params = &spec.ou_params[i];
        let steps = (len as f64 / fs / params.step_duration).ceil() as usize + 2;
        let traj = simulate_trajectory(params, steps, sub_seed(spec.seed, 10 + i as u64))?;
        let async_spec = AsyncSpec::new(spec.sto_s[i], traj.clone(), fs)?;
        let y = apply_async_stft(&clean[i], &async_spec, RESAMPLER_FRAME_SIZE, RESAMPLER_FRAME_SHIFT)?;
        let y = if reference.is_empty() || spec.snr_db == f64::INFINITY {
            y
        } else {
            add_sensor_noise(&y, spec.snr_db, &reference, sub_seed(spec.seed, 20 + i as u64))?
        };
        trajectories.push(traj);
        outputs.push(y);
    }

    let frames = len.div_ceil(TRUTH_FRAME);
    let mut position_index = vec![None; frames];
    for s in &spans {
        let first = s.start / TRUTH_FRAME;
        let last = (s.start + s.len).div_ceil(TRUTH_FRAME).min(frames);
        for p in &mut position_index[first..last] {
            *p = Some(s.position);
        }
    }
    let distances: Vec<[f64; 2]> = spec
        .source_positions
        .iter()
        .map(|s| {
            [
                distance(s, &spec.node_positions[0]),
                distance(s, &spec.node_positions[1]),
            ]
        })
        .collect();
    let traj2 = trajectories.pop().expect("two nodes");
    let traj1 = trajectories.pop().expect("two nodes");
    let truth = GroundTruth {
        sample_rate: fs,
        sro_diff_trajectory: traj2.difference(&traj1),
        sto_12: (spec.sto_s[1] - spec.sto_s[0]) * fs,
        tdof_per_position: distances
            .iter()
            .map(|d| flight_samples(d[1] - d[0], fs))
            .collect(),
        distances,
        activity_mask: ActivityMask {
            frame_flags: position_index.iter().map(Option::is_some).collect(),
            frame_size: TRUTH_FRAME,
            frame_shift: TRUTH_FRAME,
            threshold_db: 0.0,
            signal_len: len,
        },
        position_index,
        spans,
        node_trajectories: [traj1, traj2],
    };
    let x2 = outputs.pop().expect("two nodes");
    let x1 = outputs.pop().expect("two nodes");
    Ok((RecordingPair { x1, x2, sample_rate: fs }, truth))
}
