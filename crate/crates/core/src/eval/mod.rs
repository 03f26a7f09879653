//! Scenario batches, error metrics and report output.
//!
//! Metric definitions:
//! - SRO RMSE per recording over the valid (settled, activity-gated)
//!   segments, against the true SRO at each segment centre.
//! - Delay RMSE per recording over all segments from the settling index on,
//!   with both delays accumulated segment-wise from the SRO values.
//! - Batch averages are taken over recordings; the pooled SRO RMSE over all
//!   valid segments of the batch is reported alongside. The maximum is the
//!   largest per-recording value.

pub mod metrics;
pub mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwacd::{run_dwacd, DwacdParams, SroTrace};
use crate::error::{invalid, Error, Result};
use crate::sad::detect_activity;
use crate::scene::{generate_scenario, GroundTruth, RecordingPair, ReverbSpec, ScenarioFlags, ScenarioSpec};
use crate::sro_model::{default_theta, trajectory_std, DEFAULT_SIGMA_OU_PPM};
use crate::sto::{
    collect_observations, compensate_with_trace, oracle_distance_provider, ransac_sto, StoParams,
};

pub use metrics::{accumulate_delay, delay_rmse, sro_rmse, truth_at_segments};

/// Boundaries of the σ_ε bands in ppm.
pub const SIGMA_BANDS: [(f64, f64); 4] = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    /// Scenario number 1 to 4; `flags` overrides it when given.
    pub scenario: u8,
    pub flags: Option<ScenarioFlags>,
    pub batch_size: usize,
    pub base_seed: u64,
    pub duration_s: f64,
    /// Zero SRO and STO on both nodes.
    pub synchronous: bool,
    /// Per-node innovation std values cycled over the batch, ppm. The
    /// smoothing factor stays at its default.
    pub sigma_ou_ppm: Vec<f64>,
    pub snr_db: f64,
    pub anechoic: bool,
    pub reverb: ReverbSpec,
    pub run_sto: bool,
    pub distance_noise_m: f64,
    /// Signal lengths in minutes for the STO sweep; empty means the full length only.
    pub sweep_minutes: Vec<f64>,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    pub dwacd: DwacdParams,
    pub sto: StoParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "batch".into(),
            scenario: 1,
            flags: None,
            batch_size: 10,
            base_seed: 1,
            duration_s: 300.0,
            synchronous: false,
            sigma_ou_ppm: Vec::new(),
            snr_db: 30.0,
            anechoic: false,
            reverb: ReverbSpec::default(),
            run_sto: false,
            distance_noise_m: 0.1,
            sweep_minutes: Vec::new(),
            workers: 0,
            output_dir: None,
            dwacd: DwacdParams::default(),
            sto: StoParams {
                inlier_tol: 10.0,
                ..StoParams::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn flags(&self) -> Result<ScenarioFlags> {
        match self.flags {
            Some(f) => Ok(f),
            None => ScenarioFlags::scenario(self.scenario),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flags()?;
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        if !(self.duration_s > 0.0) {
            return invalid("duration must be positive");
        }
        if self.sigma_ou_ppm.iter().any(|s| !(*s >= 0.0)) {
            return invalid("innovation std values must be nonnegative");
        }
        if self.sweep_minutes.iter().any(|m| !(*m > 0.0 && m * 60.0 <= self.duration_s + 1e-9)) {
            return invalid("sweep lengths must be positive and within the duration");
        }
        self.dwacd.validate()
    }

    /// Scenario of recording `index` of the batch.
    pub fn scenario_spec(&self, index: usize) -> Result<ScenarioSpec> {
        let seed = self.base_seed + index as u64;
        let mut spec = ScenarioSpec::random(self.flags()?, self.duration_s, seed);
        if self.synchronous {
            spec.make_synchronous();
        }
        if !self.sigma_ou_ppm.is_empty() {
            let sigma = self.sigma_ou_ppm[index % self.sigma_ou_ppm.len()];
            for p in &mut spec.ou_params {
                if p.sigma_ou > 0.0 || self.flags()?.time_varying_sro {
                    p.sigma_ou = sigma;
                    p.theta = default_theta(DEFAULT_SIGMA_OU_PPM);
                }
            }
        }
        spec.snr_db = self.snr_db;
        spec.reverb = (!self.anechoic).then_some(self.reverb);
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoResult {
    pub minutes: f64,
    pub estimate: Option<f64>,
    pub abs_error: Option<f64>,
    pub inliers: usize,
    pub observations: usize,
    pub consensus: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingResult {
    pub index: usize,
    pub seed: u64,
    pub trajectory_std_ppm: f64,
    pub rmse_sro_ppm: Option<f64>,
    pub rmse_delay_samples: Option<f64>,
    pub valid_segments: usize,
    /// Sum of squared SRO errors over the valid segments, for pooling.
    pub sro_sq_sum: f64,
    pub sto_truth: f64,
    pub sto: Vec<StoResult>,
    pub failure: Option<String>,
}

/// Output of one recording, kept for plotting.
pub struct RecordingOutput {
    pub result: RecordingResult,
    pub trace: Option<SroTrace>,
    pub truth: Option<GroundTruth>,
}

fn sto_for_length(
    rec: &RecordingPair,
    truth: &GroundTruth,
    trace: &SroTrace,
    minutes: f64,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<StoResult> {
    let fs = rec.sample_rate;
    let len = ((minutes * 60.0 * fs).round() as usize).min(rec.x1.len());
    let x1 = &rec.x1[..len];
    let x2 = &rec.x2[..len.min(rec.x2.len())];
    let seg_end = |p: &crate::dwacd::SroTracePoint| p.segment_index * trace.segment_shift + trace.segment_len;
    let truncated = SroTrace {
        points: trace.points.iter().copied().filter(|p| seg_end(p) <= len).collect(),
        ..trace.clone()
    };
    let x2c = compensate_with_trace(x2, &truncated)?;
    let p = &config.dwacd;
    let mask = detect_activity(x1, p.sad_frame_size, p.sad_frame_shift, p.sad_threshold_db)?;
    let provider = oracle_distance_provider(truth, config.distance_noise_m, seed);
    let sto_params = StoParams {
        seed,
        sample_rate: fs,
        ..config.sto.clone()
    };
    let obs = collect_observations(x1, &x2c, &provider, &mask, trace.coarse_offset, &sto_params)?;
    let (est, consensus) = match ransac_sto(&obs, &sto_params) {
        Ok(e) => (Some(e), true),
        Err(Error::NoConsensus { best_effort, .. }) => (Some(best_effort), false),
        Err(Error::NoObservations) => (None, false),
        Err(e) => return Err(e),
    };
    Ok(StoResult {
        minutes,
        estimate: est.map(|e| e.sto),
        abs_error: est.map(|e| (e.sto - truth.sto_12).abs()),
        inliers: est.map_or(0, |e| e.inlier_count),
        observations: est.map_or(0, |e| e.observation_count),
        consensus,
    })
}

fn try_evaluate(index: usize, config: &ExperimentConfig) -> Result<RecordingOutput> {
    let spec = config.scenario_spec(index)?;
    let (rec, truth) = generate_scenario(&spec)?;
    let dwacd = DwacdParams {
        sample_rate: rec.sample_rate,
        ..config.dwacd.clone()
    };
    let trace = run_dwacd(&rec.x1, &rec.x2, &dwacd)?;
    let t = truth_at_segments(&trace, &truth.sro_diff_trajectory);
    let errs: Vec<f64> = trace
        .points
        .iter()
        .zip(&t)
        .filter(|(p, _)| p.valid)
        .map(|(p, t)| p.sro_ppm - t)
        .collect();
    let mut sto = Vec::new();
    if config.run_sto {
        let lengths = if config.sweep_minutes.is_empty() {
            vec![config.duration_s / 60.0]
        } else {
            config.sweep_minutes.clone()
        };
        for m in lengths {
            sto.push(sto_for_length(&rec, &truth, &trace, m, config, spec.seed)?);
        }
    }
    let result = RecordingResult {
        index,
        seed: spec.seed,
        trajectory_std_ppm: trajectory_std(&truth.sro_diff_trajectory, 0).unwrap_or(0.0),
        rmse_sro_ppm: sro_rmse(&trace, &truth.sro_diff_trajectory),
        rmse_delay_samples: delay_rmse(&trace, &truth.sro_diff_trajectory, dwacd.settling),
        valid_segments: errs.len(),
        sro_sq_sum: errs.iter().map(|e| e * e).sum(),
        sto_truth: truth.sto_12,
        sto,
        failure: None,
    };
    Ok(RecordingOutput {
        result,
        trace: Some(trace),
        truth: Some(truth),
    })
}

/// Evaluate one recording of the batch; failures are recorded, not raised.
pub fn evaluate_recording(index: usize, config: &ExperimentConfig) -> RecordingOutput {
    try_evaluate(index, config).unwrap_or_else(|e| RecordingOutput {
        result: RecordingResult {
            index,
            seed: config.base_seed + index as u64,
            trajectory_std_ppm: f64::NAN,
            rmse_sro_ppm: None,
            rmse_delay_samples: None,
            valid_segments: 0,
            sro_sq_sum: 0.0,
            sto_truth: f64::NAN,
            sto: Vec::new(),
            failure: Some(e.to_string()),
        },
        trace: None,
        truth: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub lo_ppm: f64,
    pub hi_ppm: f64,
    pub count: usize,
    pub avg_rmse_sro_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub minutes: f64,
    pub errors: Vec<f64>,
    pub median: f64,
    pub max: f64,
    pub over_10: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub name: String,
    pub recordings: Vec<RecordingResult>,
    pub avg_rmse_sro_ppm: f64,
    pub pooled_rmse_sro_ppm: f64,
    pub avg_rmse_delay_samples: f64,
    pub max_rmse_delay_samples: f64,
    pub bands: Vec<BandRow>,
    pub band_notes: Vec<String>,
    pub sweep: Vec<SweepRow>,
    pub failures: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-band average SRO RMSE, bucketing recordings by the std of their true SRO.
/// Empty bands are left out and listed in the notes.
pub fn sigma_band_report(results: &[RecordingResult]) -> (Vec<BandRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &(lo, hi) in &SIGMA_BANDS {
        let r: Vec<f64> = results
            .iter()
            .filter(|r| r.trajectory_std_ppm >= lo && r.trajectory_std_ppm < hi)
            .filter_map(|r| r.rmse_sro_ppm)
            .collect();
        if r.is_empty() {
            notes.push(format!("band [{lo}, {hi}) ppm has no recordings"));
        } else {
            rows.push(BandRow {
                lo_ppm: lo,
                hi_ppm: hi,
                count: r.len(),
                avg_rmse_sro_ppm: mean(&r),
            });
        }
    }
    (rows, notes)
}

fn sweep_rows(results: &[RecordingResult]) -> Vec<SweepRow> {
    let mut minutes: Vec<f64> = results.iter().flat_map(|r| r.sto.iter().map(|s| s.minutes)).collect();
    minutes.sort_by(|a, b| a.total_cmp(b));
    minutes.dedup();
    minutes
        .into_iter()
        .map(|m| {
            let entries: Vec<&StoResult> = results
                .iter()
                .flat_map(|r| r.sto.iter())
                .filter(|s| s.minutes == m)
                .collect();
            let errors: Vec<f64> = entries.iter().filter_map(|s| s.abs_error).collect();
            SweepRow {
                minutes: m,
                median: median(&errors),
                max: errors.iter().copied().fold(f64::NAN, f64::max),
                over_10: errors.iter().filter(|e| **e > 10.0).count(),
                missing: entries.len() - errors.len(),
                errors,
            }
        })
        .collect()
}

/// Aggregate per-recording results.
pub fn summarize(name: &str, recordings: Vec<RecordingResult>) -> MetricsReport {
    let sro: Vec<f64> = recordings.iter().filter_map(|r| r.rmse_sro_ppm).collect();
    let delay: Vec<f64> = recordings.iter().filter_map(|r| r.rmse_delay_samples).collect();
    let (sq, n) = recordings
        .iter()
        .fold((0.0, 0usize), |(s, n), r| (s + r.sro_sq_sum, n + r.valid_segments));
    let (bands, band_notes) = sigma_band_report(&recordings);
    MetricsReport {
        name: name.to_string(),
        avg_rmse_sro_ppm: mean(&sro),
        pooled_rmse_sro_ppm: if n > 0 { (sq / n as f64).sqrt() } else { f64::NAN },
        avg_rmse_delay_samples: mean(&delay),
        max_rmse_delay_samples: delay.iter().copied().fold(f64::NAN, f64::max),
        bands,
        band_notes,
        sweep: sweep_rows(&recordings),
        failures: recordings.iter().filter(|r| r.failure.is_some()).count(),
        recordings,
    }
}

fn run_outputs(config: &ExperimentConfig) -> Result<Vec<RecordingOutput>> {
    config.validate()?;
    let work = || {
        (0..config.batch_size)
            .into_par_iter()
            .map(|i| evaluate_recording(i, config))
            .collect::<Vec<_>>()
    };
    if config.workers == 0 {
        Ok(work())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(pool.install(work))
    }
}

/// Run the batch and aggregate. Writes reports when `output_dir` is set.
pub fn run_batch(config: &ExperimentConfig) -> Result<MetricsReport> {
    let outputs = run_outputs(config)?;
    let first_trace = outputs
        .iter()
        .find_map(|o| Some((o.trace.clone()?, o.truth.clone()?)));
    let report = summarize(&config.name, outputs.into_iter().map(|o| o.result).collect());
    if let Some(dir) = &config.output_dir {
        write_report(dir, &report, first_trace.as_ref())?;
    }
    Ok(report)
}

/// STO error against signal length on a batch. Every recording is simulated
/// once at full length; shorter lengths use its leading part.
pub fn sto_length_sweep(config: &ExperimentConfig, minutes: &[f64]) -> Result<Vec<SweepRow>> {
    let cfg = ExperimentConfig {
        run_sto: true,
        sweep_minutes: minutes.to_vec(),
        output_dir: None,
        ..config.clone()
    };
    Ok(run_batch(&cfg)?.sweep)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl MetricsReport {
    pub fn write_recordings_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "index,seed,trajectory_std_ppm,rmse_sro_ppm,rmse_delay_samples,valid_segments,sto_truth_samples,failure"
        )?;
        for r in &self.recordings {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.index,
                r.seed,
                r.trajectory_std_ppm,
                opt(r.rmse_sro_ppm),
                opt(r.rmse_delay_samples),
                r.valid_segments,
                r.sto_truth,
                r.failure.as_deref().unwrap_or("").replace(',', ";")
            )?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "metric,value")?;
        writeln!(out, "recordings,{}", self.recordings.len())?;
        writeln!(out, "failures,{}", self.failures)?;
        writeln!(out, "avg_rmse_sro_ppm,{}", self.avg_rmse_sro_ppm)?;
        writeln!(out, "pooled_rmse_sro_ppm,{}", self.pooled_rmse_sro_ppm)?;
        writeln!(out, "avg_rmse_delay_samples,{}", self.avg_rmse_delay_samples)?;
        writeln!(out, "max_rmse_delay_samples,{}", self.max_rmse_delay_samples)?;
        Ok(())
    }

    pub fn write_bands_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "band_lo_ppm,band_hi_ppm,count,avg_rmse_sro_ppm")?;
        for b in &self.bands {
            writeln!(out, "{},{},{},{}", b.lo_ppm, b.hi_ppm, b.count, b.avg_rmse_sro_ppm)?;
        }
        Ok(())
    }

    pub fn write_sweep_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "minutes,index,seed,sto_truth_samples,sto_estimate_samples,abs_error_samples,inliers,observations,consensus")?;
        for r in &self.recordings {
            for s in &r.sto {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    s.minutes,
                    r.index,
                    r.seed,
                    r.sto_truth,
                    opt(s.estimate),
                    opt(s.abs_error),
                    s.inliers,
                    s.observations,
                    u8::from(s.consensus)
                )?;
            }
        }
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let mut s = format!(
            "{}: {} recordings ({} failed)\n  avg RMSE eps   {:.3} ppm (pooled {:.3})\n  avg RMSE delay {:.3} samples, max {:.3}\n",
            self.name,
            self.recordings.len(),
            self.failures,
            self.avg_rmse_sro_ppm,
            self.pooled_rmse_sro_ppm,
            self.avg_rmse_delay_samples,
            self.max_rmse_delay_samples
        );
        for b in &self.bands {
            s += &format!(
                "  sigma band [{}, {}) ppm: {} recordings, avg RMSE {:.3} ppm\n",
                b.lo_ppm, b.hi_ppm, b.count, b.avg_rmse_sro_ppm
            );
        }
        for n in &self.band_notes {
            s += &format!("  {n}\n");
        }
        for w in &self.sweep {
            s += &format!(
                "  STO at {} min: median |err| {:.2}, max {:.2}, {} above 10 samples, {} missing\n",
                w.minutes, w.median, w.max, w.over_10, w.missing
            );
        }
        for r in self.recordings.iter().filter(|r| r.failure.is_some()) {
            s += &format!("  recording {} failed: {}\n", r.index, r.failure.as_deref().unwrap_or(""));
        }
        s
    }
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(dir.join(name))?)
}

/// Write CSV tables and SVG plots of a report into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, example: Option<&(SroTrace, GroundTruth)>) -> Result<()> {
    fs::create_dir_all(dir)?;
    report.write_recordings_csv(create(dir, "recordings.csv")?)?;
    report.write_summary_csv(create(dir, "summary.csv")?)?;
    report.write_bands_csv(create(dir, "bands.csv")?)?;
    if !report.sweep.is_empty() {
        report.write_sweep_csv(create(dir, "sto_sweep.csv")?)?;
        let groups: Vec<(String, Vec<f64>)> = report
            .sweep
            .iter()
            .map(|w| (format!("{}", w.minutes), w.errors.clone()))
            .collect();
        fs::write(
            dir.join("sto_sweep.svg"),
            plot::box_plot("STO error vs signal length", "minutes", "|STO error| / samples", &groups),
        )?;
    }
    if let Some((trace, truth)) = example {
        trace.write_csv(create(dir, "trace_first.csv")?)?;
        let t = truth_at_segments(trace, &truth.sro_diff_trajectory);
        let est: Vec<(f64, f64)> = trace.valid_points().map(|p| (p.time_s, p.sro_ppm)).collect();
        let tru: Vec<(f64, f64)> = trace.points.iter().zip(&t).map(|(p, v)| (p.time_s, *v)).collect();
        fs::write(
            dir.join("trace_first.svg"),
            plot::line_plot(
                "SRO estimate, first recording",
                "time / s",
                "SRO / ppm",
                &[
                    plot::Series { label: "estimate", points: est },
                    plot::Series { label: "truth", points: tru },
                ],
            ),
        )?;
    }
    Ok(())
}
