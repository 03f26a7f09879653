//! Command-line front end: simulate scenes, estimate and compensate SRO and
//! STO, and run evaluation batches.
//!
//! Exit codes: 0 success, 1 estimation failure, 2 invalid config or arguments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use wasn_sync::async_model::{accumulated_delay, frames_for_length, AsyncSpec, RESAMPLER_FRAME_SHIFT, RESAMPLER_FRAME_SIZE};
use wasn_sync::dwacd::{coarse_sync, run_dwacd, SroTrace};
use wasn_sync::eval::{plot, run_batch, ExperimentConfig};
use wasn_sync::io::{ingest_wav, load_toml, write_wav, WavFormat};
use wasn_sync::sad::detect_activity;
use wasn_sync::scene::{generate_scenario, ScenarioSpec};
use wasn_sync::sto::{
    collect_observations, compensate_with_trace, ransac_sto, write_observations_csv, StoParams,
    TableDistanceProvider,
};
use wasn_sync::{Error, Result};

const OUT_ENV: &str = "WASN_SYNC_OUT";

#[derive(Parser)]
#[command(name = "wasn-sync", version, about = "SRO/STO simulation and estimation for two-node acoustic sensor networks")]
struct Cli {
    /// Output directory.
    #[arg(long, short, global = true, env = OUT_ENV, default_value = "wasn-sync-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario to a WAV pair plus ground truth.
    Simulate(SimulateArgs),
    /// Estimate the SRO trace of a WAV pair.
    EstimateSro(EstimateSroArgs),
    /// Resample the second recording with an SRO trace.
    Compensate(CompensateArgs),
    /// Estimate the STO of an SRO-compensated pair from source-node distances.
    EstimateSto(EstimateStoArgs),
    /// Run a scenario batch and write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pcm16,
    Float32,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pcm16 => WavFormat::Pcm16,
            Format::Float32 => WavFormat::Float32,
        }
    }
}

#[derive(Args)]
struct ConfigArg {
    /// TOML config file; see config/example.toml.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Scenario 1 to 4 for a random scene; ignored when the config has a [scene] table.
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
}

#[derive(Args)]
struct EstimateSroArgs {
    x1: PathBuf,
    x2: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Resample inputs at another rate instead of rejecting them.
    #[arg(long)]
    resample: bool,
}

#[derive(Args)]
struct CompensateArgs {
    x2: PathBuf,
    trace: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
}

#[derive(Args)]
struct EstimateStoArgs {
    x1: PathBuf,
    /// SRO-compensated second recording.
    x2: PathBuf,
    /// CSV with rows start_sample,end_sample,d1_m,d2_m.
    #[arg(long)]
    distances: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

/// Contents of a config file: experiment settings at the top level with
/// optional `[dwacd]` and `[sto]` tables, plus an optional fixed `[scene]`.
#[derive(Deserialize, Default)]
struct ConfigFile {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    scene: Option<ScenarioSpec>,
}

fn load_config(arg: &ConfigArg) -> Result<ConfigFile> {
    let cfg: ConfigFile = match &arg.config {
        Some(p) => load_toml(p)?,
        None => ConfigFile::default(),
    };
    cfg.experiment.dwacd.validate().map_err(as_config)?;
    Ok(cfg)
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        e => e,
    }
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

fn rate(fs: f64) -> u32 {
    fs.round() as u32
}

fn simulate(out: &Path, args: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let spec = match cfg.scene {
        Some(s) => s,
        None => {
            let mut exp = cfg.experiment;
            if let Some(n) = args.scenario {
                exp.scenario = n;
                exp.flags = None;
            }
            if let Some(d) = args.duration_s {
                exp.duration_s = d;
            }
            if let Some(s) = args.seed {
                exp.base_seed = s;
            }
            exp.validate().map_err(as_config)?;
            exp.scenario_spec(0)?
        }
    };
    spec.validate().map_err(as_config)?;
    let (rec, truth) = generate_scenario(&spec)?;
    fs::create_dir_all(out)?;
    let sr = rate(rec.sample_rate);
    write_wav(&out.join("x1.wav"), &rec.x1, sr, args.format.into())?;
    write_wav(&out.join("x2.wav"), &rec.x2, sr, args.format.into())?;
    fs::write(
        out.join("scenario.toml"),
        toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    truth.sro_diff_trajectory.write_csv(create(out, "sro_trajectory.csv")?)?;
    for (i, t) in truth.node_trajectories.iter().enumerate() {
        t.write_csv(create(out, &format!("sro_node{}.csv", i + 1))?)?;
        let a = AsyncSpec::new(spec.sto_s[i], t.clone(), rec.sample_rate)?;
        let frames = frames_for_length(rec.x1.len(), RESAMPLER_FRAME_SIZE, RESAMPLER_FRAME_SHIFT);
        accumulated_delay(&a, frames, RESAMPLER_FRAME_SIZE, RESAMPLER_FRAME_SHIFT)?
            .write_csv(create(out, &format!("delay_node{}.csv", i + 1))?)?;
    }
    truth.write_activity_csv(create(out, "activity.csv")?)?;
    truth.write_positions_csv(create(out, "positions.csv")?)?;
    TableDistanceProvider::from_truth(&truth).write_csv(create(out, "distances.csv")?)?;
    fs::write(out.join("sto.txt"), format!("{}\n", truth.sto_12))?;
    println!(
        "wrote {} s scene to {} (STO {:.2} samples)",
        spec.duration_s,
        out.display(),
        truth.sto_12
    );
    Ok(())
}

fn estimate_sro(out: &Path, args: &EstimateSroArgs) -> Result<()> {
    let p = load_config(&args.config)?.experiment.dwacd;
    let x1 = ingest_wav(&args.x1, rate(p.sample_rate), args.resample)?;
    let x2 = ingest_wav(&args.x2, rate(p.sample_rate), args.resample)?;
    let trace = run_dwacd(&x1, &x2, &p)?;
    trace.write_csv(create(out, "trace.csv")?)?;
    let pts: Vec<(f64, f64)> = trace.valid_points().map(|p| (p.time_s, p.sro_ppm)).collect();
    fs::write(
        out.join("trace.svg"),
        plot::line_plot("SRO estimate", "time / s", "SRO / ppm", &[plot::Series { label: "estimate", points: pts }]),
    )?;
    let last = trace.valid_points().last().map(|p| p.sro_ppm);
    match last {
        Some(v) => println!("coarse offset {} samples, final SRO {v:.3} ppm", trace.coarse_offset),
        None => println!("coarse offset {} samples, no valid SRO estimate", trace.coarse_offset),
    }
    Ok(())
}

fn compensate(out: &Path, args: &CompensateArgs) -> Result<()> {
    let p = load_config(&args.config)?.experiment.dwacd;
    let x2 = ingest_wav(&args.x2, rate(p.sample_rate), false)?;
    let trace = SroTrace::read_csv(&fs::read_to_string(&args.trace)?, &p)?;
    if trace.points.is_empty() {
        return Err(Error::Config("trace has no segments".into()));
    }
    let y = compensate_with_trace(&x2, &trace)?;
    fs::create_dir_all(out)?;
    write_wav(&out.join("x2_compensated.wav"), &y, rate(p.sample_rate), args.format.into())?;
    println!("wrote {}", out.join("x2_compensated.wav").display());
    Ok(())
}

fn estimate_sto(out: &Path, args: &EstimateStoArgs) -> Result<()> {
    let cfg = load_config(&args.config)?.experiment;
    let p = cfg.dwacd;
    let sto_params = StoParams {
        sample_rate: p.sample_rate,
        ..cfg.sto
    };
    let x1 = ingest_wav(&args.x1, rate(p.sample_rate), false)?;
    let x2 = ingest_wav(&args.x2, rate(p.sample_rate), false)?;
    let table = TableDistanceProvider::parse_csv(&fs::read_to_string(&args.distances)?)?;
    let mask = detect_activity(&x1, p.sad_frame_size, p.sad_frame_shift, p.sad_threshold_db)?;
    let coarse = coarse_sync(&x1, &x2, &mask, &p)?;
    let obs = collect_observations(&x1, &x2, &table, &mask, coarse, &sto_params)?;
    write_observations_csv(&obs, create(out, "observations.csv")?)?;
    let est = match ransac_sto(&obs, &sto_params) {
        Err(Error::NoConsensus { best_effort, inliers, total }) => {
            best_effort.write_csv(create(out, "sto.csv")?)?;
            return Err(Error::NoConsensus { inliers, total, best_effort });
        }
        r => r?,
    };
    est.write_csv(create(out, "sto.csv")?)?;
    println!(
        "STO {:.2} samples ({} of {} observations inliers)",
        est.sto, est.inlier_count, est.observation_count
    );
    Ok(())
}

fn evaluate(out: &Path, args: &EvaluateArgs) -> Result<bool> {
    let mut exp = load_config(&args.config)?.experiment;
    if let Some(n) = args.batch_size {
        exp.batch_size = n;
    }
    if exp.output_dir.is_none() {
        exp.output_dir = Some(out.join(&exp.name));
    }
    exp.validate().map_err(as_config)?;
    let report = run_batch(&exp)?;
    print!("{}", report.summary_text());
    Ok(report.failures == 0)
}

fn run(cli: &Cli) -> Result<bool> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate(a) => simulate(out, a).map(|_| true),
        Command::EstimateSro(a) => estimate_sro(out, a).map(|_| true),
        Command::Compensate(a) => compensate(out, a).map(|_| true),
        Command::EstimateSto(a) => estimate_sto(out, a).map(|_| true),
        Command::Evaluate(a) => evaluate(out, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
