use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wasn-sync"))
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().env("WASN_SYNC_OUT", out).args(args).output().unwrap()
}

fn example_config() -> String {
    format!("{}/../../config/example.toml", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn pipeline_recovers_sto() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let s = |p: &str| out.join(p).to_str().unwrap().to_string();

    let o = run(out, &["simulate", "--scenario", "4", "--duration-s", "60", "--seed", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["x1.wav", "x2.wav", "scenario.toml", "sro_trajectory.csv", "delay_node2.csv", "activity.csv", "distances.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traj = std::fs::read_to_string(out.join("sro_trajectory.csv")).unwrap();
    assert!(traj.starts_with("step_index,epsilon_ppm\n"));

    let o = run(out, &["estimate-sro", &s("x1.wav"), &s("x2.wav")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("segment_index,time_s,sro_ppm,valid\n"));
    assert!(out.join("trace.svg").exists());

    let o = run(out, &["compensate", &s("x2.wav"), &s("trace.csv")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(
        out,
        &["estimate-sto", &s("x1.wav"), &s("x2_compensated.wav"), "--distances", &s("distances.csv"), "-c", &example_config()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let truth: f64 = std::fs::read_to_string(out.join("sto.txt")).unwrap().trim().parse().unwrap();
    let sto = std::fs::read_to_string(out.join("sto.csv")).unwrap();
    let est: f64 = sto.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((est - truth).abs() < 10.0, "{est} vs {truth}");
}

#[test]
fn out_dir_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = run(
        env_dir.path(),
        &["simulate", "--duration-s", "8", "--out-dir", flag_dir.path().to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(flag_dir.path().join("x1.wav").exists());
    assert!(!env_dir.path().join("x1.wav").exists());
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "scenario = 7\n").unwrap();
    let o = run(dir.path(), &["evaluate", "-c", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&bad, "batch_size = \"many\"\n").unwrap();
    let o = run(dir.path(), &["evaluate", "-c", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["simulate", "--scenario", "9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimation_failure_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    // one second is shorter than a single estimator span
    let short = out.join("short.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&short, spec).unwrap();
    for i in 0..16000 {
        w.write_sample(((i as f64 * 0.1).sin() * 8000.0) as i16).unwrap();
    }
    w.finalize().unwrap();
    let o = run(out, &["estimate-sro", short.to_str().unwrap(), short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn example_config_drives_a_small_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    let text = std::fs::read_to_string(example_config())
        .unwrap()
        .replace("duration_s = 300.0", "duration_s = 30.0")
        .replace("sweep_minutes = [1.0, 2.0, 3.0, 4.0, 5.0]", "sweep_minutes = [0.25, 0.5]")
        .replace("coarse_sync_window_s = 20.0", "coarse_sync_window_s = 5.0");
    std::fs::write(&cfg, text).unwrap();
    let o = run(dir.path(), &["evaluate", "-c", cfg.to_str().unwrap(), "--batch-size", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("scenario-4");
    for f in ["summary.csv", "recordings.csv", "bands.csv", "sto_sweep.csv", "sto_sweep.svg", "trace_first.svg"] {
        assert!(report.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("avg RMSE eps"), "{stdout}");
}
