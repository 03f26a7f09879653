use wasn_sync::dwacd::{run_dwacd, DwacdParams};
use wasn_sync::eval::{evaluate_recording, run_batch, write_report, ExperimentConfig};
use wasn_sync::io::{ingest_wav, write_wav, WavFormat};
use wasn_sync::scene::{generate_scenario, ScenarioFlags, ScenarioSpec};
use wasn_sync::sro_model::OuParams;

#[test]
fn constant_40_ppm_settles_within_half_a_ppm() {
    let mut spec = ScenarioSpec::random(ScenarioFlags::scenario(1).unwrap(), 300.0, 21);
    let step = spec.ou_params[0].step_duration;
    spec.ou_params = [OuParams::constant(-15.0, step), OuParams::constant(25.0, step)];
    let (rec, _) = generate_scenario(&spec).unwrap();
    let trace = run_dwacd(&rec.x1, &rec.x2, &DwacdParams::default()).unwrap();
    // steady state: second half of the recording
    let tail: Vec<f64> = trace.points[trace.points.len() / 2..]
        .iter()
        .filter(|p| p.valid)
        .map(|p| p.sro_ppm)
        .collect();
    assert!(tail.len() > 100, "{} valid segments", tail.len());
    let worst = tail.iter().map(|e| (e - 40.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.5, "max deviation {worst} ppm");
}

#[test]
fn sro_in_the_3_to_4_ppm_band_is_tracked() {
    // default process; recording 2 of this batch has a spread in [3, 4) ppm
    let cfg = ExperimentConfig {
        scenario: 2,
        ..ExperimentConfig::default()
    };
    let r = evaluate_recording(2, &cfg).result;
    assert!(r.failure.is_none(), "{:?}", r.failure);
    assert!((3.0..4.0).contains(&r.trajectory_std_ppm), "std {}", r.trajectory_std_ppm);
    let rmse = r.rmse_sro_ppm.unwrap();
    assert!(rmse <= 1.0, "RMSE {rmse} ppm");
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "small".into(),
        scenario: 4,
        batch_size: 2,
        base_seed: 8,
        duration_s: 20.0,
        run_sto: true,
        sweep_minutes: vec![0.2, 1.0 / 3.0],
        dwacd: DwacdParams {
            coarse_sync_window_s: 5.0,
            ..DwacdParams::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn identical_configs_write_identical_reports() {
    let cfg = small_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, workers) in dirs.iter().zip([1, 2]) {
        let cfg = ExperimentConfig { workers, ..cfg.clone() };
        let report = run_batch(&cfg).unwrap();
        let first = evaluate_recording(0, &cfg);
        let example = first.trace.zip(first.truth);
        write_report(d.path(), &report, example.as_ref()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 6, "{names:?}");
    for name in names {
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn report_and_trace_formats() {
    let cfg = small_config();
    let out = evaluate_recording(1, &cfg);
    let trace = out.trace.unwrap();
    let truth = out.truth.unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("segment_index,time_s,sro_ppm,valid"));
    assert_eq!(lines.count(), trace.points.len());

    let mut buf = Vec::new();
    truth.sro_diff_trajectory.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step_index,epsilon_ppm\n0,"));

    let mut buf = Vec::new();
    truth.activity_mask.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("frame_index,start_sample,active\n"));
}

#[test]
fn wav_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..4000).map(|i| 0.8 * (i as f64 * 0.013).sin()).collect();
    for (fmt, tol) in [(WavFormat::Pcm16, 1.0 / 32768.0), (WavFormat::Float32, 1e-7)] {
        let path = dir.path().join(format!("{fmt:?}.wav"));
        write_wav(&path, &x, 16000, fmt).unwrap();
        let y = ingest_wav(&path, 16000, false).unwrap();
        assert_eq!(y.len(), x.len());
        let worst = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= tol, "{fmt:?}: {worst}");
    }
}
