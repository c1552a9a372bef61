//! Generated runs pushed through the text formats and the aggregation and
//! fitting code must land on the generator's ground truth.

use gpuscale::metrics::{
    normalize_runs, run_metrics, AggregationOptions, Baseline, EnergyMethod, RunMetrics,
};
use gpuscale::scaling::{
    detect_saturation_knee, fit_power_law, predict_epoch_time, speedup, ScalingPoint,
    SpeedupSource, DEFAULT_KNEE_THRESHOLD,
};
use gpuscale::synth::{
    generate_family, generate_run, generate_scaling_series, Knee, SettingProfile, SyntheticSpec,
};
use gpuscale::telemetry::{parse_epoch_windows_str, parse_manifest_str, parse_telemetry_str};
use gpuscale::tradeoff::{build_tradeoff_curve, select_optimal_cap};
use gpuscale::Validation;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn through_files(run: &gpuscale::synth::SyntheticRun, options: AggregationOptions) -> RunMetrics {
    let telemetry = parse_telemetry_str(&run.telemetry_csv(), Validation::Strict).unwrap();
    assert!(telemetry.rejected.is_empty());
    let windows = parse_epoch_windows_str(&run.epochs_csv()).unwrap();
    let manifest = parse_manifest_str(&run.manifest_text()).unwrap();
    assert_eq!(manifest, run.manifest);
    run_metrics(manifest, &telemetry.samples, &windows, options).unwrap()
}

fn jittery_spec() -> SyntheticSpec {
    let mut spec = SyntheticSpec::new("jitter", 120.0, 0.7, vec![2, 4, 8]);
    spec.noise_sigma = 0.1;
    spec.sampling_interval_s = 0.8;
    spec.settings[0].mean_draw_w = 210.0;
    spec.settings[0].draw_jitter_w = 25.0;
    spec.seed = 1234;
    spec
}

#[test]
fn metrics_reproduce_ground_truth() {
    let spec = jittery_spec();
    for run in generate_family(&spec).unwrap() {
        let got = through_files(&run, AggregationOptions::default());
        let want = &run.ground_truth.metrics;
        assert_eq!(got.epochs.len(), want.epochs.len());
        for (g, w) in got.epochs.iter().zip(&want.epochs) {
            assert_eq!(g.wall_time_s, w.wall_time_s);
            assert!(
                rel(g.energy_j, w.energy_j) < 1e-9,
                "{} vs {}",
                g.energy_j,
                w.energy_j
            );
            assert!(rel(g.mean_sm_util, w.mean_sm_util) < 1e-9);
            assert!(rel(g.mean_mem_util, w.mean_mem_util) < 1e-9);
            assert!(rel(g.cv_sm_util.unwrap(), w.cv_sm_util.unwrap()) < 1e-9);
            assert!(rel(g.cv_mem_util.unwrap(), w.cv_mem_util.unwrap()) < 1e-9);
            for (gp, wp) in g.per_gpu.iter().zip(&w.per_gpu) {
                assert_eq!(gp.samples, wp.samples);
                assert!(rel(gp.energy_j, wp.energy_j) < 1e-9);
            }
        }
        assert!(rel(got.total_energy_j, want.total_energy_j) < 1e-9);
        assert!(rel(got.mean_epoch_time_s, want.mean_epoch_time_s) < 1e-12);
    }
}

#[test]
fn mean_power_energy_for_constant_draw() {
    let mut spec = SyntheticSpec::new("flat", 100.0, 0.5, vec![2]);
    spec.settings[0].mean_draw_w = 200.0;
    let run = generate_run(&spec, 2, spec.settings[0].key()).unwrap();
    let mean_power = through_files(
        &run,
        AggregationOptions {
            energy: EnergyMethod::MeanPower,
            ..Default::default()
        },
    );
    let trapezoid = through_files(&run, AggregationOptions::default());
    assert!(rel(mean_power.total_energy_j, trapezoid.total_energy_j) < 1e-12);
}

#[test]
fn noiseless_pipeline_recovers_law() {
    let mut spec = SyntheticSpec::new("clean", 800.0, 0.82, vec![2, 4, 8, 16, 32, 64]);
    spec.settings[0].draw_jitter_w = 10.0;
    let points: Vec<ScalingPoint> = generate_family(&spec)
        .unwrap()
        .iter()
        .map(|run| {
            let m = through_files(run, AggregationOptions::default());
            ScalingPoint::new(m.manifest.num_gpus, m.mean_epoch_time_s)
        })
        .collect();
    let fit = fit_power_law(&points).unwrap();
    assert!(rel(fit.alpha, 800.0) < 1e-6);
    assert!(rel(fit.beta, 0.82) < 1e-6);
}

#[test]
fn held_out_prediction_matches_generator() {
    let spec = SyntheticSpec::new("holdout", 500.0, 0.82, vec![2, 4, 8, 12, 16, 32]);
    let series = generate_scaling_series(&spec).unwrap();
    let train: Vec<_> = series
        .points
        .iter()
        .copied()
        .filter(|p| p.num_gpus != 12)
        .collect();
    let fit = fit_power_law(&train).unwrap();
    let p = predict_epoch_time(&fit, 12).unwrap();
    assert!(!p.extrapolated);
    assert!(rel(p.epoch_time_s, spec.noiseless_epoch_time(12)) < 1e-9);
}

#[test]
fn knee_series_fit_on_prefix() {
    let ns: Vec<u32> = (1..=9).map(|k| 1 << k).collect();
    let mut spec = SyntheticSpec::new("SchNet-like", 1000.0, 0.42, ns);
    spec.knee = Some(Knee {
        gpus: 64,
        floor_s: None,
    });
    spec.noise_sigma = 0.03;
    spec.seed = 5;
    let series = generate_scaling_series(&spec).unwrap();
    let prefix: Vec<_> = series
        .points
        .iter()
        .copied()
        .filter(|p| p.num_gpus <= 64)
        .collect();
    let fit = fit_power_law(&prefix).unwrap();
    assert!((fit.beta - 0.42).abs() <= 2.0 * fit.beta_stderr, "{fit:?}");
    let full = fit_power_law(&series.points).unwrap();
    assert!(full.r_squared < fit.r_squared);
    assert_eq!(
        detect_saturation_knee(&series.points, DEFAULT_KNEE_THRESHOLD).unwrap(),
        Some(64)
    );
}

#[test]
fn dimenet_like_speedup_modes() {
    let ns = vec![2, 4, 8, 16, 32, 64, 128, 256, 416];
    let spec = SyntheticSpec::new("DimeNet-like", 3000.0, 0.82, ns.clone());
    let fit = fit_power_law(&generate_scaling_series(&spec).unwrap().points).unwrap();
    let s = speedup(SpeedupSource::Fit(&fit), 2, 416).unwrap();
    assert!((s - 208f64.powf(0.82)).abs() < 1e-6);
    assert!((s - 79.58).abs() < 0.01);

    // A hard floor from 128 GPUs on caps the measured speedup at 64^beta.
    let mut kneed = spec.clone();
    kneed.knee = Some(Knee {
        gpus: 128,
        floor_s: None,
    });
    let measured = generate_scaling_series(&kneed).unwrap().points;
    let raw = speedup(SpeedupSource::Measured(&measured), 2, 416).unwrap();
    assert!(raw < s);
    assert!((raw - 64f64.powf(0.82)).abs() < 1e-9, "{raw}");
}

fn cap_family() -> SyntheticSpec {
    let mut spec = SyntheticSpec::new("capped", 400.0, 0.6, vec![128]);
    let setting = |cap: f64, speed: f64, energy: f64| SettingProfile {
        power_cap_w: cap,
        clock_cap_mhz: 1380.0,
        // relative energy = (draw ratio) / (relative speed)
        mean_draw_w: 240.0 * energy * speed,
        draw_jitter_w: 0.0,
        alpha: Some(400.0 / speed),
        beta: None,
    };
    spec.settings = vec![
        setting(250.0, 1.0, 1.0),
        setting(200.0, 0.97, 0.88),
        setting(100.0, 0.65, 0.80),
    ];
    spec
}

#[test]
fn tradeoff_curve_matches_generator_ratios() {
    let spec = cap_family();
    let runs: Vec<RunMetrics> = generate_family(&spec)
        .unwrap()
        .iter()
        .map(|r| through_files(r, AggregationOptions::default()))
        .collect();
    let curve = build_tradeoff_curve(&runs, 250.0).unwrap();
    let expected = [(250.0, 1.0, 1.0), (200.0, 0.97, 0.88), (100.0, 0.65, 0.80)];
    for (p, (cap, s, e)) in curve.iter().zip(expected) {
        assert_eq!(p.power_cap_w, cap);
        assert!(rel(p.relative_speed, s) < 1e-9, "{p:?}");
        assert!(rel(p.relative_energy, e) < 1e-9, "{p:?}");
    }
    let rec = select_optimal_cap(&curve, 0.05).unwrap();
    assert_eq!(rec.chosen_cap_w, 200.0);
    assert!(rec.energy_saving_fraction >= 0.10);

    let baseline_only = build_tradeoff_curve(&runs[..1], 250.0).unwrap();
    assert_eq!(baseline_only.len(), 1);
    assert_eq!(
        (
            baseline_only[0].relative_speed,
            baseline_only[0].relative_energy
        ),
        (1.0, 1.0)
    );
}

#[test]
fn tradeoff_rejects_mixed_gpu_counts() {
    let mut spec = cap_family();
    spec.gpu_counts = vec![2, 4];
    let runs: Vec<RunMetrics> = generate_family(&spec)
        .unwrap()
        .into_iter()
        .map(|r| r.ground_truth.metrics)
        .collect();
    assert!(build_tradeoff_curve(&runs, 250.0).is_err());
}

#[test]
fn gpu_count_normalization() {
    let spec = SyntheticSpec::new("scale", 100.0, 1.0, vec![2, 4, 8]);
    let runs: Vec<RunMetrics> = generate_family(&spec)
        .unwrap()
        .into_iter()
        .map(|r| r.ground_truth.metrics)
        .collect();
    let pts = normalize_runs(&runs, Baseline::SmallestGpuCount).unwrap();
    // Ideal scaling at constant per-GPU power: twice the speed, same energy.
    assert!(rel(pts[1].relative_speed, 2.0) < 1e-12);
    assert!(rel(pts[1].relative_energy, 1.0) < 1e-9);
}
