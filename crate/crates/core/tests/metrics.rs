mod common;

use resect_core::metrics::{path_deviation, polyline_deviation};
use resect_core::planning::demo::demo_plan;
use resect_core::rng;
use resect_core::sim::{simulate_cut_trace, Condition, NoiseModel, OperatorModel};

#[test]
fn deviation_matches_dense_oracle() {
    let mut rng = rng::seeded(11);
    for i in 0..20 {
        let (trace, path) = common::random_trace_and_path(&mut rng);
        let got = polyline_deviation(&trace, &path, 1.0).unwrap();
        let (mean, max) = common::dense_deviation(&trace, &path, 100_000);
        assert!((got.mean - mean).abs() < 0.01, "pair {i}: {} vs {mean}", got.mean);
        assert!((got.max - max).abs() < 0.05, "pair {i}: max {} vs {max}", got.max);
    }
}

#[test]
fn deviation_converges_on_demo_scene() {
    let plan = demo_plan().unwrap();
    let op = OperatorModel {
        condition: Condition::Unguided,
        lateral_error_sigma: 4.0,
        lateral_error_correlation_length: 15.0,
        systematic_bias: 1.0,
        cut_speed: 4.0,
        pause_count_mean: 2.0,
        pause_duration_mean: 3.0,
    };
    let noise = NoiseModel {
        tracker_jitter_sigma: 0.05,
        ..NoiseModel::default()
    };
    for seed in 0..10 {
        let trace = simulate_cut_trace(&plan, &op, &noise, seed).unwrap();
        let coarse = path_deviation(&trace, &plan, 1.0).unwrap().mean;
        let fine = path_deviation(&trace, &plan, 0.5).unwrap().mean;
        assert!((coarse - fine).abs() < 0.05, "seed {seed}: {coarse} vs {fine}");
    }
}

#[test]
fn exact_trace_takes_perimeter_over_speed() {
    let plan = demo_plan().unwrap();
    let trace = simulate_cut_trace(&plan, &OperatorModel::exact(Condition::Guided, 5.0), &NoiseModel::default(), 1).unwrap();
    let expected = plan.perimeter() / 5.0;
    assert!((resect_core::metrics::completion_time(&trace) - expected).abs() < 1e-9);
    let dev = path_deviation(&trace, &plan, 1.0).unwrap();
    assert!(dev.max < 1e-9);
}
