mod common;

use selfnorm::lrv::empirical_autocov;
use selfnorm::processes::calibration::CalibrationCache;
use selfnorm::processes::linear::LinearDecay;
use selfnorm::{CouplingMode, Process, ProcessClass, ProcessSpec, StreamKey, StreamRole};

fn key(seed: u64) -> StreamKey {
    StreamKey::new(seed, 0xfeed, 0, StreamRole::Path)
}

fn long_path(spec: &ProcessSpec, n: usize, seed: u64) -> Vec<f64> {
    let p = Process::build(spec, &CalibrationCache::default()).unwrap();
    p.generate_path(n, key(seed)).unwrap().values
}

#[test]
fn ar1_lag_one_autocovariance() {
    let x = long_path(&ProcessSpec::ar1(0.5), 1_000_000, 1);
    let g1: f64 = empirical_autocov(&x, 1).unwrap();
    assert!((g1 - 2.0 / 3.0).abs() < 0.01, "gamma(1) = {g1}");
}

#[test]
fn garch_second_moment() {
    let spec = ProcessSpec::new(ProcessClass::Garch {
        mu: 0.1,
        alpha: vec![0.2],
        beta: vec![0.3],
        strict_moments: false,
    });
    let x = long_path(&spec, 1_000_000, 2);
    let m2 = x.iter().map(|y| y * y).sum::<f64>() / x.len() as f64;
    assert!((m2 / 0.2 - 1.0).abs() < 0.02, "E Y^2 = {m2}");
}

#[test]
fn garch_without_feedback_is_scaled_noise() {
    let spec = ProcessSpec::new(ProcessClass::Garch {
        mu: 0.25,
        alpha: vec![0.0],
        beta: vec![0.0],
        strict_moments: false,
    });
    let x = long_path(&spec, 1000, 3);
    let iid = long_path(&ProcessSpec::ar1(0.0), 1000, 3);
    for (a, b) in x.iter().zip(&iid) {
        assert!((a - 0.5 * b).abs() < 1e-12);
    }
}

#[test]
fn ou_stationary_variance() {
    let spec = ProcessSpec::new(ProcessClass::OuSde {
        theta: 0.5,
        sigma_diff: 1.2,
        delta: 0.3,
    });
    let x = long_path(&spec, 1_000_000, 4);
    let var: f64 = empirical_autocov(&x, 0).unwrap();
    let target = 1.2 * 1.2 / 0.5;
    assert!((var / target - 1.0).abs() < 0.02, "variance {var} vs {target}");
}

#[test]
fn ou_coarse_sampling_is_nearly_independent() {
    let spec = ProcessSpec::new(ProcessClass::OuSde {
        theta: 10.0,
        sigma_diff: 1.0,
        delta: 1.0,
    });
    let x = long_path(&spec, 1_000_000, 5);
    let g0: f64 = empirical_autocov(&x, 0).unwrap();
    let g1: f64 = empirical_autocov(&x, 1).unwrap();
    assert!((g1 / g0).abs() < 0.01);
}

#[test]
fn polynomial_autocovariance_at_lag_five() {
    let spec = ProcessSpec::polynomial(1.5, 10_000);
    let p = Process::build(&spec, &CalibrationCache::default()).unwrap();
    let model = p.linear_model().unwrap();
    let n = 1_000_000;
    let x = p.generate_path(n, key(6)).unwrap().values;
    let g5: f64 = empirical_autocov(&x, 5).unwrap();
    // Bartlett variance of the lag-5 sample autocovariance
    let m = model.memory().unwrap() as isize;
    let g = |h: isize| model.autocov(h.unsigned_abs());
    let var: f64 = (-m..=m).map(|k| g(k) * g(k) + g(k + 5) * g(k - 5)).sum::<f64>() / n as f64;
    let z = (g5 - g(5)).abs() / var.sqrt();
    assert!(z < 3.0, "gamma(5) {g5} vs {}, z = {z}", g(5));
}

#[test]
fn single_coefficient_is_iid() {
    let spec = ProcessSpec::new(ProcessClass::Linear {
        decay: LinearDecay::Explicit { coefficients: vec![1.0] },
        sigma_eps: 1.0,
    });
    let p = Process::build(&spec, &CalibrationCache::default()).unwrap();
    assert_eq!(p.linear_model().unwrap().autocov(1), 0.0);
    let x = p.generate_path(200_000, key(7)).unwrap().values;
    let g1: f64 = empirical_autocov(&x, 1).unwrap();
    assert!(g1.abs() < 0.01);
}

#[test]
fn moving_average_coupling_beyond_memory_is_exact() {
    let spec = ProcessSpec::new(ProcessClass::Linear {
        decay: LinearDecay::Explicit { coefficients: vec![1.0, 0.6, -0.3] },
        sigma_eps: 1.0,
    });
    let p = Process::build(&spec, &CalibrationCache::default()).unwrap();
    for r in 0..50 {
        let pair = p
            .generate_coupled(20, 5, CouplingMode::SingleSwap, key(8).with_replication(r))
            .unwrap();
        assert_eq!(pair.x, pair.x_prime);
        let near = p
            .generate_coupled(20, 2, CouplingMode::SingleSwap, key(8).with_replication(r))
            .unwrap();
        assert_ne!(near.x, near.x_prime);
    }
}

#[test]
fn class_presets_build() {
    for name in common::CLASS_PRESETS {
        let spec = common::class_spec(name);
        let p = Process::build(&spec, &CalibrationCache::new(200_000)).unwrap();
        let x = p.generate_path(100, key(9)).unwrap().values;
        assert!(x.iter().all(|v| v.is_finite()), "{name}");
    }
}

#[test]
fn violated_conditions_are_named() {
    let err = Process::build(&ProcessSpec::ar1(1.0), &CalibrationCache::default())
        .unwrap_err()
        .to_string();
    assert!(err.contains("|phi| < 1"), "{err}");
    let garch = ProcessSpec::new(ProcessClass::Garch {
        mu: 0.1,
        alpha: vec![0.5],
        beta: vec![0.4],
        strict_moments: false,
    });
    let err = Process::build(&garch, &CalibrationCache::default()).unwrap_err().to_string();
    assert!(err.contains("gamma_C"), "{err}");
}
