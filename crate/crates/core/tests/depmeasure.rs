use selfnorm::analytic::{lambda_closed, theta_closed};
use selfnorm::depmeasure::{coefficient_grid, fit_estimates, lambda_hat, theta_hat, DecayModel};
use selfnorm::processes::calibration::CalibrationCache;
use selfnorm::{CouplingMode, Process, ProcessClass, ProcessSpec, StreamKey, StreamRole};

fn key() -> StreamKey {
    StreamKey::new(17, 5, 0, StreamRole::Coupling)
}

fn rho_of(spec: &ProcessSpec) -> f64 {
    let p = Process::build(spec, &CalibrationCache::default()).unwrap();
    let est = coefficient_grid(&p, &[1, 2, 3, 4, 5, 6, 8], 2.0, 20_000, CouplingMode::SingleSwap, key())
        .unwrap();
    match fit_estimates(&est).unwrap().fitted_model {
        DecayModel::Geometric { rho } => rho,
        other => panic!("expected geometric decay, got {other:?}"),
    }
}

#[test]
fn ar1_fitted_rate() {
    let rho = rho_of(&ProcessSpec::ar1(0.5));
    assert!((rho - 0.5).abs() < 0.01, "rho = {rho}");
}

#[test]
fn ou_fitted_rate() {
    let spec = ProcessSpec::new(ProcessClass::OuSde {
        theta: 1.0,
        sigma_diff: 1.0,
        delta: 0.5,
    });
    let rho = rho_of(&spec);
    let target = (-0.5f64).exp();
    assert!((rho / target - 1.0).abs() < 0.02, "rho = {rho} vs {target}");
}

#[test]
fn ar1_coefficients_near_closed_forms() {
    let spec = ProcessSpec::ar1(0.7);
    let p = Process::build(&spec, &CalibrationCache::default()).unwrap();
    for l in [1, 4] {
        let t = theta_hat(&p, l, 2.0, 20_000, key()).unwrap();
        let exact = theta_closed(&spec, l, 2.0).unwrap();
        assert!((t.estimate - exact).abs() < 4.0 * t.stderr, "theta {l}: {} vs {exact}", t.estimate);
        let lam = lambda_hat(&p, l, 2.0, 20_000, key()).unwrap();
        let exact = lambda_closed(&spec, l, 2.0).unwrap();
        assert!((lam.estimate - exact).abs() < 4.0 * lam.stderr, "lambda {l}: {} vs {exact}", lam.estimate);
    }
}

#[test]
fn too_few_reps_rejected() {
    let p = Process::build(&ProcessSpec::ar1(0.5), &CalibrationCache::default()).unwrap();
    assert!(theta_hat(&p, 1, 2.0, 10, key()).is_err());
}
