//! Oracle suite behind `selfnorm selftest`.
//!
//! Every check compares a library routine against an independent
//! computation (direct summation, exact arithmetic or reference values).
//! The report text is deterministic.

use std::fmt::Write as _;

use crate::analytic::{bias_rate_table, gamma_linear, LinearModel};
use crate::depmeasure::{fit_decay, DecayModel};
use crate::lrv::{
    autocovariances, bandwidth_cap, linearization_check, lrv_with_bandwidth,
    sum_y_linearized, sum_y_linearized_expanded, BandwidthRule,
};
use crate::metrics::{
    ks_distance, lq_distance, normal_cdf, normal_quantile, w1_distance, DistanceReport,
    GaussianRef, MetricKind,
};
use crate::montecarlo::{fit_rate, render_csv, run_experiment, ExperimentPlan, Reference};
use crate::processes::{
    garch_gamma_c, CalibrationCache, CouplingMode, InnovationLaw, LinearDecay, Process,
    ProcessClass, ProcessSpec,
};
use crate::rng::{derive_stream, StreamKey, StreamRole};

/// Options for [`run_selftest`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Fault injection: perturb the normal CDF seen by the accuracy check.
    pub corrupt_normal_cdf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}: {}", c.name, c.detail);
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        s
    }
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn close(&mut self, name: &'static str, got: f64, want: f64, rel: f64) {
        let err = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
        self.checks.push(CheckResult {
            name,
            passed: err <= rel,
            detail: format!("got {got:.12e}, want {want:.12e}, rel err {err:.2e} (tol {rel:.0e})"),
        });
    }

    fn truth(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(CheckResult { name, passed, detail });
    }
}

fn brute_gamma(a: &[f64], h: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if i + h < a.len() {
            s += a[i] * a[i + h];
        }
    }
    s
}

fn poly_coeffs(q: f64, m: usize) -> Vec<f64> {
    (0..m).map(|i| (1.0 + i as f64).powf(-q)).collect()
}

/// Runs every check.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let mut s = Suite { checks: Vec::new() };
    let cdf = |x: f64| {
        let v = normal_cdf(x);
        if opts.corrupt_normal_cdf {
            v + 1e-6 * (-x * x).exp()
        } else {
            v
        }
    };

    // distribution function and quantile
    let reference = [
        (0.0, 0.5),
        (1.0, 0.841_344_746_068_542_9),
        (-1.96, 0.024_997_895_148_220_435),
        (3.0, 0.998_650_101_968_369_9),
        (-5.0, 2.866_515_718_791_939e-7),
        (-8.0, 6.220_960_574_271_785e-16),
    ];
    let worst = reference
        .iter()
        .map(|(x, p)| ((cdf(*x) - p) / p).abs())
        .fold(0.0, f64::max);
    s.truth(
        "normal_cdf accuracy",
        worst < 1e-14,
        format!("max rel err {worst:.2e} over 6 reference points"),
    );
    let sym = (1..=80)
        .map(|i| {
            let x = i as f64 / 10.0;
            (normal_cdf(x) + normal_cdf(-x) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    s.truth("normal_cdf symmetry", sym < 1e-15, format!("max |Φ(x)+Φ(−x)−1| = {sym:.2e}"));
    s.close(
        "normal_quantile reference",
        normal_quantile(0.975).unwrap_or(f64::NAN),
        1.959_963_984_540_054,
        1e-14,
    );
    let rt = (1..1000)
        .map(|i| {
            let u = i as f64 / 1000.0;
            (normal_cdf(normal_quantile(u).unwrap_or(f64::NAN)) - u).abs()
        })
        .fold(0.0, f64::max);
    s.truth("normal_quantile round trip", rt < 1e-9, format!("max error {rt:.2e}"));

    // analytic closed forms against direct sums
    let geo: Vec<f64> = (0..80).map(|i| 0.5f64.powi(i)).collect();
    s.close("gamma ar1 h=0", gamma_linear(&geo, 1.0, 0), 4.0 / 3.0, 1e-12);
    s.truth(
        "gamma beyond memory",
        gamma_linear(&geo, 1.0, 80) == 0.0,
        "γ(M) = 0".into(),
    );
    let poly = poly_coeffs(1.5, 10_000);
    s.close("gamma polynomial h=10", gamma_linear(&poly, 1.0, 10), brute_gamma(&poly, 10), 1e-12);
    let ar1 = LinearModel::Ar1 { phi: 0.5, sigma: 1.0 };
    s.close("sigma_sq ar1", ar1.sigma_sq(), 4.0, 1e-14);
    s.close("sigma_b_sq ar1 b=2", ar1.sigma_b_sq(2), 10.0 / 3.0, 1e-14);
    let short = poly_coeffs(1.5, 400);
    let filter = LinearModel::Filter { coeffs: short.clone(), sigma: 1.0 };
    let worst_sb = [0usize, 1, 5, 37, 100, 399]
        .iter()
        .map(|&b| {
            let direct = brute_gamma(&short, 0) + 2.0 * (1..=b).map(|h| brute_gamma(&short, h)).sum::<f64>();
            ((filter.sigma_b_sq(b) - direct) / direct).abs()
        })
        .fold(0.0, f64::max);
    s.truth("sigma_b_sq filter", worst_sb < 1e-12, format!("max rel err {worst_sb:.2e}"));
    let tail: f64 = 2.0 * (21..200).map(|h| (4.0 / 3.0) * 0.5f64.powi(h)).sum::<f64>();
    s.close("bias ar1 b=20", ar1.bias(20), tail, 1e-12);
    s.truth("bias full memory", filter.bias(399) == 0.0, "σ² − σ_{M−1}² = 0".into());
    s.close("theta ar1 l=3", ar1.theta(3, 2.0), 0.125 * 2f64.sqrt(), 1e-14);
    s.close("lambda ar1 l=3", ar1.lambda(3, 2.0), 0.125 * (2.0f64 / 0.75).sqrt(), 1e-14);
    let dom = (0..100).all(|l| {
        let lam = filter.lambda(l, 2.0).powi(2);
        let bound: f64 = (l..400).map(|j| filter.theta(j, 2.0).powi(2)).sum();
        lam <= bound * (1.0 + 1e-12)
    });
    s.truth("lambda dominated by theta tail", dom, "λ_l² ≤ Σ_{j≥l} θ_j² for l < 100".into());
    let table = bias_rate_table(
        &LinearModel::Filter { coeffs: poly.clone(), sigma: 1.0 },
        &BandwidthRule::mse_optimal(1.0),
        &[1 << 10, 1 << 14, 1 << 18],
    );
    let increasing = table
        .as_ref()
        .map(|t| t.windows(2).all(|w| w[1].scaled > w[0].scaled))
        .unwrap_or(false);
    s.truth("bias table mse_optimal increasing", increasing, "√n·bias at n = 2^10, 2^14, 2^18".into());

    // estimator
    let g = autocovariances(&[1.0, -1.0, 1.0, -1.0], 1).unwrap_or_default();
    s.truth(
        "autocovariance hand case",
        g == vec![1.0, -0.75],
        format!("γ̂ = {g:?}"),
    );
    let lrv = lrv_with_bandwidth(&[1.0, -1.0, 1.0, -1.0], 1).map(|e| e.sigma_hat_sq);
    s.truth("lrv hand case", lrv == Ok(-0.5), format!("σ̂² = {lrv:?}"));
    let bw = (
        BandwidthRule::mse_optimal(1.0).bandwidth(1000),
        BandwidthRule::mse_optimal(1.0).bandwidth(1024),
    );
    s.truth("bandwidth mse_optimal", bw == (Ok(10), Ok(11)), format!("b(1000), b(1024) = {bw:?}"));
    s.truth("bandwidth cap", bandwidth_cap(8192) == Some(1), format!("cap(8192) = {:?}", bandwidth_cap(8192)));

    let mut stream = derive_stream(StreamKey::new(1, 2, 3, StreamRole::Auxiliary));
    let mut agree = 0;
    for _ in 0..10_000 {
        let n = 1 + (stream.next_u64() % 5000) as usize;
        let s_n = 4.0 * (stream.uniform() - 0.5) * (n as f64).sqrt();
        let sh = 0.01 + 5.0 * stream.uniform();
        let s2 = 0.01 + 5.0 * stream.uniform();
        let x = 6.0 * (stream.uniform() - 0.5);
        if let Ok((l, r)) = linearization_check(s_n, n, sh, s2, x) {
            agree += usize::from(l == r);
        }
    }
    s.truth("linearization identity", agree == 10_000, format!("{agree}/10000 tuples agree"));
    let xs: Vec<f64> = (0..200).map(|_| stream.standard_normal()).collect();
    let (a, b) = (sum_y_linearized(&xs, 7, 0.8, 1.3), sum_y_linearized_expanded(&xs, 7, 0.8, 1.3));
    s.close("linearized sum expansion", a, b, 1e-12);

    // metrics
    let piv = GaussianRef::<f64>::pivotal();
    s.close("ks single atom", ks_distance(&[0.0], &piv).unwrap_or(f64::NAN), 0.5, 0.0);
    s.close("ks two atoms", ks_distance(&[-1.0, 1.0], &piv).unwrap_or(f64::NAN), 0.341_344_746_068_542_9, 1e-14);
    let w1_zero = w1_distance(&[0.0], &piv).unwrap_or(f64::NAN);
    s.close("w1 single atom", w1_zero, (2.0 / std::f64::consts::PI).sqrt(), 1e-14);
    let w1_half = GaussianRef::new(2.0).and_then(|r| w1_distance(&[0.0], &r)).unwrap_or(f64::NAN);
    s.close("w1 scaling", w1_half, 0.5 * (2.0 / std::f64::consts::PI).sqrt(), 1e-14);
    let sample = [-1.2, -0.1, 0.3, 0.3, 2.5];
    let (w, l1) = (
        w1_distance(&sample, &piv).unwrap_or(f64::NAN),
        lq_distance(&sample, &piv, 1.0).unwrap_or(f64::NAN),
    );
    s.truth("lq q=1 equals w1", (w - l1).abs() < 1e-8, format!("|w1 − lq1| = {:.2e}", (w - l1).abs()));
    s.close("lq q=2 single atom", lq_distance(&[0.0], &piv, 2.0).unwrap_or(f64::NAN), 0.233_694_977_255_109_07, 1e-8);

    // fits
    let reports: Vec<DistanceReport> = [256usize, 512, 1024, 2048]
        .iter()
        .map(|&n| DistanceReport {
            n,
            rule: String::new(),
            b: 0,
            reference: String::new(),
            metric: MetricKind::Ks,
            estimate: (n as f64).powf(-0.5),
            mc_stderr: 0.0,
            reps: 1,
            degenerate_count: 0,
        })
        .collect();
    s.close("rate fit exact", fit_rate(&reports).map(|f| f.slope).unwrap_or(f64::NAN), -0.5, 1e-12);
    let lags: Vec<usize> = (1..=8).collect();
    let geo_fit = fit_decay(&lags, &lags.iter().map(|l| 0.5f64.powi(*l as i32)).collect::<Vec<_>>());
    s.truth(
        "decay fit geometric",
        matches!(geo_fit.as_ref().map(|f| f.fitted_model), Ok(DecayModel::Geometric { rho }) if (rho - 0.5).abs() < 1e-9),
        "0.5^l".into(),
    );
    let poly_fit = fit_decay(&lags, &lags.iter().map(|l| (*l as f64).powf(-2.5)).collect::<Vec<_>>());
    s.truth(
        "decay fit polynomial",
        matches!(poly_fit.as_ref().map(|f| f.fitted_model), Ok(DecayModel::Polynomial { a_frak }) if (a_frak - 2.5).abs() < 1e-9),
        "l^-2.5".into(),
    );

    // processes
    let key = StreamKey::new(9, 9, 0, StreamRole::Path);
    let same = derive_stream(key).next_u64() == derive_stream(key).next_u64()
        && derive_stream(key).next_u64() != derive_stream(key.with_replication(1)).next_u64();
    s.truth("stream determinism", same, "equal keys agree, different keys differ".into());
    let cache = CalibrationCache::new(10_000);
    let telescopes = Process::build(&ProcessSpec::ar1(0.5), &cache).and_then(|p| {
        p.generate_coupled(10, 3, CouplingMode::SingleSwap, key).map(|pair| {
            let mut a = derive_stream(key);
            let mut c = derive_stream(key.with_role(StreamRole::Coupling));
            let mut eps = 0.0;
            for idx in (1 - p.burn_in() as isize)..=10 {
                let e = a.standard_normal();
                if idx == 7 {
                    eps = e;
                }
            }
            (pair.x - pair.x_prime - 0.125 * (eps - c.standard_normal())).abs()
        })
    });
    s.truth(
        "ar1 coupling telescopes",
        matches!(telescopes, Ok(e) if e < 1e-13),
        format!("error {telescopes:?}"),
    );
    let ma = ProcessSpec::new(ProcessClass::Linear {
        decay: LinearDecay::Explicit { coefficients: vec![1.0, -0.4, 0.2] },
        sigma_eps: 1.0,
    });
    let exact = Process::build(&ma, &cache)
        .and_then(|p| p.generate_coupled(10, 3, CouplingMode::SingleSwap, key))
        .map(|pair| pair.x.to_bits() == pair.x_prime.to_bits());
    s.truth("finite memory coupling", exact == Ok(true), "l = M gives x = x'".into());
    let gc = garch_gamma_c(
        &ProcessClass::Garch { mu: 0.1, alpha: vec![0.2], beta: vec![0.3], strict_moments: false },
        &InnovationLaw::Gaussian,
    )
    .unwrap_or(f64::NAN);
    s.close("garch gamma_C", gc, 0.2 + 0.3 * 3f64.sqrt(), 1e-14);

    // engine determinism
    let plan = ExperimentPlan {
        process: ProcessSpec::ar1(0.5),
        n_grid: vec![32, 64],
        rule: BandwidthRule::fixed(2),
        trunc: None,
        reps: 400,
        metrics: vec![MetricKind::Ks],
        reference: Reference::Corrected,
        master_seed: 11,
        bootstrap_resamples: 200,
    };
    let csv = |_: ()| run_experiment(&plan, &cache).map(|r| render_csv(&r.reports));
    let (c1, c2) = (csv(()), csv(()));
    s.truth(
        "experiment determinism",
        c1.is_ok() && c1 == c2,
        "two runs give identical CSV".into(),
    );

    SelftestReport { checks: s.checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let r = run_selftest(&SelftestOptions::default());
        assert!(r.passed(), "{}", r.render());
        assert!(r.checks.len() >= 25);
        assert_eq!(r.render(), run_selftest(&SelftestOptions::default()).render());
    }

    #[test]
    fn corrupted_cdf_is_named() {
        let r = run_selftest(&SelftestOptions { corrupt_normal_cdf: true });
        let names: Vec<_> = r.failures().iter().map(|c| c.name).collect();
        assert_eq!(names, vec!["normal_cdf accuracy"]);
    }
}
