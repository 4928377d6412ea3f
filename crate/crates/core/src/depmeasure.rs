//! Coupling estimators of the dependence coefficients
//!
//! `θ_{lp} = ‖X_l − X_l'‖_p` (one innovation replaced) and
//! `λ_{lp} = ‖X_l − X_l*‖_p` (the whole past replaced), plus decay fits.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{CouplingMode, Process};
use crate::rng::StreamKey;
use crate::scalar::pairwise_sum;
use crate::stats::ols;

/// Minimum number of replications per coefficient.
pub const MIN_REPS: usize = 100;

/// Monte Carlo estimate of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub lag: usize,
    pub p: f64,
    pub mode: CouplingMode,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: usize,
}

/// `(mean |x − x'|^p)^{1/p}` over `reps` coupled pairs, with a delta-method
/// standard error.
pub fn coupling_norm(
    process: &Process,
    l: usize,
    p: f64,
    reps: usize,
    mode: CouplingMode,
    key: StreamKey,
) -> Result<CoefficientEstimate> {
    if reps < MIN_REPS {
        return Err(Error::Argument(format!("need reps >= {MIN_REPS}, got {reps}")));
    }
    if !(p >= 1.0) {
        return Err(Error::Argument(format!("moment index p must be >= 1, got {p}")));
    }
    let n = l.max(1);
    let powers: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            process
                .generate_coupled(n, l, mode, key.with_replication(r))
                .map(|pair| (pair.x - pair.x_prime).abs().powf(p))
        })
        .collect::<Result<_>>()?;
    let m = pairwise_sum(&powers) / reps as f64;
    let centered: Vec<f64> = powers.iter().map(|v| (v - m) * (v - m)).collect();
    let var = pairwise_sum(&centered) / (reps - 1) as f64;
    let se_m = (var / reps as f64).sqrt();
    let (estimate, stderr) = if m > 0.0 {
        let est = m.powf(1.0 / p);
        (est, est / (p * m) * se_m)
    } else {
        (0.0, 0.0)
    };
    Ok(CoefficientEstimate {
        lag: l,
        p,
        mode,
        estimate,
        stderr,
        reps,
    })
}

/// `θ̂_{lp}` from single-swap couplings.
pub fn theta_hat(process: &Process, l: usize, p: f64, reps: usize, key: StreamKey) -> Result<CoefficientEstimate> {
    coupling_norm(process, l, p, reps, CouplingMode::SingleSwap, key)
}

/// `λ̂_{lp}` from tail-swap couplings.
pub fn lambda_hat(process: &Process, l: usize, p: f64, reps: usize, key: StreamKey) -> Result<CoefficientEstimate> {
    coupling_norm(process, l, p, reps, CouplingMode::TailSwap, key)
}

/// Estimates on a lag grid.
pub fn coefficient_grid(
    process: &Process,
    lags: &[usize],
    p: f64,
    reps: usize,
    mode: CouplingMode,
    key: StreamKey,
) -> Result<Vec<CoefficientEstimate>> {
    lags.iter()
        .map(|&l| coupling_norm(process, l, p, reps, mode, key))
        .collect()
}

/// Fitted decay law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DecayModel {
    /// `v_l ≈ C ρ^l`.
    Geometric { rho: f64 },
    /// `v_l ≈ C l^{−𝔞}`.
    Polynomial { a_frak: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub fitted_model: DecayModel,
    /// Residual sum of squares of the chosen log-scale regression.
    pub residual: f64,
    /// Log-scale intercept of the chosen regression.
    pub intercept: f64,
}

/// Chooses geometric or polynomial decay by comparing the residuals of
/// `log v` against `l` and against `log l`.
pub fn fit_decay(lags: &[usize], values: &[f64]) -> Result<DecayFit> {
    if lags.len() != values.len() {
        return Err(Error::Argument("lags and values differ in length".into()));
    }
    let mut kept_l = Vec::new();
    let mut kept_v = Vec::new();
    for (&l, &v) in lags.iter().zip(values) {
        if l == 0 {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            warn!("dropping lag {l} with non-positive value {v} from decay fit");
            continue;
        }
        kept_l.push(l);
        kept_v.push(v);
    }
    if kept_l.len() < 4 {
        return Err(Error::Argument(format!(
            "decay fit needs at least 4 positive values at lags >= 1, got {}",
            kept_l.len()
        )));
    }
    let y: Vec<f64> = kept_v.iter().map(|v| v.ln()).collect();
    let x_lin: Vec<f64> = kept_l.iter().map(|l| *l as f64).collect();
    let x_log: Vec<f64> = kept_l.iter().map(|l| (*l as f64).ln()).collect();
    let geo = ols(&x_lin, &y)?;
    let poly = ols(&x_log, &y)?;
    let (fitted_model, fit) = if geo.ssr <= poly.ssr {
        (DecayModel::Geometric { rho: geo.slope.exp() }, geo)
    } else {
        (DecayModel::Polynomial { a_frak: -poly.slope }, poly)
    };
    Ok(DecayFit {
        lags: kept_l,
        values: kept_v,
        fitted_model,
        residual: fit.ssr,
        intercept: fit.intercept,
    })
}

/// Decay fit over the estimates that clear ten standard errors.
pub fn fit_estimates(estimates: &[CoefficientEstimate]) -> Result<DecayFit> {
    let (lags, values): (Vec<usize>, Vec<f64>) = estimates
        .iter()
        .filter(|e| e.lag > 0 && e.estimate > 10.0 * e.stderr)
        .map(|e| (e.lag, e.estimate))
        .unzip();
    fit_decay(&lags, &values)
}
