//! Closed-form second-order structure of linear processes.
//!
//! Everything here refers to the process that is actually simulated: a
//! linear filter with its finite coefficient vector, or the AR(1) recursion
//! `Y_k = φ Y_{k−1} + σ ε_k` (which also covers the OU skeleton). Sums are
//! organised through suffix sums of the coefficients so tail quantities are
//! computed directly rather than as differences of nearly equal numbers.

use crate::error::{Error, Result};
use crate::functionals::FunctionalKind;
use crate::lrv::BandwidthRule;
use crate::processes::innovation::gaussian_abs_moment;
use crate::processes::{ProcessClass, ProcessSpec};
use crate::scalar::Real;

/// `γ(h) = σ² Σ_i a_i a_{i+h}` for a finite filter.
pub fn gamma_linear<T: Real>(coeffs: &[T], sigma: T, h: usize) -> T {
    if h >= coeffs.len() {
        return T::zero();
    }
    let s: T = coeffs.iter().zip(&coeffs[h..]).map(|(a, b)| *a * *b).sum();
    sigma * sigma * s
}

/// `σ² = σ_ε² (Σ a_i)²`.
pub fn sigma_sq<T: Real>(coeffs: &[T], sigma: T) -> T {
    let s: T = coeffs.iter().copied().sum();
    sigma * sigma * s * s
}

/// Suffix sums `R_j = Σ_{k≥j} a_k`, with `R_M = 0`.
fn suffix_sums<T: Real>(coeffs: &[T]) -> Vec<T> {
    let mut r = vec![T::zero(); coeffs.len() + 1];
    for j in (0..coeffs.len()).rev() {
        r[j] = r[j + 1] + coeffs[j];
    }
    r
}

/// `σ_b² = γ(0) + 2 Σ_{h=1}^b γ(h)`.
pub fn sigma_b_sq<T: Real>(coeffs: &[T], sigma: T, b: usize) -> T {
    let r = suffix_sums(coeffs);
    let m = coeffs.len();
    let two = T::lit(2.0);
    let s: T = coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| *a * (two * (r[i] - r[(i + b + 1).min(m)]) - *a))
        .sum();
    sigma * sigma * s
}

/// `σ² − σ_b² = 2 Σ_{h>b} γ(h)`.
pub fn bias<T: Real>(coeffs: &[T], sigma: T, b: usize) -> T {
    let r = suffix_sums(coeffs);
    let m = coeffs.len();
    let s: T = coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| *a * r[(i + b + 1).min(m)])
        .sum();
    T::lit(2.0) * sigma * sigma * s
}

/// `(E|Z|^p)^{1/p}` for a standard normal `Z`.
pub fn gaussian_p_norm<T: Real>(p: T) -> T {
    let pf = p.to_f64_lossy();
    T::lit(gaussian_abs_moment(pf).powf(1.0 / pf))
}

/// Linear representation of a base series.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearModel<T = f64> {
    /// `Y_k = φ Y_{k−1} + σ ε_k`.
    Ar1 { phi: T, sigma: T },
    /// `Y_k = σ Σ_{i<M} a_i ε_{k−i}`.
    Filter { coeffs: Vec<T>, sigma: T },
}

impl LinearModel<f64> {
    /// Linear representation of `class`, if it has one.
    pub fn from_class(class: &ProcessClass) -> Result<Option<Self>> {
        Ok(match class {
            ProcessClass::Ar1 { phi, sigma_eps } => Some(LinearModel::Ar1 {
                phi: *phi,
                sigma: *sigma_eps,
            }),
            ProcessClass::IteratedAr {
                phi,
                nonlinearity: crate::processes::Nonlinearity::None,
                sigma_eps,
            } => Some(LinearModel::Ar1 {
                phi: *phi,
                sigma: *sigma_eps,
            }),
            ProcessClass::OuSde {
                theta,
                sigma_diff,
                delta,
            } => Some(LinearModel::Ar1 {
                phi: (-theta * delta).exp(),
                sigma: (sigma_diff * sigma_diff / theta * (1.0 - (-2.0 * theta * delta).exp())).sqrt(),
            }),
            ProcessClass::Linear { decay, sigma_eps } => Some(LinearModel::Filter {
                coeffs: decay.coefficients()?,
                sigma: *sigma_eps,
            }),
            _ => None,
        })
    }
}

impl<T: Real> LinearModel<T> {
    /// Memory length `M` of a filter; `None` for the recursion.
    pub fn memory(&self) -> Option<usize> {
        match self {
            LinearModel::Ar1 { .. } => None,
            LinearModel::Filter { coeffs, .. } => Some(coeffs.len()),
        }
    }

    /// Coefficient `a_l` of `ε_{k−l}` (without `σ`).
    pub fn coefficient(&self, l: usize) -> T {
        match self {
            LinearModel::Ar1 { phi, .. } => phi.powi(l as i32),
            LinearModel::Filter { coeffs, .. } => coeffs.get(l).copied().unwrap_or(T::zero()),
        }
    }

    pub fn sigma(&self) -> T {
        match self {
            LinearModel::Ar1 { sigma, .. } | LinearModel::Filter { sigma, .. } => *sigma,
        }
    }

    /// `γ(h)`.
    pub fn autocov(&self, h: usize) -> T {
        match self {
            LinearModel::Ar1 { phi, sigma } => {
                *sigma * *sigma * phi.powi(h as i32) / (T::one() - *phi * *phi)
            }
            LinearModel::Filter { coeffs, sigma } => gamma_linear(coeffs, *sigma, h),
        }
    }

    /// Long-run variance `σ² = Σ_h γ(h)`.
    pub fn sigma_sq(&self) -> T {
        match self {
            LinearModel::Ar1 { phi, sigma } => {
                let d = T::one() - *phi;
                *sigma * *sigma / (d * d)
            }
            LinearModel::Filter { coeffs, sigma } => sigma_sq(coeffs, *sigma),
        }
    }

    /// `σ_b² = γ(0) + 2 Σ_{h=1}^b γ(h)`.
    pub fn sigma_b_sq(&self, b: usize) -> T {
        match self {
            LinearModel::Ar1 { phi, .. } => {
                let g0 = self.autocov(0);
                let two = T::lit(2.0);
                g0 * (T::one() + two * *phi * (T::one() - phi.powi(b as i32)) / (T::one() - *phi))
            }
            LinearModel::Filter { coeffs, sigma } => sigma_b_sq(coeffs, *sigma, b),
        }
    }

    /// `σ² − σ_b²`, computed as the tail `2 Σ_{h>b} γ(h)`.
    pub fn bias(&self, b: usize) -> T {
        match self {
            LinearModel::Ar1 { phi, .. } => {
                T::lit(2.0) * self.autocov(0) * phi.powi(b as i32 + 1) / (T::one() - *phi)
            }
            LinearModel::Filter { coeffs, sigma } => bias(coeffs, *sigma, b),
        }
    }

    /// Single-swap coefficient `θ_{lp} = ‖X_l − X_l'‖_p` for Gaussian
    /// innovations (any unit-variance law when `p = 2`).
    pub fn theta(&self, l: usize, p: T) -> T {
        let diff_norm = T::lit(2.0).sqrt() * gaussian_p_norm(p);
        self.sigma() * self.coefficient(l).abs() * diff_norm
    }

    /// Tail-swap coefficient `λ_{lp} = ‖X_l − X_l*‖_p`.
    pub fn lambda(&self, l: usize, p: T) -> T {
        let tail_sq = match self {
            LinearModel::Ar1 { phi, .. } => phi.powi(2 * l as i32) / (T::one() - *phi * *phi),
            LinearModel::Filter { coeffs, .. } => {
                coeffs.iter().skip(l).map(|a| *a * *a).sum()
            }
        };
        self.sigma() * (T::lit(2.0) * tail_sq).sqrt() * gaussian_p_norm(p)
    }
}

fn closed_form_model(spec: &ProcessSpec, p: f64) -> Result<LinearModel<f64>> {
    let unsupported = |why: &str| {
        Error::Unsupported(format!(
            "closed-form dependence coefficients need {why}; use the coupling estimators instead"
        ))
    };
    if spec.functional.kind != FunctionalKind::Identity {
        return Err(unsupported("the identity functional"));
    }
    if p != 2.0 && !spec.innovation_law.is_gaussian() {
        return Err(unsupported("Gaussian innovations when p != 2"));
    }
    if !(p >= 1.0) {
        return Err(Error::Argument(format!("moment index p must be >= 1, got {p}")));
    }
    match &spec.model {
        ProcessClass::Ar1 { .. } | ProcessClass::Linear { .. } => {
            spec.validate()?;
            Ok(LinearModel::from_class(&spec.model)?.expect("linear class"))
        }
        other => Err(unsupported(&format!("class ar1 or linear, got {}", other.name()))),
    }
}

/// Closed-form `θ_{lp}` for ar1 and linear specs.
pub fn theta_closed(spec: &ProcessSpec, l: usize, p: f64) -> Result<f64> {
    Ok(closed_form_model(spec, p)?.theta(l, p))
}

/// Closed-form `λ_{lp}` for ar1 and linear specs.
pub fn lambda_closed(spec: &ProcessSpec, l: usize, p: f64) -> Result<f64> {
    Ok(closed_form_model(spec, p)?.lambda(l, p))
}

/// One row of a bias table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow<T = f64> {
    pub n: usize,
    pub b: usize,
    pub bias: T,
    /// `√n · |σ² − σ_b²|`.
    pub scaled: T,
}

/// `√n |σ² − σ_{b(n)}²|` along `n_grid` under `rule`.
pub fn bias_rate_table<T: Real>(
    model: &LinearModel<T>,
    rule: &BandwidthRule,
    n_grid: &[usize],
) -> Result<Vec<BiasRow<T>>> {
    n_grid
        .iter()
        .map(|&n| {
            let b = rule.bandwidth(n)?;
            let bias = model.bias(b);
            Ok(BiasRow {
                n,
                b,
                bias,
                scaled: T::from_count(n).sqrt() * bias.abs(),
            })
        })
        .collect()
}

/// Dependence profile `(𝔞, p, θ_{lp})` of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceProfile<T = f64> {
    pub a_frak: T,
    pub p: T,
    pub model: LinearModel<T>,
}

impl<T: Real> DependenceProfile<T> {
    pub fn theta(&self, l: usize) -> T {
        self.model.theta(l, self.p)
    }

    /// `Θ_{𝔞p} = ‖X_0‖_p + Σ_{l≥1} l^𝔞 θ_{lp}`; `+∞` when the partial sums
    /// do not stabilise.
    pub fn big_theta(&self) -> T {
        let x0 = self.model.autocov(0).sqrt() * gaussian_p_norm(self.p);
        let mut sum = T::zero();
        let limit = self.model.memory().unwrap_or(1_000_000);
        let tol = T::lit(1e-16);
        let mut small_run = 0;
        for l in 1..limit.max(1) {
            let term = T::from_count(l).powf(self.a_frak) * self.theta(l);
            sum += term;
            if self.model.memory().is_none() {
                if term <= tol * sum {
                    small_run += 1;
                    if small_run >= 8 {
                        return x0 + sum;
                    }
                } else {
                    small_run = 0;
                }
            }
        }
        if self.model.memory().is_some() {
            x0 + sum
        } else {
            T::infinity()
        }
    }

    /// `Λ_l = Σ_{j≥l} θ_{jp}²`, the bound dominating `λ_{lp}²`.
    pub fn lambda_bound_sq(&self, l: usize) -> T {
        let limit = self.model.memory().unwrap_or(l + 100_000);
        (l..limit).map(|j| self.theta(j).powi(2)).sum()
    }
}

/// Second-order structure of `X_k = f(Y_k, …) − E f` where it is known.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalAutocov<T = f64> {
    /// `X = Y`.
    Base(LinearModel<T>),
    /// `X = Y² − γ(0)` with Gaussian `Y`: `γ_X(h) = 2γ(h)²`.
    GaussianSquare(LinearModel<T>),
    /// `X = Y_k Y_{k−1} − γ(1)` with Gaussian `Y`:
    /// `γ_X(h) = γ(h)² + γ(h+1)γ(h−1)`.
    GaussianLagProduct(LinearModel<T>),
    /// Uncorrelated with variance `var` (a martingale difference).
    WhiteNoise { var: T },
    /// Estimated `γ_X(0..=H)`; lags beyond `H` count as zero.
    Table { gammas: Vec<T> },
}

impl<T: Real> FunctionalAutocov<T> {
    fn last_lag(&self) -> Option<usize> {
        match self {
            FunctionalAutocov::Base(m)
            | FunctionalAutocov::GaussianSquare(m)
            | FunctionalAutocov::GaussianLagProduct(m) => m.memory(),
            FunctionalAutocov::WhiteNoise { .. } => Some(1),
            FunctionalAutocov::Table { gammas } => Some(gammas.len()),
        }
    }

    /// `γ_X(h)`.
    pub fn gamma(&self, h: usize) -> T {
        match self {
            FunctionalAutocov::Base(m) => m.autocov(h),
            FunctionalAutocov::GaussianSquare(m) => T::lit(2.0) * m.autocov(h).powi(2),
            FunctionalAutocov::GaussianLagProduct(m) => {
                let prev = m.autocov(if h == 0 { 1 } else { h - 1 });
                m.autocov(h).powi(2) + m.autocov(h + 1) * prev
            }
            FunctionalAutocov::WhiteNoise { var } => {
                if h == 0 {
                    *var
                } else {
                    T::zero()
                }
            }
            FunctionalAutocov::Table { gammas } => gammas.get(h).copied().unwrap_or(T::zero()),
        }
    }

    /// `σ_b²` of `X`.
    pub fn sigma_b_sq(&self, b: usize) -> T {
        match self {
            FunctionalAutocov::Base(m) => m.sigma_b_sq(b),
            _ => {
                let last = self.last_lag().map_or(b, |l| b.min(l));
                let tail: T = (1..=last).map(|h| self.gamma(h)).sum();
                self.gamma(0) + T::lit(2.0) * tail
            }
        }
    }

    /// Long-run variance of `X`.
    pub fn sigma_sq(&self) -> T {
        match self {
            FunctionalAutocov::Base(m) => m.sigma_sq(),
            FunctionalAutocov::GaussianSquare(m @ LinearModel::Ar1 { phi, .. }) => {
                let g0 = m.autocov(0);
                let p2 = *phi * *phi;
                T::lit(2.0) * g0 * g0 * (T::one() + p2) / (T::one() - p2)
            }
            FunctionalAutocov::GaussianSquare(m) | FunctionalAutocov::GaussianLagProduct(m) => {
                let last = m.memory().unwrap_or_else(|| {
                    let LinearModel::Ar1 { phi, .. } = m else { unreachable!() };
                    crate::processes::linear::geometric_memory(phi.to_f64_lossy()) / 2 + 2
                });
                self.sigma_b_sq(last)
            }
            FunctionalAutocov::WhiteNoise { var } => *var,
            FunctionalAutocov::Table { gammas } => self.sigma_b_sq(gammas.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ar1(phi: f64) -> LinearModel {
        LinearModel::Ar1 { phi, sigma: 1.0 }
    }

    #[test]
    fn ar1_values() {
        let m = ar1(0.5);
        assert_relative_eq!(m.autocov(0), 4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(m.sigma_sq(), 4.0, max_relative = 1e-15);
        assert_relative_eq!(m.sigma_b_sq(2), 10.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(m.sigma_b_sq(0), m.autocov(0), max_relative = 1e-15);
        assert_relative_eq!(m.bias(20), 2.5431315104166665e-6, max_relative = 1e-12);
        assert_relative_eq!(m.theta(3, 2.0), 0.17677669529663687, max_relative = 1e-14);
        assert_relative_eq!(m.lambda(3, 2.0), 0.2041241452319315, max_relative = 1e-14);
    }

    #[test]
    fn filter_matches_brute_force() {
        let coeffs: Vec<f64> = (0..300).map(|i| (1.0 + i as f64).powf(-1.5)).collect();
        let m = LinearModel::Filter { coeffs: coeffs.clone(), sigma: 1.3 };
        let brute = |h: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..coeffs.len() {
                if i + h < coeffs.len() {
                    s += coeffs[i] * coeffs[i + h];
                }
            }
            1.69 * s
        };
        for b in [0, 1, 7, 50, 298, 299, 400] {
            let sb: f64 = brute(0) + 2.0 * (1..=b).map(brute).sum::<f64>();
            assert_relative_eq!(m.sigma_b_sq(b), sb, max_relative = 1e-12);
            let tail: f64 = 2.0 * (b + 1..coeffs.len()).map(brute).sum::<f64>();
            if tail > 0.0 {
                assert_relative_eq!(m.bias(b), tail, max_relative = 1e-12);
            } else {
                assert_eq!(m.bias(b), 0.0);
            }
        }
        assert_eq!(m.autocov(300), 0.0);
        assert_eq!(m.theta(300, 2.0), 0.0);
        assert_eq!(m.lambda(300, 2.0), 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let m = LinearModel::<f32>::Ar1 { phi: 0.5, sigma: 1.0 };
        assert!((m.sigma_sq() - 4.0).abs() < 1e-6);
        assert!((m.sigma_b_sq(2) - 10.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn gaussian_square_long_run_variance() {
        let fa = FunctionalAutocov::GaussianSquare(ar1(0.5));
        let g0 = 4.0 / 3.0;
        let direct: f64 = 2.0 * g0 * g0 * (1.0 + 2.0 * (1..200).map(|h| 0.25f64.powi(h)).sum::<f64>());
        assert_relative_eq!(fa.sigma_sq(), direct, max_relative = 1e-12);
        assert_relative_eq!(fa.sigma_b_sq(400), direct, max_relative = 1e-12);
    }

    #[test]
    fn lambda_dominated_by_theta_tail() {
        let profile = DependenceProfile {
            a_frak: 1.0,
            p: 2.0,
            model: LinearModel::Filter {
                coeffs: (0..50).map(|i| 0.9f64.powi(i)).collect(),
                sigma: 1.0,
            },
        };
        for l in 0..60 {
            let lam = profile.model.lambda(l, 2.0).powi(2);
            assert!(lam <= profile.lambda_bound_sq(l) * (1.0 + 1e-12));
        }
        assert!(profile.big_theta().is_finite());
    }

    #[test]
    fn closed_forms_reject_unsupported() {
        let garch = ProcessSpec::new(ProcessClass::Garch {
            mu: 0.1,
            alpha: vec![0.2],
            beta: vec![0.3],
            strict_moments: false,
        });
        assert!(matches!(theta_closed(&garch, 1, 2.0), Err(Error::Unsupported(_))));
        assert_relative_eq!(
            theta_closed(&ProcessSpec::ar1(0.5), 3, 2.0).unwrap(),
            0.17677669529663687,
            max_relative = 1e-14
        );
    }
}
