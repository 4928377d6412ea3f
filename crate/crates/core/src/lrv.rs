//! Lag-window long-run variance estimation and studentization.
//!
//! The estimator is `σ̂²_nb = Σ_{|h|≤b} ω(h, b) γ̂(h)` with the empirical
//! autocovariance normalised by `1/n` and centred at the sample mean. The
//! core uses rectangular weights (`ω ≡ 1`); tapered windows are available
//! behind the `experimental-windows` feature for comparison runs only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Lag-window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagWindow {
    #[default]
    Rectangular,
    /// Triangular taper `1 − h/(b+1)`. Not part of the studied estimator.
    #[cfg(feature = "experimental-windows")]
    Bartlett,
    /// Trapezoidal flat-top taper. Not part of the studied estimator.
    #[cfg(feature = "experimental-windows")]
    FlatTop,
}

impl LagWindow {
    /// Weight attached to lag `h` for bandwidth `b` (`0 ≤ h ≤ b`).
    #[cfg_attr(not(feature = "experimental-windows"), allow(unused_variables))]
    pub fn weight<T: Real>(self, h: usize, b: usize) -> T {
        match self {
            LagWindow::Rectangular => T::one(),
            #[cfg(feature = "experimental-windows")]
            LagWindow::Bartlett => T::one() - T::from_count(h) / T::from_count(b + 1),
            #[cfg(feature = "experimental-windows")]
            LagWindow::FlatTop => {
                let x = T::from_count(h) / T::from_count(b.max(1));
                let half = T::lit(0.5);
                if x <= half {
                    T::one()
                } else {
                    T::lit(2.0) * (T::one() - x)
                }
            }
        }
    }
}

/// Result of one lag-window estimate. `sigma_hat_sq` can be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrvEstimate<T> {
    pub sigma_hat_sq: T,
    pub b: usize,
    pub weights: LagWindow,
    pub n: usize,
}

/// How the bandwidth grows with the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthKind {
    /// Constant `b`.
    Fixed { b: usize },
    /// `⌈coefficient · n^exponent⌉`.
    Power { coefficient: f64, exponent: f64 },
    /// `⌈n^{1/(2(𝔞−1))}⌉` for covariance decay exponent `𝔞 > 1`.
    OversmoothPower { a_frak: f64 },
    /// `max(1, ⌈n^{1/4}/ln n⌉)`.
    OversmoothQuarter,
    /// `⌈n^{1/(2β+1)}⌉`, the MSE-optimal rate for a bias tail of order `b^{−β}`.
    MseOptimal { beta: f64 },
}

/// A bandwidth rule, optionally clipped to `⌊(n/ln³ n)^{1/4}⌋`.
///
/// Serialized flat, e.g. `{"kind": "mse_optimal", "beta": 1.0, "cap_enabled": true}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule", into = "RawRule")]
pub struct BandwidthRule {
    pub kind: BandwidthKind,
    pub cap_enabled: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a_frak: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default)]
    cap_enabled: bool,
}

impl TryFrom<RawRule> for BandwidthRule {
    type Error = String;

    fn try_from(r: RawRule) -> std::result::Result<Self, String> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| format!("bandwidth kind \"{}\" requires field \"{name}\"", r.kind))
        };
        let allowed: &[&str] = match r.kind.as_str() {
            "fixed" => &["b"],
            "power" => &["coefficient", "exponent"],
            "oversmooth_power" => &["a_frak"],
            "oversmooth_quarter" => &[],
            "mse_optimal" => &["beta"],
            other => {
                return Err(format!(
                    "unknown bandwidth kind \"{other}\", expected one of fixed, power, \
                     oversmooth_power, oversmooth_quarter, mse_optimal"
                ))
            }
        };
        let present = [
            ("b", r.b.is_some()),
            ("coefficient", r.coefficient.is_some()),
            ("exponent", r.exponent.is_some()),
            ("a_frak", r.a_frak.is_some()),
            ("beta", r.beta.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(format!("field \"{name}\" is not valid for bandwidth kind \"{}\"", r.kind));
            }
        }
        let kind = match r.kind.as_str() {
            "fixed" => BandwidthKind::Fixed {
                b: r.b.ok_or_else(|| "bandwidth kind \"fixed\" requires field \"b\"".to_string())?,
            },
            "power" => BandwidthKind::Power {
                coefficient: need(r.coefficient, "coefficient")?,
                exponent: need(r.exponent, "exponent")?,
            },
            "oversmooth_power" => BandwidthKind::OversmoothPower {
                a_frak: need(r.a_frak, "a_frak")?,
            },
            "oversmooth_quarter" => BandwidthKind::OversmoothQuarter,
            _ => BandwidthKind::MseOptimal {
                beta: need(r.beta, "beta")?,
            },
        };
        Ok(BandwidthRule {
            kind,
            cap_enabled: r.cap_enabled,
        })
    }
}

impl From<BandwidthRule> for RawRule {
    fn from(rule: BandwidthRule) -> Self {
        let mut raw = RawRule {
            kind: String::new(),
            b: None,
            coefficient: None,
            exponent: None,
            a_frak: None,
            beta: None,
            cap_enabled: rule.cap_enabled,
        };
        raw.kind = match rule.kind {
            BandwidthKind::Fixed { b } => {
                raw.b = Some(b);
                "fixed"
            }
            BandwidthKind::Power {
                coefficient,
                exponent,
            } => {
                raw.coefficient = Some(coefficient);
                raw.exponent = Some(exponent);
                "power"
            }
            BandwidthKind::OversmoothPower { a_frak } => {
                raw.a_frak = Some(a_frak);
                "oversmooth_power"
            }
            BandwidthKind::OversmoothQuarter => "oversmooth_quarter",
            BandwidthKind::MseOptimal { beta } => {
                raw.beta = Some(beta);
                "mse_optimal"
            }
        }
        .to_string();
        raw
    }
}

/// Ceiling that snaps values within 1e-9 of an integer onto it, so exact
/// powers such as `1000^{1/3}` do not round up through representation error.
fn snapped_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        v.ceil().max(0.0) as usize
    }
}

/// `⌊(n/ln³ n)^{1/4}⌋`, or `None` when `n < 2`.
pub fn bandwidth_cap(n: usize) -> Option<usize> {
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let l = nf.ln();
    let v = (nf / (l * l * l)).powf(0.25);
    let r = v.round();
    Some(if (v - r).abs() < 1e-9 { r as usize } else { v.floor() as usize })
}

impl BandwidthRule {
    pub fn new(kind: BandwidthKind) -> Self {
        BandwidthRule {
            kind,
            cap_enabled: false,
        }
    }

    pub fn fixed(b: usize) -> Self {
        Self::new(BandwidthKind::Fixed { b })
    }

    pub fn power(coefficient: f64, exponent: f64) -> Self {
        Self::new(BandwidthKind::Power {
            coefficient,
            exponent,
        })
    }

    pub fn mse_optimal(beta: f64) -> Self {
        Self::new(BandwidthKind::MseOptimal { beta })
    }

    pub fn oversmooth_power(a_frak: f64) -> Self {
        Self::new(BandwidthKind::OversmoothPower { a_frak })
    }

    pub fn capped(mut self) -> Self {
        self.cap_enabled = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BandwidthKind::MseOptimal { beta } if !(beta > 0.0) => Err(Error::Argument(format!(
                "mse_optimal requires beta > 0, got {beta}"
            ))),
            BandwidthKind::OversmoothPower { a_frak } if !(a_frak > 1.0) => Err(Error::Argument(
                format!("oversmooth_power requires a_frak > 1, got {a_frak}"),
            )),
            BandwidthKind::Power {
                coefficient,
                exponent,
            } if !(coefficient > 0.0 && (0.0..1.0).contains(&exponent)) => Err(Error::Argument(
                format!("power rule requires coefficient > 0 and 0 <= exponent < 1, got {coefficient}, {exponent}"),
            )),
            _ => Ok(()),
        }
    }

    /// Bandwidth emitted for sample size `n`.
    pub fn bandwidth(&self, n: usize) -> Result<usize> {
        self.validate()?;
        let nf = n as f64;
        let raw = match self.kind {
            BandwidthKind::Fixed { b } => b,
            BandwidthKind::Power {
                coefficient,
                exponent,
            } => snapped_ceil(coefficient * nf.powf(exponent)),
            BandwidthKind::OversmoothPower { a_frak } => {
                snapped_ceil(nf.powf(1.0 / (2.0 * (a_frak - 1.0))))
            }
            BandwidthKind::OversmoothQuarter => {
                if n < 2 {
                    1
                } else {
                    snapped_ceil(nf.powf(0.25) / nf.ln()).max(1)
                }
            }
            BandwidthKind::MseOptimal { beta } => snapped_ceil(nf.powf(1.0 / (2.0 * beta + 1.0))),
        };
        if self.cap_enabled {
            if let Some(cap) = bandwidth_cap(n) {
                return Ok(raw.min(cap).max(1));
            }
        }
        Ok(raw)
    }

    /// Short human readable label, used in CSV output.
    pub fn label(&self) -> String {
        let base = match self.kind {
            BandwidthKind::Fixed { b } => format!("fixed(b={b})"),
            BandwidthKind::Power {
                coefficient,
                exponent,
            } => format!("power(c={coefficient};e={exponent})"),
            BandwidthKind::OversmoothPower { a_frak } => format!("oversmooth_power(a={a_frak})"),
            BandwidthKind::OversmoothQuarter => "oversmooth_quarter".to_string(),
            BandwidthKind::MseOptimal { beta } => format!("mse_optimal(beta={beta})"),
        };
        if self.cap_enabled {
            format!("{base}+cap")
        } else {
            base
        }
    }
}

/// Lower truncation `τ_n = c_tau·√(ln n)` of the studentizing scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationRule {
    pub c_tau: f64,
}

impl Default for TruncationRule {
    fn default() -> Self {
        TruncationRule { c_tau: 2.0 }
    }
}

impl TruncationRule {
    pub fn new(c_tau: f64) -> Result<Self> {
        if !(c_tau > 0.0) {
            return Err(Error::Argument(format!("c_tau must be positive, got {c_tau}")));
        }
        Ok(TruncationRule { c_tau })
    }

    pub fn tau_n<T: Real>(&self, n: usize) -> T {
        T::lit(self.c_tau) * T::from_count(n).ln().sqrt()
    }
}

fn mean<T: Real>(x: &[T]) -> T {
    crate::scalar::pairwise_sum(x) / T::from_count(x.len())
}

/// Writes `x − x̄` into `out` and returns the centred autocovariances for
/// lags `0..=max_lag`. Reuses the caller's buffers.
pub fn autocovariances_into<T: Real>(
    x: &[T],
    max_lag: usize,
    centered: &mut Vec<T>,
    gammas: &mut Vec<T>,
) -> Result<()> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Argument("empty sample".into()));
    }
    if max_lag >= n {
        return Err(Error::Argument(format!(
            "lag {max_lag} must be smaller than the sample size {n}"
        )));
    }
    let m = mean(x);
    centered.clear();
    centered.extend(x.iter().map(|&v| v - m));
    gammas.clear();
    let nf = T::from_count(n);
    for h in 0..=max_lag {
        gammas.push(dot(&centered[h..], &centered[..n - h]) / nf);
    }
    Ok(())
}

/// Empirical autocovariances for lags `0..=max_lag`.
pub fn autocovariances<T: Real>(x: &[T], max_lag: usize) -> Result<Vec<T>> {
    let mut c = Vec::with_capacity(x.len());
    let mut g = Vec::with_capacity(max_lag + 1);
    autocovariances_into(x, max_lag, &mut c, &mut g)?;
    Ok(g)
}

/// `γ̂(h) = n⁻¹ Σ_{k>h} (X_k − X̄)(X_{k−h} − X̄)`; negative lags are mirrored.
pub fn empirical_autocov<T: Real>(x: &[T], h: isize) -> Result<T> {
    let h = h.unsigned_abs();
    let n = x.len();
    if h >= n {
        return Err(Error::Argument(format!(
            "lag {h} must be smaller than the sample size {n}"
        )));
    }
    let m = mean(x);
    let mut s = T::zero();
    for k in h..n {
        s += (x[k] - m) * (x[k - h] - m);
    }
    Ok(s / T::from_count(n))
}

/// Combines autocovariances `γ̂(0..=b)` into the lag-window estimate.
pub fn lrv_from_autocov<T: Real>(gammas: &[T], b: usize, weights: LagWindow) -> T {
    let mut tail = T::zero();
    for (h, g) in gammas.iter().enumerate().take(b + 1).skip(1) {
        tail += weights.weight::<T>(h, b) * *g;
    }
    gammas[0] + T::lit(2.0) * tail
}

/// Lag-window estimate for an explicit bandwidth.
pub fn lrv_with_bandwidth<T: Real>(x: &[T], b: usize) -> Result<LrvEstimate<T>> {
    let n = x.len();
    if b >= n {
        return Err(Error::Argument(format!(
            "bandwidth {b} must be smaller than the sample size {n}"
        )));
    }
    let g = autocovariances(x, b)?;
    Ok(LrvEstimate {
        sigma_hat_sq: lrv_from_autocov(&g, b, LagWindow::Rectangular),
        b,
        weights: LagWindow::Rectangular,
        n,
    })
}

/// `σ̂²_nb = γ̂(0) + 2 Σ_{h=1}^b γ̂(h)` with `b` taken from `rule`.
pub fn lrv_estimate<T: Real>(x: &[T], rule: &BandwidthRule) -> Result<LrvEstimate<T>> {
    let b = rule.bandwidth(x.len())?;
    lrv_with_bandwidth(x, b)
}

/// Uncentred variant `n⁻¹ Σ_k (X_k² + 2 Σ_{h=1}^b X_k X_{k−h})` with
/// `X_j = 0` for `j ≤ 0`.
pub fn lrv_tilde<T: Real>(x: &[T], b: usize) -> Result<T> {
    let n = x.len();
    if b >= n {
        return Err(Error::Argument(format!(
            "bandwidth {b} must be smaller than the sample size {n}"
        )));
    }
    let mut s = dot(x, x);
    for h in 1..=b {
        s += T::lit(2.0) * dot(&x[h..], &x[..n - h]);
    }
    Ok(s / T::from_count(n))
}

/// `T = S_n / √(n σ̂²_nb)` for an explicit bandwidth.
pub fn studentize_with_bandwidth<T: Real>(x: &[T], b: usize) -> Result<T> {
    let est = lrv_with_bandwidth(x, b)?;
    let s_n = crate::scalar::pairwise_sum(x);
    if !(est.sigma_hat_sq > T::zero()) {
        return Err(Error::NonPositiveVariance(est.sigma_hat_sq.to_f64_lossy()));
    }
    Ok(s_n / (T::from_count(x.len()) * est.sigma_hat_sq).sqrt())
}

/// Studentized partial sum. Fails with [`Error::NonPositiveVariance`] when
/// the lag-window estimate is not positive.
pub fn studentize<T: Real>(x: &[T], rule: &BandwidthRule) -> Result<T> {
    let b = rule.bandwidth(x.len())?;
    studentize_with_bandwidth(x, b)
}

/// Denominator scale `σ̂_nb ∨ τ_n⁻¹` of the truncated statistic.
pub fn truncated_scale<T: Real>(sigma_hat_sq: T, n: usize, trunc: &TruncationRule) -> T {
    let sigma_hat = sigma_hat_sq.max(T::zero()).sqrt();
    sigma_hat.max(T::one() / trunc.tau_n::<T>(n))
}

/// `S_n / (√n · (σ̂_nb ∨ τ_n⁻¹))`, finite whenever the input is.
pub fn studentize_truncated<T: Real>(
    x: &[T],
    rule: &BandwidthRule,
    trunc: &TruncationRule,
) -> Result<T> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Argument("truncated studentization needs n >= 2".into()));
    }
    let est = lrv_estimate(x, rule)?;
    let s_n = crate::scalar::pairwise_sum(x);
    Ok(s_n / (T::from_count(n).sqrt() * truncated_scale(est.sigma_hat_sq, n, trunc)))
}

/// Evaluates both sides of the linearization identity
///
/// ```text
/// { S/√(n σ̂²) ≤ x }  =  { S/√(n σ²) − x(σ̂²−σ²)/(2σ²) ≤ x − x(σ̂²−σ²)²/(2σ²(σ̂+σ)²) }
/// ```
///
/// and returns the two membership indicators. They agree for every input.
pub fn linearization_check<T: Real>(
    s_n: T,
    n: usize,
    sigma_hat_sq: T,
    sigma_nb_sq: T,
    x: T,
) -> Result<(bool, bool)> {
    if !(sigma_hat_sq > T::zero() && sigma_nb_sq > T::zero()) || n == 0 {
        return Err(Error::Argument(
            "linearization check needs positive variances and n >= 1".into(),
        ));
    }
    let nf = T::from_count(n);
    let two = T::lit(2.0);
    let lhs = s_n / (nf * sigma_hat_sq).sqrt() <= x;
    let diff = sigma_hat_sq - sigma_nb_sq;
    let sum_sd = sigma_hat_sq.sqrt() + sigma_nb_sq.sqrt();
    let left = s_n / (nf * sigma_nb_sq).sqrt() - x * diff / (two * sigma_nb_sq);
    let right = x - x * diff * diff / (two * sigma_nb_sq * sum_sd * sum_sd);
    Ok((lhs, left <= right))
}

/// `B_kb = Σ_{h=1}^b X_{k−h}` for 1-based `k`, treating `X_j = 0` for `j ≤ 0`.
pub fn b_kb<T: Real>(x: &[T], k: usize, b: usize) -> T {
    let mut s = T::zero();
    for h in 1..=b.min(k.saturating_sub(1)) {
        s += x[k - h - 1];
    }
    s
}

/// `Y_k(x) = X_k (1 − x X_k/(2√n σ_nb) − x B_kb/(√n σ_nb))`.
pub fn y_linearized<T: Real>(x_k: T, b_kb: T, x: T, n: usize, sigma_nb: T) -> T {
    let root = T::from_count(n).sqrt() * sigma_nb;
    x_k * (T::one() - x * x_k / (T::lit(2.0) * root) - x * b_kb / root)
}

/// `Σ_k Y_k(x)` evaluated term by term from the definition.
pub fn sum_y_linearized<T: Real>(xs: &[T], b: usize, x: T, sigma_nb: T) -> T {
    let n = xs.len();
    let mut running = T::zero();
    let mut total = T::zero();
    for k in 1..=n {
        if k > b + 1 {
            running -= xs[k - b - 2];
        }
        total += y_linearized(xs[k - 1], running, x, n, sigma_nb);
        running += xs[k - 1];
    }
    total
}

/// `S_n − x/(2√n σ) Σ X_k² − x/(√n σ) Σ X_k B_kb`, the same sum re-associated.
pub fn sum_y_linearized_expanded<T: Real>(xs: &[T], b: usize, x: T, sigma_nb: T) -> T {
    let n = xs.len();
    let root = T::from_count(n).sqrt() * sigma_nb;
    let s_n: T = xs.iter().copied().sum();
    let sq = dot(xs, xs);
    let mut cross = T::zero();
    for k in 1..=n {
        cross += xs[k - 1] * b_kb(xs, k, b);
    }
    s_n - x / (T::lit(2.0) * root) * sq - x / root * cross
}
