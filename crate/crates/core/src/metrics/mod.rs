//! Distances between an empirical distribution function and a Gaussian
//! reference `x ↦ Φ(s x)`.
//!
//! All functions take the sample sorted ascending. The empirical CDF is a
//! step function, so the Wasserstein-1 integral is evaluated exactly per
//! step with the antiderivative `Ψ(x) = x Φ(sx) + φ(sx)/s`, splitting a
//! step where the reference crosses its level. The `L^q` integral uses
//! adaptive Simpson on the same pieces.

pub mod normal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use normal::{normal_cdf, normal_cdf_both, normal_pdf, normal_quantile};

/// Gaussian reference `x ↦ Φ(scale_ratio · x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRef<T = f64> {
    pub scale_ratio: T,
}

impl<T: Real> GaussianRef<T> {
    pub fn new(scale_ratio: T) -> Result<Self> {
        if !(scale_ratio > T::zero()) || !scale_ratio.is_finite() {
            return Err(Error::Argument(format!(
                "reference scale ratio must be positive and finite, got {scale_ratio}"
            )));
        }
        Ok(GaussianRef { scale_ratio })
    }

    /// `Φ(x)`.
    pub fn pivotal() -> Self {
        GaussianRef { scale_ratio: T::one() }
    }

    #[inline]
    pub fn cdf(&self, x: T) -> T {
        normal_cdf(self.scale_ratio * x)
    }

    /// `∫_{−∞}^x Φ(s u) du`.
    #[inline]
    fn antiderivative(&self, x: T) -> T {
        let sx = self.scale_ratio * x;
        x * normal_cdf(sx) + normal_pdf(sx) / self.scale_ratio
    }

    /// Point where `Φ(s x) = level`, for `0 < level < 1`.
    #[inline]
    fn crossing(&self, level: T) -> T {
        T::lit(normal::quantile_unchecked(level.to_f64_lossy())) / self.scale_ratio
    }
}

/// Distance functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricKind {
    /// Kolmogorov sup-distance.
    Ks,
    /// Wasserstein-1 (`L¹` distance of distribution functions).
    W1,
    /// `∫ |F_N − Φ_s|^q dx`.
    Lq { q: f64 },
}

impl MetricKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            MetricKind::Lq { q } if !(*q >= 1.0) || !q.is_finite() => {
                Err(Error::Config(format!("lq metric needs q >= 1, got {q}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the metric accepts infinite (degenerate) statistics.
    pub fn accepts_degenerate(&self) -> bool {
        matches!(self, MetricKind::Ks)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Ks => write!(f, "ks"),
            MetricKind::W1 => write!(f, "w1"),
            MetricKind::Lq { q } => write!(f, "lq{q}"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s {
            "ks" => MetricKind::Ks,
            "w1" => MetricKind::W1,
            _ => match s.strip_prefix("lq").map(str::parse::<f64>) {
                Some(Ok(q)) => MetricKind::Lq { q },
                _ => {
                    return Err(Error::Config(format!(
                        "unknown metric \"{s}\", expected ks, w1 or lq<q> (e.g. lq2)"
                    )))
                }
            },
        };
        m.validate()?;
        Ok(m)
    }
}

impl TryFrom<String> for MetricKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricKind> for String {
    fn from(m: MetricKind) -> String {
        m.to_string()
    }
}

/// One metric evaluation at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub n: usize,
    pub rule: String,
    pub b: usize,
    pub reference: String,
    pub metric: MetricKind,
    pub estimate: f64,
    pub mc_stderr: f64,
    pub reps: usize,
    pub degenerate_count: usize,
}

fn check_sorted<T: Real>(sample: &[T]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Argument("distance of an empty sample".into()));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Argument("sample contains NaN".into()));
    }
    if sample.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Argument("sample must be sorted ascending".into()));
    }
    Ok(())
}

fn check_finite<T: Real>(sample: &[T]) -> Result<()> {
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument(
            "sample contains infinite statistics (degenerate variance estimates); \
             use truncated studentization for w1 and lq"
                .into(),
        ));
    }
    Ok(())
}

/// `sup_x |F_N(x) − Φ(s x)|`. Entries at `±∞` are allowed.
pub fn ks_distance<T: Real>(sample: &[T], reference: &GaussianRef<T>) -> Result<T> {
    check_sorted(sample)?;
    let n = T::from_count(sample.len());
    let mut d = T::zero();
    for (i, t) in sample.iter().enumerate() {
        let p = reference.cdf(*t);
        let hi = T::from_count(i + 1) / n;
        let lo = T::from_count(i) / n;
        d = d.max((hi - p).abs()).max((p - lo).abs());
    }
    Ok(d)
}

/// Step points `(t_i, F_N(t_i))` of an empirical CDF with multiplicities.
struct Steps<'a, T> {
    sample: &'a [T],
    counts: Option<&'a [u32]>,
    total: T,
}

impl<'a, T: Real> Steps<'a, T> {
    /// Calls `visit(t, level_after)` for every step with positive mass.
    fn for_each(&self, mut visit: impl FnMut(T, T)) {
        let mut cum = 0usize;
        for (i, t) in self.sample.iter().enumerate() {
            let m = self.counts.map_or(1, |c| c[i] as usize);
            if m == 0 {
                continue;
            }
            cum += m;
            visit(*t, T::from_count(cum) / self.total);
        }
    }
}

fn w1_steps<T: Real>(steps: &Steps<'_, T>, r: &GaussianRef<T>) -> T {
    let mut total = T::zero();
    // (previous point, its antiderivative, level to its right)
    let mut prev: Option<(T, T, T)> = None;
    steps.for_each(|t, level| {
        let psi_t = r.antiderivative(t);
        match prev {
            None => total += psi_t,
            Some((a, psi_a, c)) if t > a => {
                let x_star = r.crossing(c);
                let above = |lo: T, psi_lo: T, hi: T, psi_hi: T| psi_hi - psi_lo - c * (hi - lo);
                total += if x_star <= a {
                    above(a, psi_a, t, psi_t)
                } else if x_star >= t {
                    -above(a, psi_a, t, psi_t)
                } else {
                    let psi_x = r.antiderivative(x_star);
                    -above(a, psi_a, x_star, psi_x) + above(x_star, psi_x, t, psi_t)
                };
            }
            Some(_) => {}
        }
        prev = Some((t, psi_t, level));
    });
    let (last, _, _) = prev.expect("nonempty");
    total + r.antiderivative(-last)
}

/// `∫ |F_N(x) − Φ(s x)| dx`, exact up to rounding.
pub fn w1_distance<T: Real>(sample: &[T], reference: &GaussianRef<T>) -> Result<T> {
    check_sorted(sample)?;
    check_finite(sample)?;
    let steps = Steps {
        sample,
        counts: None,
        total: T::from_count(sample.len()),
    };
    Ok(w1_steps(&steps, reference))
}

/// W1 of the empirical CDF putting mass `counts[i]/Σcounts` on `sample[i]`.
pub fn w1_distance_weighted<T: Real>(
    sample: &[T],
    counts: &[u32],
    reference: &GaussianRef<T>,
) -> Result<T> {
    check_weighted(sample, counts)?;
    let steps = Steps {
        sample,
        counts: Some(counts),
        total: T::from_count(counts.iter().map(|c| *c as usize).sum()),
    };
    Ok(w1_steps(&steps, reference))
}

fn check_weighted<T: Real>(sample: &[T], counts: &[u32]) -> Result<()> {
    check_sorted(sample)?;
    check_finite(sample)?;
    if counts.len() != sample.len() || counts.iter().all(|c| *c == 0) {
        return Err(Error::Argument("counts must match the sample and have positive total".into()));
    }
    Ok(())
}

const SIMPSON_TOL: f64 = 1e-10;
const TAIL_CUTOFF: f64 = 1e-14;
const MAX_DEPTH: u32 = 48;

fn simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    #[allow(clippy::too_many_arguments)]
    fn rec<T: Real>(
        f: &impl Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: u32,
    ) -> T {
        let two = T::lit(2.0);
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = f(lm);
        let frm = f(rm);
        let six = T::lit(6.0);
        let left = (m - a) * (fa + T::lit(4.0) * flm + fm) / six;
        let right = (b - m) * (fm + T::lit(4.0) * frm + fb) / six;
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
            return left + right + delta / T::lit(15.0);
        }
        rec(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
    }
    if !(b > a) {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / T::lit(2.0);
    let fm = f(m);
    let whole = (b - a) * (fa + T::lit(4.0) * fm + fb) / T::lit(6.0);
    rec(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integrates `|level − Φ(s x)|^q` on `[a, b]`, splitting at the crossing.
fn lq_piece<T: Real>(r: &GaussianRef<T>, level: T, q: T, a: T, b: T, tol: T) -> T {
    let f = |x: T| (level - r.cdf(x)).abs().powf(q);
    if level > T::zero() && level < T::one() {
        let x_star = r.crossing(level);
        if x_star > a && x_star < b {
            return simpson(&f, a, x_star, tol) + simpson(&f, x_star, b, tol);
        }
    }
    simpson(&f, a, b, tol)
}

/// Far end of a tail where `Φ(s x)^q` drops below the cutoff.
fn tail_end<T: Real>(r: &GaussianRef<T>, q: T, from: T, direction: T) -> T {
    let cut = T::lit(TAIL_CUTOFF);
    let mut width = T::one() / r.scale_ratio;
    loop {
        let x = from + direction * width;
        if r.cdf(-direction * x).powf(q) < cut {
            return x;
        }
        width *= T::lit(2.0);
    }
}

fn lq_steps<T: Real>(steps: &Steps<'_, T>, r: &GaussianRef<T>, q: T) -> T {
    let tol = T::lit(SIMPSON_TOL).max(T::epsilon() * T::lit(64.0));
    let mut total = T::zero();
    let mut prev: Option<(T, T)> = None;
    steps.for_each(|t, level| {
        match prev {
            None => {
                let lo = tail_end(r, q, t, -T::one());
                total += lq_piece(r, T::zero(), q, lo, t, tol);
            }
            Some((a, c)) => total += lq_piece(r, c, q, a, t, tol),
        }
        prev = Some((t, level));
    });
    let (last, _) = prev.expect("nonempty");
    let hi = tail_end(r, q, last, T::one());
    total + lq_piece(r, T::one(), q, last, hi, tol)
}

fn check_q<T: Real>(q: T) -> Result<()> {
    if !(q >= T::one()) {
        return Err(Error::Argument(format!("lq distance needs q >= 1, got {q}")));
    }
    Ok(())
}

/// `∫ |F_N(x) − Φ(s x)|^q dx` (the integral itself, without the `1/q`
/// power).
pub fn lq_distance<T: Real>(sample: &[T], reference: &GaussianRef<T>, q: T) -> Result<T> {
    check_q(q)?;
    check_sorted(sample)?;
    check_finite(sample)?;
    let steps = Steps {
        sample,
        counts: None,
        total: T::from_count(sample.len()),
    };
    Ok(lq_steps(&steps, reference, q))
}

/// Weighted counterpart of [`lq_distance`].
pub fn lq_distance_weighted<T: Real>(
    sample: &[T],
    counts: &[u32],
    reference: &GaussianRef<T>,
    q: T,
) -> Result<T> {
    check_q(q)?;
    check_weighted(sample, counts)?;
    let steps = Steps {
        sample,
        counts: Some(counts),
        total: T::from_count(counts.iter().map(|c| *c as usize).sum()),
    };
    Ok(lq_steps(&steps, reference, q))
}

/// Evaluates `metric` on a sorted sample.
pub fn distance<T: Real>(metric: MetricKind, sample: &[T], reference: &GaussianRef<T>) -> Result<T> {
    match metric {
        MetricKind::Ks => ks_distance(sample, reference),
        MetricKind::W1 => w1_distance(sample, reference),
        MetricKind::Lq { q } => lq_distance(sample, reference, T::lit(q)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_values() {
        let piv = GaussianRef::<f64>::pivotal();
        assert_eq!(ks_distance(&[0.0], &piv).unwrap(), 0.5);
        assert_abs_diff_eq!(ks_distance(&[-1.0, 1.0], &piv).unwrap(), 0.341_344_746_068_542_9, epsilon = 1e-15);
        assert_abs_diff_eq!(w1_distance(&[0.0], &piv).unwrap(), (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        let half = GaussianRef::new(2.0).unwrap();
        assert_abs_diff_eq!(w1_distance(&[0.0], &half).unwrap(), 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_abs_diff_eq!(lq_distance(&[0.0], &piv, 2.0).unwrap(), 0.233_694_977_255_109_07, epsilon = 1e-9);
    }

    #[test]
    fn lq_one_equals_w1() {
        let sample = [-2.1, -0.3, -0.3, 0.2, 0.9, 1.7, 4.0];
        let r = GaussianRef::new(1.3).unwrap();
        let w = w1_distance(&sample, &r).unwrap();
        let l = lq_distance(&sample, &r, 1.0).unwrap();
        assert_abs_diff_eq!(w, l, epsilon = 1e-8);
    }

    #[test]
    fn w1_matches_numeric_integral() {
        let sample = [-1.5, -0.2, 0.4, 0.4, 2.2];
        let r = GaussianRef::new(0.8).unwrap();
        let n = sample.len() as f64;
        let f = |x: f64| {
            let k = sample.iter().filter(|s| **s <= x).count() as f64;
            (k / n - r.cdf(x)).abs()
        };
        let h = 1e-4;
        let mut acc = 0.0;
        let mut x = -20.0;
        while x < 20.0 {
            acc += f(x + h / 2.0) * h;
            x += h;
        }
        assert_abs_diff_eq!(w1_distance(&sample, &r).unwrap(), acc, epsilon = 1e-6);
    }

    #[test]
    fn weighted_matches_expanded() {
        let sample = [-1.0, 0.1, 0.5, 2.0];
        let counts = [2, 0, 1, 3];
        let expanded = [-1.0, -1.0, 0.5, 2.0, 2.0, 2.0];
        let r = GaussianRef::pivotal();
        assert_abs_diff_eq!(
            w1_distance_weighted(&sample, &counts, &r).unwrap(),
            w1_distance(&expanded, &r).unwrap(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            lq_distance_weighted(&sample, &counts, &r, 2.0).unwrap(),
            lq_distance(&expanded, &r, 2.0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_entries() {
        let piv = GaussianRef::<f64>::pivotal();
        let s = [f64::NEG_INFINITY, 0.0, f64::INFINITY];
        assert_abs_diff_eq!(ks_distance(&s, &piv).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(w1_distance(&s, &piv).unwrap_err().to_string().contains("truncated"));
        assert!(ks_distance::<f64>(&[], &piv).is_err());
        assert!(ks_distance(&[1.0, 0.0], &piv).is_err());
        assert!(lq_distance(&[0.0], &piv, 0.5).is_err());
    }

    #[test]
    fn metric_labels_round_trip() {
        for m in [MetricKind::Ks, MetricKind::W1, MetricKind::Lq { q: 2.0 }, MetricKind::Lq { q: 1.5 }] {
            assert_eq!(m.to_string().parse::<MetricKind>().unwrap(), m);
        }
        assert!("lq0.5".parse::<MetricKind>().is_err());
        assert!("kolmogorov".parse::<MetricKind>().is_err());
    }

    #[test]
    fn f32_metrics() {
        let r = GaussianRef::<f32>::pivotal();
        assert!((w1_distance(&[0.0f32], &r).unwrap() - 0.797_884_6).abs() < 1e-5);
        assert_eq!(ks_distance(&[0.0f32], &r).unwrap(), 0.5);
    }
}
