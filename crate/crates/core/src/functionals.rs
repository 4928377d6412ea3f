//! Window functionals `X_k = f(Y_k, …, Y_{k−d+1}) − E f(…)`.
//!
//! Every functional carries Hölder constants `(α, β, C_f)` for the bound
//!
//! ```text
//! |f(x) − f(y)| ≤ C_f (‖x−y‖^α ∧ 1)(1 + ‖x‖ + ‖y‖)^β,   ‖·‖ = ℓ¹ on ℝ^d.
//! ```
//!
//! Custom functionals are restricted to a small expression language so that
//! their declared constants can be checked against constants derived from
//! the expression tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    #[default]
    Identity,
    CenteredSquare,
    CenteredAbs,
    /// `Y_k · Y_{k−1}`.
    LagProduct,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    #[default]
    Analytic,
    Calibrated,
}

/// Expression tree over the window coordinates (`coord(0)` is `Y_k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Coord(usize),
    Const(f64),
    Affine { scale: f64, shift: f64, arg: Box<Expr> },
    Product(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Tanh(Box<Expr>),
    Clip { lo: f64, hi: f64, arg: Box<Expr> },
}

/// Growth and increment constants of an expression:
/// `|e(x) − e(y)| ≤ lip ‖x−y‖ (1+‖x‖+‖y‖)^lip_power` and
/// `|e(x)| ≤ amp (1+‖x‖)^growth`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ExprBounds {
    lip: f64,
    lip_power: f64,
    amp: f64,
    growth: f64,
}

impl Expr {
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Expr::Coord(i) => w[*i],
            Expr::Const(c) => *c,
            Expr::Affine { scale, shift, arg } => scale * arg.eval(w) + shift,
            Expr::Product(a, b) => a.eval(w) * b.eval(w),
            Expr::Abs(a) => a.eval(w).abs(),
            Expr::Tanh(a) => a.eval(w).tanh(),
            Expr::Clip { lo, hi, arg } => arg.eval(w).clamp(*lo, *hi),
        }
    }

    fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Coord(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Affine { arg, .. } | Expr::Abs(arg) | Expr::Tanh(arg) | Expr::Clip { arg, .. } => {
                arg.max_coord()
            }
            Expr::Product(a, b) => a.max_coord().max(b.max_coord()),
        }
    }

    fn bounds(&self) -> Result<ExprBounds> {
        Ok(match self {
            Expr::Coord(_) => ExprBounds { lip: 1.0, lip_power: 0.0, amp: 1.0, growth: 1.0 },
            Expr::Const(c) => ExprBounds { lip: 0.0, lip_power: 0.0, amp: c.abs(), growth: 0.0 },
            Expr::Affine { scale, shift, arg } => {
                let e = arg.bounds()?;
                ExprBounds {
                    lip: scale.abs() * e.lip,
                    lip_power: e.lip_power,
                    amp: scale.abs() * e.amp + shift.abs(),
                    growth: e.growth,
                }
            }
            Expr::Abs(arg) => arg.bounds()?,
            Expr::Tanh(arg) => ExprBounds { amp: 1.0, growth: 0.0, ..arg.bounds()? },
            Expr::Clip { lo, hi, arg } => {
                if lo > hi {
                    return Err(Error::Config(format!("clip bounds reversed: [{lo}, {hi}]")));
                }
                ExprBounds { amp: lo.abs().max(hi.abs()), growth: 0.0, ..arg.bounds()? }
            }
            Expr::Product(a, b) => {
                let (a, b) = (a.bounds()?, b.bounds()?);
                ExprBounds {
                    lip: a.amp * b.lip + b.amp * a.lip,
                    lip_power: (a.growth + b.lip_power).max(b.growth + a.lip_power),
                    amp: a.amp * b.amp,
                    growth: a.growth + b.growth,
                }
            }
        })
    }
}

/// Hölder constants `(α, β, C_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConstants {
    pub alpha: f64,
    pub beta: f64,
    pub c_f: f64,
}

impl HolderConstants {
    /// Whether these constants are implied by `derived`.
    pub fn implied_by(&self, derived: &HolderConstants) -> bool {
        self.alpha > 0.0
            && self.alpha <= derived.alpha
            && self.beta >= derived.beta
            && self.c_f >= derived.c_f
    }

    /// Evaluates the right-hand side of the Hölder bound.
    pub fn bound(&self, x: &[f64], y: &[f64]) -> f64 {
        let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
        let nx: f64 = x.iter().map(|a| a.abs()).sum();
        let ny: f64 = y.iter().map(|a| a.abs()).sum();
        self.c_f * dist.powf(self.alpha).min(1.0) * (1.0 + nx + ny).powf(self.beta)
    }
}

/// Constants implied by an expression: Lipschitz pieces give `α = 1`; large
/// increments are absorbed either by one extra power of the norm or by the
/// growth bound, whichever yields the smaller `β`.
fn derive_constants(e: &Expr) -> Result<HolderConstants> {
    let b = e.bounds()?;
    let via_growth = b.lip_power.max(b.growth);
    let via_lip = b.lip_power + 1.0;
    Ok(if via_growth < via_lip {
        HolderConstants { alpha: 1.0, beta: via_growth, c_f: b.lip.max(2.0 * b.amp) }
    } else {
        HolderConstants { alpha: 1.0, beta: via_lip, c_f: b.lip }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFunctional {
    pub d: usize,
    pub expr: Expr,
    pub declared: HolderConstants,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    #[serde(default)]
    pub kind: FunctionalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomFunctional>,
    #[serde(default)]
    pub centering: Centering,
}

impl FunctionalSpec {
    pub fn of(kind: FunctionalKind) -> Self {
        FunctionalSpec { kind, custom: None, centering: Centering::Analytic }
    }

    pub fn identity() -> Self {
        Self::of(FunctionalKind::Identity)
    }

    pub fn calibrated(mut self) -> Self {
        self.centering = Centering::Calibrated;
        self
    }

    pub fn custom(custom: CustomFunctional) -> Self {
        FunctionalSpec {
            kind: FunctionalKind::Custom,
            custom: Some(custom),
            centering: Centering::Calibrated,
        }
    }

    /// Window length `d`.
    pub fn d(&self) -> usize {
        match self.kind {
            FunctionalKind::LagProduct => 2,
            FunctionalKind::Custom => self.custom.as_ref().map_or(1, |c| c.d),
            _ => 1,
        }
    }

    /// Declared Hölder constants.
    pub fn holder(&self) -> HolderConstants {
        match self.kind {
            FunctionalKind::Identity | FunctionalKind::CenteredAbs => {
                HolderConstants { alpha: 1.0, beta: 1.0, c_f: 1.0 }
            }
            FunctionalKind::CenteredSquare | FunctionalKind::LagProduct => {
                HolderConstants { alpha: 1.0, beta: 2.0, c_f: 2.0 }
            }
            FunctionalKind::Custom => self
                .custom
                .as_ref()
                .map(|c| c.declared)
                .unwrap_or(HolderConstants { alpha: 1.0, beta: 1.0, c_f: 1.0 }),
        }
    }

    /// Expression tree equivalent to the functional's uncentred part.
    pub fn expr(&self) -> Expr {
        match self.kind {
            FunctionalKind::Identity => Expr::Coord(0),
            FunctionalKind::CenteredSquare => {
                Expr::Product(Box::new(Expr::Coord(0)), Box::new(Expr::Coord(0)))
            }
            FunctionalKind::CenteredAbs => Expr::Abs(Box::new(Expr::Coord(0))),
            FunctionalKind::LagProduct => {
                Expr::Product(Box::new(Expr::Coord(0)), Box::new(Expr::Coord(1)))
            }
            FunctionalKind::Custom => self
                .custom
                .as_ref()
                .map(|c| c.expr.clone())
                .unwrap_or(Expr::Coord(0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.custom) {
            (FunctionalKind::Custom, None) => {
                return Err(Error::Config("custom functional needs a `custom` block".into()))
            }
            (FunctionalKind::Custom, Some(c)) => {
                if c.d == 0 {
                    return Err(Error::Config("custom functional needs d >= 1".into()));
                }
                if let Some(m) = c.expr.max_coord() {
                    if m >= c.d {
                        return Err(Error::Config(format!(
                            "custom functional uses coord({m}) but d = {}",
                            c.d
                        )));
                    }
                }
            }
            (_, Some(_)) => {
                return Err(Error::Config(
                    "`custom` block given for a built-in functional kind".into(),
                ))
            }
            _ => {}
        }
        let derived = derive_constants(&self.expr())?;
        let declared = self.holder();
        if !declared.implied_by(&derived) {
            return Err(Error::Config(format!(
                "declared Hölder constants {declared:?} are not implied by the expression \
                 (derived alpha={}, beta={}, c_f={})",
                derived.alpha, derived.beta, derived.c_f
            )));
        }
        Ok(())
    }

    /// Constants derived from the expression tree.
    pub fn derived_holder(&self) -> Result<HolderConstants> {
        derive_constants(&self.expr())
    }
}

/// A validated functional ready for evaluation.
#[derive(Debug, Clone)]
pub struct Functional {
    spec: FunctionalSpec,
    expr: Expr,
}

impl Functional {
    pub fn new(spec: &FunctionalSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Functional { spec: spec.clone(), expr: spec.expr() })
    }

    pub fn spec(&self) -> &FunctionalSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// Uncentred value on the window `(Y_k, Y_{k−1}, …, Y_{k−d+1})`.
    pub fn apply(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.d() {
            return Err(Error::Argument(format!(
                "window length {} does not match d = {}",
                window.len(),
                self.d()
            )));
        }
        Ok(self.apply_unchecked(window))
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, window: &[f64]) -> f64 {
        match self.spec.kind {
            FunctionalKind::Identity => window[0],
            FunctionalKind::CenteredSquare => window[0] * window[0],
            FunctionalKind::CenteredAbs => window[0].abs(),
            FunctionalKind::LagProduct => window[0] * window[1],
            FunctionalKind::Custom => self.expr.eval(window),
        }
    }
}

/// Uncentred value of `functional` on `window`.
pub fn apply(functional: &FunctionalSpec, window: &[f64]) -> Result<f64> {
    Functional::new(functional)?.apply(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        assert_eq!(apply(&FunctionalSpec::identity(), &[3.5]).unwrap(), 3.5);
        let sq = FunctionalSpec::of(FunctionalKind::CenteredSquare);
        assert_eq!(apply(&sq, &[-2.0]).unwrap(), 4.0);
        let lp = FunctionalSpec::of(FunctionalKind::LagProduct);
        assert_eq!(apply(&lp, &[2.0, -3.0]).unwrap(), -6.0);
        assert!(apply(&lp, &[2.0]).is_err());
    }

    #[test]
    fn builtin_declarations_are_consistent() {
        for k in [
            FunctionalKind::Identity,
            FunctionalKind::CenteredSquare,
            FunctionalKind::CenteredAbs,
            FunctionalKind::LagProduct,
        ] {
            FunctionalSpec::of(k).validate().unwrap();
        }
        let id = FunctionalSpec::identity();
        assert_eq!(id.d(), 1);
        assert_eq!(id.holder(), HolderConstants { alpha: 1.0, beta: 1.0, c_f: 1.0 });
    }

    #[test]
    fn custom_declaration_checked() {
        let expr = Expr::Tanh(Box::new(Expr::Product(
            Box::new(Expr::Coord(0)),
            Box::new(Expr::Coord(1)),
        )));
        let ok = CustomFunctional {
            d: 2,
            expr: expr.clone(),
            declared: HolderConstants { alpha: 1.0, beta: 1.0, c_f: 2.0 },
        };
        FunctionalSpec::custom(ok).validate().unwrap();
        let too_small = CustomFunctional {
            d: 2,
            expr: expr.clone(),
            declared: HolderConstants { alpha: 1.0, beta: 0.5, c_f: 2.0 },
        };
        assert!(FunctionalSpec::custom(too_small).validate().is_err());
        let bad_d = CustomFunctional {
            d: 1,
            expr,
            declared: HolderConstants { alpha: 1.0, beta: 3.0, c_f: 9.0 },
        };
        assert!(FunctionalSpec::custom(bad_d).validate().is_err());
    }

    #[test]
    fn json_shape() {
        let s: FunctionalSpec =
            serde_json::from_str(r#"{"kind":"lag_product","centering":"calibrated"}"#).unwrap();
        assert_eq!(s.d(), 2);
        assert!(serde_json::from_str::<FunctionalSpec>(r#"{"kind":"identity","bogus":1}"#).is_err());
    }
}
