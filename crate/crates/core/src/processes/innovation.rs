//! Innovation laws. All laws are standardised to mean zero and unit variance
//! (Student-t only when `ν > 2`), and each draw consumes exactly one 64-bit
//! word so coupled replicas stay aligned index by index.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnovationLaw {
    #[default]
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    Uniform,
    /// Student-t with `nu` degrees of freedom, rescaled to unit variance
    /// when `nu > 2`. Laws with `nu <= 6` lack the six moments the rate
    /// theory assumes; use them for stress runs only.
    StudentT { nu: f64 },
}

impl InnovationLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InnovationLaw::StudentT { nu } if !(nu > 0.0) => Err(Error::Config(format!(
                "student_t requires nu > 0, got {nu}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, InnovationLaw::Gaussian)
    }

    /// `E|ε|^q` for the standardised law (`+∞` when it does not exist).
    pub fn abs_moment(&self, q: f64) -> f64 {
        match *self {
            InnovationLaw::Gaussian => gaussian_abs_moment(q),
            InnovationLaw::Uniform => 3f64.powf(q / 2.0) / (q + 1.0),
            InnovationLaw::StudentT { nu } => {
                if q >= nu {
                    return f64::INFINITY;
                }
                let raw = (q / 2.0 * nu.ln() + ln_gamma((q + 1.0) / 2.0) + ln_gamma((nu - q) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(nu / 2.0))
                .exp();
                if nu > 2.0 {
                    raw * ((nu - 2.0) / nu).powf(q / 2.0)
                } else {
                    raw
                }
            }
        }
    }

    pub fn sampler(&self) -> Result<InnovationSampler> {
        self.validate()?;
        Ok(match *self {
            InnovationLaw::Gaussian => InnovationSampler::Gaussian,
            InnovationLaw::Uniform => InnovationSampler::Uniform,
            InnovationLaw::StudentT { nu } => {
                let dist = StudentsT::new(0.0, 1.0, nu)
                    .map_err(|e| Error::Config(format!("student_t: {e}")))?;
                let scale = if nu > 2.0 { ((nu - 2.0) / nu).sqrt() } else { 1.0 };
                InnovationSampler::StudentT { dist, scale }
            }
        })
    }
}

/// `E|Z|^q = 2^{q/2} Γ((q+1)/2) / √π` for a standard normal `Z`.
pub fn gaussian_abs_moment(q: f64) -> f64 {
    (q / 2.0 * 2f64.ln() + ln_gamma((q + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// Prepared sampler for an [`InnovationLaw`].
#[derive(Debug, Clone)]
pub enum InnovationSampler {
    Gaussian,
    Uniform,
    StudentT { dist: StudentsT, scale: f64 },
}

impl InnovationSampler {
    #[inline]
    pub fn draw(&self, stream: &mut Stream) -> f64 {
        match self {
            InnovationSampler::Gaussian => stream.standard_normal(),
            InnovationSampler::Uniform => (2.0 * stream.uniform() - 1.0) * 3f64.sqrt(),
            InnovationSampler::StudentT { dist, scale } => dist.inverse_cdf(stream.uniform()) * scale,
        }
    }
}
