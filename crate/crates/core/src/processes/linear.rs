//! Finite-memory linear filters `Y_k = σ Σ_{i<M} a_i ε_{k−i}`.
//!
//! Long paths are produced by FFT convolution; short filters and single
//! coupled values use the direct sum.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient decay of a linear process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearDecay {
    /// `a_i = ρ^i`, truncated at the first `M` with `ρ^M < 1e−12`.
    Geometric { rho: f64 },
    /// `a_i = (1+i)^{−q}` for `i < cutoff`.
    Polynomial {
        q: f64,
        #[serde(default = "default_cutoff")]
        cutoff: usize,
    },
    /// Explicit coefficients `a_0, …, a_{M−1}`.
    Explicit { coefficients: Vec<f64> },
}

fn default_cutoff() -> usize {
    10_000
}

/// Smallest `m ≥ 0` with `ρ^m < 1e−12` (0 when `ρ = 0`).
pub fn geometric_memory(rho: f64) -> usize {
    let r = rho.abs();
    if r == 0.0 {
        return 0;
    }
    let mut m = ((1e-12f64).ln() / r.ln()).ceil() as usize;
    while r.powi(m as i32) >= 1e-12 {
        m += 1;
    }
    while m > 0 && r.powi(m as i32 - 1) < 1e-12 {
        m -= 1;
    }
    m
}

impl LinearDecay {
    pub fn validate(&self) -> Result<()> {
        match self {
            LinearDecay::Geometric { rho } if !(*rho > 0.0 && *rho < 1.0) => Err(Error::Config(
                format!("geometric decay requires 0 < rho < 1, got {rho}"),
            )),
            LinearDecay::Polynomial { q, .. } if !(*q > 1.0) => Err(Error::Config(format!(
                "polynomial decay requires q > 1 for summable coefficients, got {q}"
            ))),
            LinearDecay::Polynomial { cutoff, .. } if *cutoff < 1 => {
                Err(Error::Config("polynomial decay requires cutoff M >= 1".into()))
            }
            LinearDecay::Explicit { coefficients } if coefficients.is_empty() => {
                Err(Error::Config("explicit coefficients must be non-empty".into()))
            }
            LinearDecay::Explicit { coefficients } if coefficients.iter().any(|c| !c.is_finite()) => {
                Err(Error::Config("explicit coefficients must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Truncated coefficient vector.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self {
            LinearDecay::Geometric { rho } => {
                let m = geometric_memory(*rho).max(1);
                (0..m).map(|i| rho.powi(i as i32)).collect()
            }
            LinearDecay::Polynomial { q, cutoff } => {
                (0..*cutoff).map(|i| (1.0 + i as f64).powf(-q)).collect()
            }
            LinearDecay::Explicit { coefficients } => coefficients.clone(),
        })
    }
}

/// Smallest `m ≥ n` whose prime factors are 2, 3 and 5.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct ConvPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    coeff_spectrum: Vec<Complex64>,
}

/// Scratch buffers reused across path generations.
#[derive(Default)]
pub struct ConvScratch {
    buf: Vec<Complex64>,
    fft: Vec<Complex64>,
}

/// Memory below which the direct sum is used instead of the FFT.
const DIRECT_MEMORY: usize = 48;

pub struct LinearFilter {
    coeffs: Vec<f64>,
    sigma: f64,
    plans: RwLock<HashMap<usize, Arc<ConvPlan>>>,
}

impl std::fmt::Debug for LinearFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearFilter")
            .field("memory", &self.coeffs.len())
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl Clone for LinearFilter {
    fn clone(&self) -> Self {
        LinearFilter::new(self.coeffs.clone(), self.sigma)
    }
}

impl LinearFilter {
    pub fn new(coeffs: Vec<f64>, sigma: f64) -> Self {
        LinearFilter {
            coeffs,
            sigma,
            plans: RwLock::new(HashMap::new()),
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn memory(&self) -> usize {
        self.coeffs.len()
    }

    /// `σ Σ_i a_i ε[end − i]`, where `eps[end]` is the newest innovation.
    #[inline]
    pub fn value_at(&self, eps: &[f64], end: usize) -> f64 {
        let mut s = 0.0;
        for (i, a) in self.coeffs.iter().enumerate() {
            s += a * eps[end - i];
        }
        self.sigma * s
    }

    fn plan(&self, size: usize) -> Arc<ConvPlan> {
        if let Some(p) = self.plans.read().expect("plan cache poisoned").get(&size) {
            return p.clone();
        }
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut coeff_spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (c, a) in coeff_spectrum.iter_mut().zip(&self.coeffs) {
            c.re = *a;
        }
        forward.process(&mut coeff_spectrum);
        let scale = self.sigma / size as f64;
        for c in coeff_spectrum.iter_mut() {
            *c *= scale;
        }
        let plan = Arc::new(ConvPlan {
            forward,
            inverse,
            coeff_spectrum,
        });
        self.plans
            .write()
            .expect("plan cache poisoned")
            .entry(size)
            .or_insert(plan)
            .clone()
    }

    /// Filters `eps` (length `n_out + M − 1`) into `out` (length `n_out`).
    pub fn filter(&self, eps: &[f64], out: &mut Vec<f64>, scratch: &mut ConvScratch) {
        let m = self.coeffs.len();
        let n_out = eps.len() + 1 - m;
        out.clear();
        if m <= DIRECT_MEMORY {
            out.extend((0..n_out).map(|j| self.value_at(eps, j + m - 1)));
            return;
        }
        let size = fast_len(eps.len());
        let plan = self.plan(size);
        scratch.buf.clear();
        scratch
            .buf
            .extend(eps.iter().map(|&e| Complex64::new(e, 0.0)));
        scratch.buf.resize(size, Complex64::new(0.0, 0.0));
        let need = plan
            .forward
            .get_inplace_scratch_len()
            .max(plan.inverse.get_inplace_scratch_len());
        if scratch.fft.len() < need {
            scratch.fft.resize(need, Complex64::new(0.0, 0.0));
        }
        plan.forward
            .process_with_scratch(&mut scratch.buf, &mut scratch.fft[..need]);
        for (b, c) in scratch.buf.iter_mut().zip(&plan.coeff_spectrum) {
            *b *= *c;
        }
        plan.inverse
            .process_with_scratch(&mut scratch.buf, &mut scratch.fft[..need]);
        out.extend(scratch.buf[m - 1..m - 1 + n_out].iter().map(|c| c.re));
    }
}
