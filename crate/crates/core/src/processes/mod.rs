//! Stationary weakly dependent processes driven by i.i.d. innovations.
//!
//! Each class is a causal map `Y_k = g(ε_k, ε_{k−1}, …)`, realised either as
//! a stable recursion run through a burn-in or as a finite-memory linear
//! filter. The emitted series is `X_k = f(Y_k, …, Y_{k−d+1}) − E f`.
//!
//! Innovations are indexed by time. A path of length `n` with burn-in `B`
//! and window `d` consumes the innovations with indices `2−d−B ..= n` in
//! increasing order, each from the path stream. Coupled replicas consume
//! the same path stream and draw replacements for swapped indices from the
//! coupling stream, so the first coordinate of a coupled pair equals the
//! corresponding path value.

pub mod calibration;
pub mod innovation;
pub mod linear;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::LinearModel;
use crate::error::{Error, Result};
use crate::functionals::{Centering, Functional, FunctionalKind, FunctionalSpec};
use crate::rng::{derive_stream, Stream, StreamKey, StreamRole};

pub use calibration::{CalibrationCache, CalibrationEntry, CALIBRATION_SEED};
pub use innovation::{InnovationLaw, InnovationSampler};
pub use linear::{ConvScratch, LinearDecay, LinearFilter};

use calibration::BatchMeans;

/// Non-linearity of an iterated AR map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    #[default]
    None,
    /// `ψ(y) = c·tanh(y/c)`.
    TanhScale { c: f64 },
}

fn one() -> f64 {
    1.0
}

/// Process class and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessClass {
    /// `Y_k = φ Y_{k−1} + σ_ε ε_k`.
    Ar1 {
        phi: f64,
        #[serde(default = "one")]
        sigma_eps: f64,
    },
    /// `Y_k = σ_ε Σ_{i<M} a_i ε_{k−i}`.
    Linear {
        decay: LinearDecay,
        #[serde(default = "one")]
        sigma_eps: f64,
    },
    /// `Y_k = ε_k L_k`, `L_k² = μ + Σ α_i L_{k−i}² + Σ β_j Y_{k−j}²`.
    Garch {
        mu: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        /// Check the moment contraction with `q = 12` instead of `q = 4`.
        #[serde(default)]
        strict_moments: bool,
    },
    /// `Y_k = φ ψ(Y_{k−1}) + σ_ε ε_k`.
    IteratedAr {
        phi: f64,
        #[serde(default)]
        nonlinearity: Nonlinearity,
        #[serde(default = "one")]
        sigma_eps: f64,
    },
    /// Ornstein–Uhlenbeck `dY = −θY dt + √2 σ dB` sampled every `δ`.
    OuSde { theta: f64, sigma_diff: f64, delta: f64 },
    /// Log-norm increments of a product of 2×2 matrices with i.i.d.
    /// log-normal entries, acting on the ℓ¹-normalised positive cone.
    PositiveMatrixProduct { mu_l: f64, s_l: f64 },
    /// Log-norm increments of the left random walk on GL₂ with steps
    /// `R(U₁) diag(e^S, e^{−S}) R(U₂)`, `U` uniform angles, `S ~ N(0, τ²)`,
    /// started from the direction at `start_angle`.
    Gl2RandomWalk {
        tau: f64,
        #[serde(default)]
        start_angle: f64,
    },
}

impl ProcessClass {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessClass::Ar1 { .. } => "ar1",
            ProcessClass::Linear { .. } => "linear",
            ProcessClass::Garch { .. } => "garch",
            ProcessClass::IteratedAr { .. } => "iterated_ar",
            ProcessClass::OuSde { .. } => "ou_sde",
            ProcessClass::PositiveMatrixProduct { .. } => "positive_matrix_product",
            ProcessClass::Gl2RandomWalk { .. } => "gl2_random_walk",
        }
    }

    fn is_matrix_class(&self) -> bool {
        matches!(
            self,
            ProcessClass::PositiveMatrixProduct { .. } | ProcessClass::Gl2RandomWalk { .. }
        )
    }
}

/// Declarative description of a process; seeds all generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub model: ProcessClass,
    #[serde(default)]
    pub innovation_law: InnovationLaw,
    /// Overrides the default burn-in. Ignored by linear processes, whose
    /// finite memory is represented exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub functional: FunctionalSpec,
}

impl ProcessSpec {
    pub fn new(model: ProcessClass) -> Self {
        ProcessSpec {
            model,
            innovation_law: InnovationLaw::Gaussian,
            burn_in: None,
            functional: FunctionalSpec::identity(),
        }
    }

    pub fn ar1(phi: f64) -> Self {
        Self::new(ProcessClass::Ar1 { phi, sigma_eps: 1.0 })
    }

    pub fn polynomial(q: f64, cutoff: usize) -> Self {
        Self::new(ProcessClass::Linear {
            decay: LinearDecay::Polynomial { q, cutoff },
            sigma_eps: 1.0,
        })
    }

    pub fn with_functional(mut self, functional: FunctionalSpec) -> Self {
        self.functional = functional;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }

    pub fn with_law(mut self, law: InnovationLaw) -> Self {
        self.innovation_law = law;
        self
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 64 bits of [`hash_hex`](Self::hash_hex).
    pub fn hash64(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// Checks the class-specific stationarity conditions.
    pub fn validate(&self) -> Result<()> {
        self.innovation_law.validate()?;
        self.functional.validate()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match &self.model {
            ProcessClass::Ar1 { phi, sigma_eps } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::Config(format!(
                        "ar1 stationarity requires |phi| < 1, got phi = {phi}"
                    )));
                }
                positive("sigma_eps", *sigma_eps)
            }
            ProcessClass::Linear { decay, sigma_eps } => {
                decay.validate()?;
                positive("sigma_eps", *sigma_eps)
            }
            ProcessClass::IteratedAr {
                phi,
                nonlinearity,
                sigma_eps,
            } => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::Config(format!(
                        "iterated_ar contraction requires |phi| < 1, got phi = {phi}"
                    )));
                }
                if let Nonlinearity::TanhScale { c } = nonlinearity {
                    positive("tanh scale c", *c)?;
                }
                positive("sigma_eps", *sigma_eps)
            }
            ProcessClass::OuSde {
                theta,
                sigma_diff,
                delta,
            } => {
                if !(*theta > 0.0) {
                    return Err(Error::Config(format!(
                        "ou_sde stability condition requires theta > 0, got theta = {theta}"
                    )));
                }
                positive("sigma_diff", *sigma_diff)?;
                positive("delta", *delta)
            }
            ProcessClass::Garch {
                mu, alpha, beta, ..
            } => {
                positive("garch mu", *mu)?;
                if alpha.iter().chain(beta).any(|c| !(*c >= 0.0)) {
                    return Err(Error::Config("garch coefficients must be >= 0".into()));
                }
                let g = garch_gamma_c(&self.model, &self.innovation_law)?;
                if !(g < 1.0) {
                    return Err(Error::Config(format!(
                        "garch moment contraction requires gamma_C < 1, computed gamma_C = {g}"
                    )));
                }
                Ok(())
            }
            ProcessClass::PositiveMatrixProduct { mu_l, s_l } => {
                if !mu_l.is_finite() {
                    return Err(Error::Config("mu_l must be finite".into()));
                }
                positive("log-normal scale s_l", *s_l)
            }
            ProcessClass::Gl2RandomWalk { tau, start_angle } => {
                if !start_angle.is_finite() {
                    return Err(Error::Config("start_angle must be finite".into()));
                }
                positive("log singular value scale tau", *tau)
            }
        }
    }
}

/// Moment index used by the GARCH contraction check.
pub fn garch_moment_index(strict: bool) -> f64 {
    if strict {
        12.0
    } else {
        4.0
    }
}

/// `γ_C = Σ_{i≤r} (α_i + β_i ‖ε²‖_{q/2})`, the Minkowski bound of
/// `Σ ‖α_i + β_i ε²‖_{q/2}` (missing coefficients count as zero).
pub fn garch_gamma_c(model: &ProcessClass, law: &InnovationLaw) -> Result<f64> {
    let ProcessClass::Garch {
        alpha,
        beta,
        strict_moments,
        ..
    } = model
    else {
        return Err(Error::Argument("gamma_C is defined for garch only".into()));
    };
    let q = garch_moment_index(*strict_moments);
    let sq_norm = law.abs_moment(q).powf(2.0 / q);
    let r = alpha.len().max(beta.len());
    Ok((0..r)
        .map(|i| alpha.get(i).copied().unwrap_or(0.0) + beta.get(i).copied().unwrap_or(0.0) * sq_norm)
        .sum())
}

/// Which innovations a coupled replica replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Only the innovation at index `k − l`.
    SingleSwap,
    /// Every innovation at index `≤ k − l`.
    TailSwap,
}

/// One realised path `X_1..X_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSample {
    pub values: Vec<f64>,
    pub n: usize,
    pub seed_key: StreamKey,
    pub burn_in_used: usize,
}

/// Jointly generated `(X_k, X_k')` at lag `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPair {
    pub x: f64,
    pub x_prime: f64,
    pub lag: usize,
    pub mode: CouplingMode,
}

#[derive(Debug, Clone)]
enum Dynamics {
    Ar1 { phi: f64, sigma: f64 },
    IteratedAr { phi: f64, sigma: f64, tanh_c: Option<f64> },
    Ou { decay: f64, noise_sd: f64 },
    Garch { mu: f64, alpha: Vec<f64>, beta: Vec<f64> },
    PositiveMatrix { mu_l: f64, s_l: f64 },
    Gl2 { tau: f64, start_angle: f64 },
    Linear(LinearFilter),
}

#[derive(Debug, Clone)]
enum State {
    Scalar(f64),
    /// Ring buffers of past `L²` and past `Y²`, newest at `head`.
    Garch { l2: Vec<f64>, y2: Vec<f64>, head: usize },
    Direction([f64; 2]),
}

impl Dynamics {
    fn initial_state(&self) -> State {
        match self {
            Dynamics::Garch { mu, alpha, beta } => {
                let r = alpha.len().max(beta.len()).max(1);
                let persistence: f64 = alpha.iter().chain(beta).sum();
                let l2 = mu / (1.0 - persistence).max(1e-12);
                State::Garch {
                    l2: vec![l2; r],
                    y2: vec![l2; r],
                    head: 0,
                }
            }
            Dynamics::PositiveMatrix { .. } => State::Direction([0.5, 0.5]),
            Dynamics::Gl2 { start_angle, .. } => {
                State::Direction([start_angle.cos(), start_angle.sin()])
            }
            _ => State::Scalar(0.0),
        }
    }

    #[inline]
    fn draw(&self, sampler: &InnovationSampler, stream: &mut Stream, eps: &mut [f64; 4]) {
        match self {
            Dynamics::PositiveMatrix { .. } => {
                for e in eps.iter_mut() {
                    *e = stream.standard_normal();
                }
            }
            Dynamics::Gl2 { .. } => {
                eps[0] = stream.uniform();
                eps[1] = stream.uniform();
                eps[2] = stream.standard_normal();
            }
            _ => eps[0] = sampler.draw(stream),
        }
    }

    /// Advances the state by one innovation and returns the new `Y_k`.
    #[inline]
    fn step(&self, state: &mut State, eps: &[f64; 4]) -> f64 {
        match (self, state) {
            (Dynamics::Ar1 { phi, sigma }, State::Scalar(y)) => {
                *y = phi * *y + sigma * eps[0];
                *y
            }
            (Dynamics::IteratedAr { phi, sigma, tanh_c }, State::Scalar(y)) => {
                let psi = match tanh_c {
                    Some(c) => c * (*y / c).tanh(),
                    None => *y,
                };
                *y = phi * psi + sigma * eps[0];
                *y
            }
            (Dynamics::Ou { decay, noise_sd }, State::Scalar(y)) => {
                *y = decay * *y + noise_sd * eps[0];
                *y
            }
            (Dynamics::Garch { mu, alpha, beta }, State::Garch { l2, y2, head }) => {
                let r = l2.len();
                let mut v = *mu;
                for (i, a) in alpha.iter().enumerate() {
                    v += a * l2[(*head + r - i) % r];
                }
                for (j, b) in beta.iter().enumerate() {
                    v += b * y2[(*head + r - j) % r];
                }
                let y = eps[0] * v.sqrt();
                *head = (*head + 1) % r;
                l2[*head] = v;
                y2[*head] = y * y;
                y
            }
            (Dynamics::PositiveMatrix { mu_l, s_l }, State::Direction(d)) => {
                let g = [
                    (mu_l + s_l * eps[0]).exp(),
                    (mu_l + s_l * eps[1]).exp(),
                    (mu_l + s_l * eps[2]).exp(),
                    (mu_l + s_l * eps[3]).exp(),
                ];
                let v0 = g[0] * d[0] + g[1] * d[1];
                let v1 = g[2] * d[0] + g[3] * d[1];
                let norm = v0 + v1;
                d[0] = v0 / norm;
                d[1] = v1 / norm;
                norm.ln()
            }
            (Dynamics::Gl2 { tau, .. }, State::Direction(z)) => {
                let tp = std::f64::consts::TAU;
                let (s2, c2) = (tp * eps[1]).sin_cos();
                let (s1, c1) = (tp * eps[0]).sin_cos();
                let s = tau * eps[2];
                // R(U₂) z
                let r0 = c2 * z[0] - s2 * z[1];
                let r1 = s2 * z[0] + c2 * z[1];
                // diag(e^S, e^{−S})
                let (es, ems) = (s.exp(), (-s).exp());
                let d0 = es * r0;
                let d1 = ems * r1;
                // R(U₁)
                let w0 = c1 * d0 - s1 * d1;
                let w1 = s1 * d0 + c1 * d1;
                let norm = w0.hypot(w1);
                z[0] = w0 / norm;
                z[1] = w1 / norm;
                norm.ln()
            }
            _ => unreachable!("state does not match dynamics"),
        }
    }
}

/// Reusable buffers for path generation.
#[derive(Default)]
pub struct PathScratch {
    eps: Vec<f64>,
    base: Vec<f64>,
    conv: ConvScratch,
}

/// A validated, calibrated process ready for generation. Cheap to share
/// across threads.
#[derive(Debug, Clone)]
pub struct Process {
    spec: ProcessSpec,
    dynamics: Dynamics,
    sampler: InnovationSampler,
    burn_in: usize,
    functional: Functional,
    base_center: f64,
    base_center_stderr: f64,
    functional_center: f64,
    functional_center_stderr: f64,
}

/// Burn-in making `ρ^m < 1e−12` (at least one step).
fn contraction_burn_in(rho: f64) -> usize {
    linear::geometric_memory(rho).max(1)
}

/// Default burn-in for matrix classes.
pub const MATRIX_BURN_IN: usize = 10_000;

impl Process {
    /// Validates `spec`, computing calibrated centres through `cache` when
    /// needed.
    pub fn build(spec: &ProcessSpec, cache: &CalibrationCache) -> Result<Self> {
        spec.validate()?;
        let sampler = spec.innovation_law.sampler()?;
        let (dynamics, default_burn_in) = match &spec.model {
            ProcessClass::Ar1 { phi, sigma_eps } => (
                Dynamics::Ar1 { phi: *phi, sigma: *sigma_eps },
                contraction_burn_in(*phi),
            ),
            ProcessClass::IteratedAr {
                phi,
                nonlinearity,
                sigma_eps,
            } => (
                Dynamics::IteratedAr {
                    phi: *phi,
                    sigma: *sigma_eps,
                    tanh_c: match nonlinearity {
                        Nonlinearity::None => None,
                        Nonlinearity::TanhScale { c } => Some(*c),
                    },
                },
                contraction_burn_in(*phi),
            ),
            ProcessClass::OuSde {
                theta,
                sigma_diff,
                delta,
            } => {
                let decay = (-theta * delta).exp();
                let noise_sd = (sigma_diff * sigma_diff / theta * (1.0 - (-2.0 * theta * delta).exp())).sqrt();
                (Dynamics::Ou { decay, noise_sd }, contraction_burn_in(decay))
            }
            ProcessClass::Garch {
                mu, alpha, beta, ..
            } => {
                let g = garch_gamma_c(&spec.model, &spec.innovation_law)?;
                let r = alpha.len().max(beta.len()).max(1);
                (
                    Dynamics::Garch {
                        mu: *mu,
                        alpha: alpha.clone(),
                        beta: beta.clone(),
                    },
                    r * contraction_burn_in(g),
                )
            }
            ProcessClass::Linear { decay, sigma_eps } => {
                let coeffs = decay.coefficients()?;
                let m = coeffs.len();
                (Dynamics::Linear(LinearFilter::new(coeffs, *sigma_eps)), m - 1)
            }
            ProcessClass::PositiveMatrixProduct { mu_l, s_l } => (
                Dynamics::PositiveMatrix { mu_l: *mu_l, s_l: *s_l },
                MATRIX_BURN_IN,
            ),
            ProcessClass::Gl2RandomWalk { tau, start_angle } => (
                Dynamics::Gl2 {
                    tau: *tau,
                    start_angle: *start_angle,
                },
                MATRIX_BURN_IN,
            ),
        };
        let burn_in = match (&dynamics, spec.burn_in) {
            (Dynamics::Linear(_), _) => default_burn_in,
            (_, Some(b)) => b,
            (_, None) => default_burn_in,
        };
        let mut process = Process {
            spec: spec.clone(),
            dynamics,
            sampler,
            burn_in,
            functional: Functional::new(&spec.functional)?,
            base_center: 0.0,
            base_center_stderr: 0.0,
            functional_center: 0.0,
            functional_center_stderr: 0.0,
        };
        if spec.model.is_matrix_class() {
            let entry = process.calibrate_base_mean(cache)?;
            process.base_center = entry.values[0];
            process.base_center_stderr = entry.stderr[0];
        }
        let (c, se) = match spec.functional.centering {
            Centering::Analytic => (process.analytic_functional_mean()?, 0.0),
            Centering::Calibrated => {
                let entry = process.calibrate_functional_mean(cache)?;
                (entry.values[0], entry.stderr[0])
            }
        };
        process.functional_center = c;
        process.functional_center_stderr = se;
        Ok(process)
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn window(&self) -> usize {
        self.functional.d()
    }

    /// Mean subtracted from raw increments of matrix classes (0 otherwise).
    pub fn base_center(&self) -> (f64, f64) {
        (self.base_center, self.base_center_stderr)
    }

    /// `E f(Y_k, …)` subtracted by the functional, with its standard error.
    pub fn functional_center(&self) -> (f64, f64) {
        (self.functional_center, self.functional_center_stderr)
    }

    /// Closed-form linear representation of the base series, if any.
    pub fn linear_model(&self) -> Option<LinearModel> {
        LinearModel::from_class(&self.spec.model).ok().flatten()
    }

    /// Stationary `E Y_k²` of a GARCH base series.
    pub fn garch_second_moment(&self) -> Option<f64> {
        match &self.dynamics {
            Dynamics::Garch { mu, alpha, beta } => {
                Some(mu / (1.0 - alpha.iter().chain(beta).sum::<f64>()))
            }
            _ => None,
        }
    }

    fn analytic_functional_mean(&self) -> Result<f64> {
        let kind = self.spec.functional.kind;
        let unavailable = || {
            Error::Unsupported(format!(
                "no closed-form mean of {kind:?} for class {}; set centering to \"calibrated\"",
                self.spec.model.name()
            ))
        };
        if kind == FunctionalKind::Identity {
            // every base series is mean zero (matrix classes after centring)
            return Ok(0.0);
        }
        if let Some(m) = self.linear_model() {
            return match kind {
                FunctionalKind::CenteredSquare => Ok(m.autocov(0)),
                FunctionalKind::LagProduct => Ok(m.autocov(1)),
                FunctionalKind::CenteredAbs if self.spec.innovation_law.is_gaussian() => {
                    Ok((2.0 * m.autocov(0) / std::f64::consts::PI).sqrt())
                }
                _ => Err(unavailable()),
            };
        }
        if let Some(m2) = self.garch_second_moment() {
            return match kind {
                FunctionalKind::CenteredSquare => Ok(m2),
                FunctionalKind::LagProduct => Ok(0.0),
                _ => Err(unavailable()),
            };
        }
        Err(unavailable())
    }

    fn calibration_key(&self, purpose: &str) -> StreamKey {
        let purpose_hash = purpose
            .bytes()
            .fold(0u64, |h, b| h.wrapping_mul(0x100_0000_01b3) ^ b as u64);
        StreamKey::new(
            CALIBRATION_SEED,
            self.spec.hash64() ^ purpose_hash,
            0,
            StreamRole::Auxiliary,
        )
    }

    fn calibrate_base_mean(&self, cache: &CalibrationCache) -> Result<CalibrationEntry> {
        let mut base_spec = self.spec.clone();
        base_spec.functional = FunctionalSpec::identity();
        let key = format!("{}/base_mean", base_spec.hash_hex());
        cache.get_or_compute(&key, |steps| {
            let mut stream = derive_stream(self.calibration_key("base_mean"));
            let mut state = self.dynamics.initial_state();
            let mut eps = [0.0; 4];
            for _ in 0..self.burn_in {
                self.dynamics.draw(&self.sampler, &mut stream, &mut eps);
                self.dynamics.step(&mut state, &eps);
            }
            let mut bm = BatchMeans::new(steps, 100);
            for _ in 0..steps {
                self.dynamics.draw(&self.sampler, &mut stream, &mut eps);
                bm.push(self.dynamics.step(&mut state, &eps));
            }
            let (mean, se) = bm.finish();
            Ok(CalibrationEntry {
                values: vec![mean],
                stderr: vec![se],
                steps,
            })
        })
    }

    fn calibrate_functional_mean(&self, cache: &CalibrationCache) -> Result<CalibrationEntry> {
        let key = format!("{}/functional_mean", self.spec.hash_hex());
        cache.get_or_compute(&key, |steps| {
            let mut uncentred = self.clone();
            uncentred.functional_center = 0.0;
            let key = self.calibration_key("functional_mean");
            let path = uncentred.generate_path(steps, key)?;
            let mut bm = BatchMeans::new(steps, 100);
            for v in &path.values {
                bm.push(*v);
            }
            let (mean, se) = bm.finish();
            Ok(CalibrationEntry {
                values: vec![mean],
                stderr: vec![se],
                steps,
            })
        })
    }

    /// Estimates `γ_X(0..=max_lag)` from one long calibration path, with
    /// batch-means standard errors of the windowed sums `σ_h²`.
    pub fn calibrate_autocov(&self, max_lag: usize, cache: &CalibrationCache) -> Result<CalibrationEntry> {
        let key = format!("{}/autocov/{max_lag}", self.spec.hash_hex());
        cache.get_or_compute(&key, |steps| {
            let path = self.generate_path(steps, self.calibration_key("autocov"))?;
            let gammas = crate::lrv::autocovariances(&path.values, max_lag)?;
            let batches = 20;
            let len = steps / batches;
            let mut windowed: Vec<Vec<f64>> = vec![Vec::with_capacity(batches); max_lag + 1];
            for b in 0..batches {
                let chunk = &path.values[b * len..(b + 1) * len];
                let g = crate::lrv::autocovariances(chunk, max_lag.min(len.saturating_sub(1)))?;
                let mut acc = 0.0;
                for (h, w) in windowed.iter_mut().enumerate() {
                    acc += if h == 0 { g[0] } else { 2.0 * g.get(h).copied().unwrap_or(0.0) };
                    w.push(acc);
                }
            }
            let stderr = windowed
                .iter()
                .map(|w| {
                    let m = w.iter().sum::<f64>() / w.len() as f64;
                    let v = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
                    (v / w.len() as f64).sqrt()
                })
                .collect();
            Ok(CalibrationEntry {
                values: gammas,
                stderr,
                steps,
            })
        })
    }

    fn first_index(&self) -> isize {
        2 - self.window() as isize - self.burn_in as isize
    }

    /// Generates `Y_{2−d} ..= Y_n` (base values, matrix classes centred).
    fn generate_base(&self, n: usize, stream: &mut Stream, scratch: &mut PathScratch) {
        let n_base = n + self.window() - 1;
        scratch.base.clear();
        match &self.dynamics {
            Dynamics::Linear(filter) => {
                let m = filter.memory();
                scratch.eps.clear();
                for _ in 0..n_base + m - 1 {
                    scratch.eps.push(self.sampler.draw(stream));
                }
                filter.filter(&scratch.eps, &mut scratch.base, &mut scratch.conv);
            }
            dyn_ => {
                let mut state = dyn_.initial_state();
                let mut eps = [0.0; 4];
                for _ in 0..self.burn_in {
                    dyn_.draw(&self.sampler, stream, &mut eps);
                    dyn_.step(&mut state, &eps);
                }
                scratch.base.reserve(n_base);
                for _ in 0..n_base {
                    dyn_.draw(&self.sampler, stream, &mut eps);
                    let y = dyn_.step(&mut state, &eps) - self.base_center;
                    scratch.base.push(y);
                }
            }
        }
    }

    /// Writes `X_1..X_n` into `out` using `scratch`; returns nothing else so
    /// hot loops can reuse buffers.
    pub fn generate_into(
        &self,
        n: usize,
        key: StreamKey,
        scratch: &mut PathScratch,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if n == 0 {
            return Err(Error::Argument("path length n must be >= 1".into()));
        }
        let mut stream = derive_stream(key.with_role(StreamRole::Path));
        self.generate_base(n, &mut stream, scratch);
        let d = self.window();
        let c = self.functional_center;
        out.clear();
        out.reserve(n);
        if d == 1 && self.spec.functional.kind == FunctionalKind::Identity {
            out.extend(scratch.base.iter().map(|y| y - c));
        } else {
            let mut window = vec![0.0; d];
            for k in 0..n {
                for (i, w) in window.iter_mut().enumerate() {
                    *w = scratch.base[k + d - 1 - i];
                }
                out.push(self.functional.apply_unchecked(&window) - c);
            }
        }
        Ok(())
    }

    /// Raw (uncentred) log-norm increments of the GL₂ walk paired with the
    /// diagonal shocks `S_k` that produced them; same stream as
    /// [`Process::generate_path`].
    pub fn gl2_increments(&self, n: usize, key: StreamKey) -> Result<(Vec<f64>, Vec<f64>)> {
        let dyn_ = &self.dynamics;
        let tau = match dyn_ {
            Dynamics::Gl2 { tau, .. } => *tau,
            _ => {
                return Err(Error::Argument(format!(
                    "gl2_increments needs class gl2_random_walk, got {}",
                    self.spec.model.name()
                )))
            }
        };
        let mut stream = derive_stream(key.with_role(StreamRole::Path));
        let mut state = dyn_.initial_state();
        let mut eps = [0.0; 4];
        for _ in 0..self.burn_in {
            dyn_.draw(&self.sampler, &mut stream, &mut eps);
            dyn_.step(&mut state, &eps);
        }
        let (mut xs, mut shocks) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            dyn_.draw(&self.sampler, &mut stream, &mut eps);
            xs.push(dyn_.step(&mut state, &eps));
            shocks.push(tau * eps[2]);
        }
        Ok((xs, shocks))
    }

    /// Generates a stationary path `X_1..X_n`.
    pub fn generate_path(&self, n: usize, key: StreamKey) -> Result<SeriesSample> {
        let mut values = Vec::with_capacity(n);
        self.generate_into(n, key, &mut PathScratch::default(), &mut values)?;
        Ok(SeriesSample {
            values,
            n,
            seed_key: key,
            burn_in_used: self.burn_in,
        })
    }

    /// Generates `(X_n, X_n')` where `X_n'` replaces the innovation at index
    /// `n − l` (single swap) or every innovation at index `≤ n − l` (tail
    /// swap) with draws from the coupling stream.
    pub fn generate_coupled(
        &self,
        n: usize,
        l: usize,
        mode: CouplingMode,
        key: StreamKey,
    ) -> Result<CouplingPair> {
        if n == 0 {
            return Err(Error::Argument("coupling time n must be >= 1".into()));
        }
        if l < 1 || l > n + self.burn_in {
            return Err(Error::Argument(format!(
                "lag l = {l} must satisfy 1 <= l <= n + burn_in = {}",
                n + self.burn_in
            )));
        }
        let swap = n as isize - l as isize;
        let swapped = |idx: isize| match mode {
            CouplingMode::SingleSwap => idx == swap,
            CouplingMode::TailSwap => idx <= swap,
        };
        let mut path = derive_stream(key.with_role(StreamRole::Path));
        let mut coupling = derive_stream(key.with_role(StreamRole::Coupling));
        let d = self.window();
        let first = self.first_index();
        let last = n as isize;
        let (wa, wb) = match &self.dynamics {
            Dynamics::Linear(filter) => {
                let total = (last - first + 1) as usize;
                let mut ea = Vec::with_capacity(total);
                let mut eb = Vec::with_capacity(total);
                for idx in first..=last {
                    let e = self.sampler.draw(&mut path);
                    ea.push(e);
                    eb.push(if swapped(idx) { self.sampler.draw(&mut coupling) } else { e });
                }
                let window = |eps: &[f64]| -> Vec<f64> {
                    (0..d).map(|i| filter.value_at(eps, total - 1 - i)).collect()
                };
                (window(&ea), window(&eb))
            }
            dyn_ => {
                let mut sa = dyn_.initial_state();
                let mut sb: Option<State> = None;
                let mut ea = [0.0; 4];
                let mut eb = [0.0; 4];
                let mut wa = Vec::with_capacity(d);
                let mut wb = Vec::with_capacity(d);
                for idx in first..=last {
                    dyn_.draw(&self.sampler, &mut path, &mut ea);
                    let swap_here = swapped(idx);
                    if swap_here {
                        dyn_.draw(&self.sampler, &mut coupling, &mut eb);
                        if sb.is_none() {
                            sb = Some(sa.clone());
                        }
                    }
                    let ya = dyn_.step(&mut sa, &ea);
                    let yb = match sb.as_mut() {
                        Some(s) => dyn_.step(s, if swap_here { &eb } else { &ea }),
                        None => ya,
                    };
                    if idx > last - d as isize {
                        wa.insert(0, ya - self.base_center);
                        wb.insert(0, yb - self.base_center);
                    }
                }
                (wa, wb)
            }
        };
        let c = self.functional_center;
        Ok(CouplingPair {
            x: self.functional.apply_unchecked(&wa) - c,
            x_prime: self.functional.apply_unchecked(&wb) - c,
            lag: l,
            mode,
        })
    }
}

/// Builds `spec` with a fresh default cache and generates one path.
pub fn generate_path(spec: &ProcessSpec, n: usize, key: StreamKey) -> Result<SeriesSample> {
    Process::build(spec, &CalibrationCache::default())?.generate_path(n, key)
}

/// Builds `spec` with a fresh default cache and generates one coupled pair.
pub fn generate_coupled(
    spec: &ProcessSpec,
    n: usize,
    l: usize,
    mode: CouplingMode,
    key: StreamKey,
) -> Result<CouplingPair> {
    Process::build(spec, &CalibrationCache::default())?.generate_coupled(n, l, mode, key)
}
