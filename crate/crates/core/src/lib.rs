//! Self-normalized partial sums of weakly dependent processes.
//!
//! The crate simulates stationary processes of the form
//! `X_k = g(ε_k, ε_{k−1}, …)`, studentizes their partial sums with a
//! lag-window long-run variance estimate, and measures how fast the law of
//! the studentized statistic approaches a Gaussian under different
//! bandwidth rules.
//!
//! The estimator ([`lrv`]), the closed forms ([`analytic`]) and the
//! distances ([`metrics`]) are generic over the floating point type through
//! [`Real`]; the aliases below fix it to `f64`. Process generation and the
//! Monte Carlo engine work in `f64`.

// Comparisons such as `!(x > 0.0)` are negated on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytic;
pub mod depmeasure;
pub mod error;
pub mod functionals;
pub mod lrv;
pub mod metrics;
pub mod montecarlo;
pub mod processes;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
pub use functionals::{Centering, FunctionalKind, FunctionalSpec};
pub use lrv::{BandwidthKind, BandwidthRule, LagWindow, TruncationRule};
pub use metrics::{normal_cdf, normal_quantile, DistanceReport, MetricKind};
pub use montecarlo::{
    compare_rules, fit_rate, run_experiment, ExperimentPlan, RateFit, RateTable, Reference,
    RuleVariant,
};
pub use processes::{
    CalibrationCache, CouplingMode, CouplingPair, InnovationLaw, Process, ProcessClass,
    ProcessSpec, SeriesSample,
};
pub use rng::{StreamKey, StreamRole};
pub use scalar::Real;

pub type LrvEstimate = lrv::LrvEstimate<f64>;
pub type LrvEstimate32 = lrv::LrvEstimate<f32>;
pub type GaussianRef = metrics::GaussianRef<f64>;
pub type GaussianRef32 = metrics::GaussianRef<f32>;
pub type LinearModel = analytic::LinearModel<f64>;
pub type LinearModel32 = analytic::LinearModel<f32>;
pub type DependenceProfile = analytic::DependenceProfile<f64>;
pub type FunctionalAutocov = analytic::FunctionalAutocov<f64>;
pub type BiasRow = analytic::BiasRow<f64>;
