//! Replication engine: studentized statistics over an `n` grid, distance
//! reports, and convergence-rate fits.
//!
//! Replication `r` at sample size `n` draws its path from the key
//! `(master_seed, combine(experiment_id, n), r)`, where the experiment id
//! depends only on the process spec. Different rules run on the same spec
//! therefore see the same paths, and raising `reps` only appends paths.
//! Workers handle fixed blocks of replication indices; each block is sorted
//! and the blocks are combined by a k-way merge, so the output does not
//! depend on the number of threads.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::FunctionalAutocov;
use crate::error::{Error, Result};
use crate::functionals::FunctionalKind;
use crate::lrv::{lrv_from_autocov, truncated_scale, BandwidthRule, LagWindow, TruncationRule};
use crate::metrics::{
    distance, lq_distance_weighted, w1_distance_weighted, DistanceReport, GaussianRef, MetricKind,
};
use crate::processes::{CalibrationCache, PathScratch, Process, ProcessSpec};
use crate::rng::{combine, derive_stream, StreamKey, StreamRole};
use crate::scalar::{dot, pairwise_sum};
use crate::stats::ols;

/// Replications per sorted block.
pub const BLOCK: usize = 2048;
/// Largest lag of a calibrated autocovariance table.
pub const CALIBRATED_MAX_LAG: usize = 200;
/// Minimum replications for rate experiments.
pub const MIN_RATE_REPS: usize = 1000;

fn default_bootstrap() -> usize {
    200
}

/// Gaussian law the statistic is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// `Φ(x)`.
    #[default]
    Pivotal,
    /// `Φ(σ_b x / σ)` with `b = b(n)`.
    Corrected,
}

impl Reference {
    pub fn label(&self) -> &'static str {
        match self {
            Reference::Pivotal => "pivotal",
            Reference::Corrected => "corrected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub process: ProcessSpec,
    pub n_grid: Vec<usize>,
    pub rule: BandwidthRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<TruncationRule>,
    pub reps: usize,
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub master_seed: u64,
    /// Resamples for the W1 / Lq bootstrap standard errors.
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
}

/// One studentization variant evaluated on shared paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleVariant {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    pub rule: BandwidthRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<TruncationRule>,
    #[serde(default)]
    pub reference: Reference,
}

impl RuleVariant {
    pub fn new(rule: BandwidthRule, trunc: Option<TruncationRule>, reference: Reference) -> Self {
        RuleVariant {
            label: String::new(),
            rule,
            trunc,
            reference,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Label used in the `rule` column.
    pub fn rule_label(&self) -> String {
        let mut s = self.rule.label();
        if let Some(t) = &self.trunc {
            s.push_str(&format!("+trunc(c={})", t.c_tau));
        }
        s
    }

    /// User label, falling back to the rule label.
    pub fn name(&self) -> String {
        if self.label.is_empty() {
            format!("{}/{}", self.rule_label(), self.reference.label())
        } else {
            self.label.clone()
        }
    }
}

impl ExperimentPlan {
    pub fn variant(&self) -> RuleVariant {
        RuleVariant::new(self.rule, self.trunc, self.reference)
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.validate_grid(&[self.variant()])
    }

    fn validate_grid(&self, variants: &[RuleVariant]) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::Config("every n in n_grid must be >= 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("metrics must list at least one of ks, w1, lq<q>".into()));
        }
        if self.bootstrap_resamples < 2 {
            return Err(Error::Config("bootstrap_resamples must be >= 2".into()));
        }
        for m in &self.metrics {
            m.validate()?;
        }
        for v in variants {
            v.rule.validate()?;
            if let Some(t) = &v.trunc {
                TruncationRule::new(t.c_tau).map_err(|e| Error::Config(e.to_string()))?;
            }
            if v.trunc.is_none() {
                if let Some(m) = self.metrics.iter().find(|m| !m.accepts_degenerate()) {
                    return Err(Error::Config(format!(
                        "metric {m} needs finite statistics; add \"trunc\" (truncated studentization)"
                    )));
                }
            }
            for &n in &self.n_grid {
                let b = v.rule.bandwidth(n)?;
                if b >= n {
                    return Err(Error::Config(format!(
                        "rule {} gives bandwidth {b} >= n = {n}",
                        v.rule.label()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stream namespace shared by every rule run on this process.
    pub fn experiment_id(&self) -> u64 {
        self.process.hash64()
    }

    /// Warning when `reps < 50 √(max n)`, the level at which the metric noise
    /// floor starts to flatten rate fits.
    pub fn noise_floor_warning(&self) -> Option<String> {
        let max_n = *self.n_grid.last()?;
        let need = (50.0 * (max_n as f64).sqrt()).ceil() as usize;
        (self.reps < need).then(|| {
            format!(
                "reps = {} is below 50*sqrt(max n) = {need}; Monte Carlo noise may flatten the fitted slope",
                self.reps
            )
        })
    }
}

/// Key of replication `r` at sample size `n`.
pub fn replication_key(master_seed: u64, experiment_id: u64, n: usize, r: u64) -> StreamKey {
    StreamKey::new(
        master_seed,
        combine(&[experiment_id, n as u64]),
        r,
        StreamRole::Path,
    )
}

#[derive(Default)]
struct Workspace {
    path: Vec<f64>,
    scratch: PathScratch,
    centered: Vec<f64>,
    gammas: Vec<f64>,
}

/// `S_n / √(n σ̂²)` (±∞ when `σ̂² ≤ 0`) or its truncated version.
fn statistic(s_n: f64, n: usize, sigma_hat_sq: f64, trunc: Option<&TruncationRule>) -> f64 {
    let rn = (n as f64).sqrt();
    match trunc {
        Some(t) => s_n / (rn * truncated_scale(sigma_hat_sq, n, t)),
        None if sigma_hat_sq > 0.0 => s_n / (rn * sigma_hat_sq.sqrt()),
        None if s_n < 0.0 => f64::NEG_INFINITY,
        None => f64::INFINITY,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Merges ascending blocks into one ascending vector.
pub fn kway_merge(blocks: &[Vec<f64>]) -> Vec<f64> {
    let total = blocks.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut heads: BinaryHeap<Reverse<(Ordered, usize)>> = BinaryHeap::with_capacity(blocks.len());
    let mut pos = vec![0usize; blocks.len()];
    for (i, b) in blocks.iter().enumerate() {
        if let Some(v) = b.first() {
            heads.push(Reverse((Ordered(*v), i)));
        }
    }
    while let Some(Reverse((Ordered(v), i))) = heads.pop() {
        out.push(v);
        pos[i] += 1;
        if let Some(next) = blocks[i].get(pos[i]) {
            heads.push(Reverse((Ordered(*next), i)));
        }
    }
    out
}

/// Sorted statistics of `reps` replications at size `n`, one vector per
/// variant, all computed from the same paths.
pub fn simulate_sorted(
    process: &Process,
    n: usize,
    variants: &[(usize, Option<TruncationRule>)],
    reps: usize,
    master_seed: u64,
    experiment_id: u64,
) -> Result<Vec<Vec<f64>>> {
    let max_b = variants.iter().map(|v| v.0).max().unwrap_or(0);
    if max_b >= n {
        return Err(Error::Argument(format!("bandwidth {max_b} must be below n = {n}")));
    }
    let n_blocks = reps.div_ceil(BLOCK);
    let blocks: Vec<Vec<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut ws = Workspace::default();
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(reps);
            let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(hi - lo); variants.len()];
            for r in lo..hi {
                let key = replication_key(master_seed, experiment_id, n, r as u64);
                process.generate_into(n, key, &mut ws.scratch, &mut ws.path)?;
                let s_n = pairwise_sum(&ws.path);
                let mean = s_n / n as f64;
                ws.centered.clear();
                ws.centered.extend(ws.path.iter().map(|v| v - mean));
                ws.gammas.clear();
                for h in 0..=max_b {
                    ws.gammas.push(dot(&ws.centered[h..], &ws.centered[..n - h]) / n as f64);
                }
                for ((b, trunc), values) in variants.iter().zip(out.iter_mut()) {
                    let sh2 = lrv_from_autocov(&ws.gammas, *b, LagWindow::Rectangular);
                    values.push(statistic(s_n, n, sh2, trunc.as_ref()));
                }
            }
            for v in out.iter_mut() {
                v.sort_unstable_by(f64::total_cmp);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..variants.len())
        .map(|i| {
            let per_variant: Vec<Vec<f64>> = blocks.iter().map(|b| b[i].clone()).collect();
            kway_merge(&per_variant)
        })
        .collect())
}

/// Bootstrap standard error of `metric` by resampling multiplicities.
pub fn bootstrap_stderr(
    sorted: &[f64],
    metric: MetricKind,
    reference: &GaussianRef<f64>,
    resamples: usize,
    key: StreamKey,
) -> Result<f64> {
    let n = sorted.len();
    let values: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = derive_stream(key.with_replication(r).with_role(StreamRole::Auxiliary));
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                let idx = ((stream.next_u64() as u128 * n as u128) >> 64) as usize;
                counts[idx] += 1;
            }
            match metric {
                MetricKind::Ks => Err(Error::Argument("ks uses the analytic 1.36/sqrt(reps) error".into())),
                MetricKind::W1 => w1_distance_weighted(sorted, &counts, reference),
                MetricKind::Lq { q } => lq_distance_weighted(sorted, &counts, reference, q),
            }
        })
        .collect::<Result<_>>()?;
    let m = pairwise_sum(&values) / resamples as f64;
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    Ok((pairwise_sum(&sq) / (resamples - 1) as f64).sqrt())
}

/// Closed-form or calibrated autocovariance structure of the emitted series.
#[derive(Debug, Clone)]
pub struct AutocovModel {
    pub model: FunctionalAutocov<f64>,
    /// Standard errors of the windowed sums `σ_h²` for calibrated tables.
    pub stderr: Option<Vec<f64>>,
}

impl AutocovModel {
    pub fn for_process(process: &Process, cache: &CalibrationCache) -> Result<Self> {
        let spec = process.spec();
        let kind = spec.functional.kind;
        let gaussian = spec.innovation_law.is_gaussian();
        let closed = match (process.linear_model(), process.garch_second_moment()) {
            (Some(m), _) if kind == FunctionalKind::Identity => Some(FunctionalAutocov::Base(m)),
            (Some(m), _) if gaussian && kind == FunctionalKind::CenteredSquare => {
                Some(FunctionalAutocov::GaussianSquare(m))
            }
            (Some(m), _) if gaussian && kind == FunctionalKind::LagProduct => {
                Some(FunctionalAutocov::GaussianLagProduct(m))
            }
            (None, Some(var)) if kind == FunctionalKind::Identity => Some(FunctionalAutocov::WhiteNoise { var }),
            _ => None,
        };
        if let Some(model) = closed {
            return Ok(AutocovModel { model, stderr: None });
        }
        let entry = process.calibrate_autocov(CALIBRATED_MAX_LAG, cache)?;
        Ok(AutocovModel {
            model: FunctionalAutocov::Table { gammas: entry.values },
            stderr: Some(entry.stderr),
        })
    }

    /// `(σ_b², σ², stderr of σ_b², stderr of σ²)`.
    pub fn variances(&self, b: usize) -> (f64, f64, Option<(f64, f64)>) {
        let sb = self.model.sigma_b_sq(b);
        let s = self.model.sigma_sq();
        let se = self.stderr.as_ref().map(|se| {
            let last = se.len() - 1;
            (se[b.min(last)], se[last])
        });
        (sb, s, se)
    }
}

/// Reference scale used at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub n: usize,
    pub b: usize,
    pub reference: Reference,
    pub scale_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<f64>,
    /// Calibration standard errors of `σ_b²` and `σ²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_stderr: Option<(f64, f64)>,
}

/// Reports of one variant over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: RuleVariant,
    pub reports: Vec<DistanceReport>,
    pub references: Vec<ReferenceInfo>,
}

/// Runs every variant on the same paths.
pub fn run_variants(
    plan: &ExperimentPlan,
    variants: &[RuleVariant],
    cache: &CalibrationCache,
) -> Result<Vec<VariantResult>> {
    plan.process.validate()?;
    plan.validate_grid(variants)?;
    let process = Process::build(&plan.process, cache)?;
    let needs_model = variants.iter().any(|v| v.reference == Reference::Corrected);
    let model = if needs_model {
        Some(AutocovModel::for_process(&process, cache).map_err(|e| match e {
            Error::Unsupported(msg) => Error::Unsupported(format!(
                "corrected reference unavailable: {msg}; use reference \"pivotal\""
            )),
            other => other,
        })?)
    } else {
        None
    };
    let experiment_id = plan.experiment_id();
    let mut results: Vec<VariantResult> = variants
        .iter()
        .map(|v| VariantResult {
            variant: v.clone(),
            reports: Vec::new(),
            references: Vec::new(),
        })
        .collect();
    for &n in &plan.n_grid {
        let setup: Vec<(usize, Option<TruncationRule>)> = variants
            .iter()
            .map(|v| Ok((v.rule.bandwidth(n)?, v.trunc)))
            .collect::<Result<_>>()?;
        let sorted = simulate_sorted(&process, n, &setup, plan.reps, plan.master_seed, experiment_id)?;
        for (vi, (values, res)) in sorted.iter().zip(results.iter_mut()).enumerate() {
            let b = setup[vi].0;
            let v = &variants[vi];
            let info = match (v.reference, &model) {
                (Reference::Corrected, Some(m)) => {
                    let (sb, s, se) = m.variances(b);
                    if !(sb > 0.0 && s > 0.0) {
                        return Err(Error::Unsupported(format!(
                            "corrected reference needs positive sigma_b^2 and sigma^2, got {sb} and {s} at b = {b}"
                        )));
                    }
                    ReferenceInfo {
                        n,
                        b,
                        reference: v.reference,
                        scale_ratio: (sb / s).sqrt(),
                        sigma_b_sq: Some(sb),
                        sigma_sq: Some(s),
                        calibration_stderr: se,
                    }
                }
                _ => ReferenceInfo {
                    n,
                    b,
                    reference: Reference::Pivotal,
                    scale_ratio: 1.0,
                    sigma_b_sq: None,
                    sigma_sq: None,
                    calibration_stderr: None,
                },
            };
            let reference = GaussianRef::new(info.scale_ratio)?;
            let degenerate_count = values.iter().filter(|x| !x.is_finite()).count();
            for (mi, metric) in plan.metrics.iter().enumerate() {
                let estimate = distance(*metric, values, &reference)?;
                let mc_stderr = match metric {
                    MetricKind::Ks => 1.36 / (plan.reps as f64).sqrt(),
                    _ => {
                        let key = StreamKey::new(
                            plan.master_seed,
                            combine(&[experiment_id, n as u64, vi as u64, mi as u64]),
                            0,
                            StreamRole::Auxiliary,
                        );
                        bootstrap_stderr(values, *metric, &reference, plan.bootstrap_resamples, key)?
                    }
                };
                res.reports.push(DistanceReport {
                    n,
                    rule: v.rule_label(),
                    b,
                    reference: v.reference.label().to_string(),
                    metric: *metric,
                    estimate,
                    mc_stderr,
                    reps: plan.reps,
                    degenerate_count,
                });
            }
            res.references.push(info);
        }
    }
    Ok(results)
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub reports: Vec<DistanceReport>,
    pub references: Vec<ReferenceInfo>,
    pub warnings: Vec<String>,
}

/// Runs `plan`: one [`DistanceReport`] per `(n, metric)`.
pub fn run_experiment(plan: &ExperimentPlan, cache: &CalibrationCache) -> Result<ExperimentResult> {
    let mut warnings = Vec::new();
    if let Some(w) = plan.noise_floor_warning() {
        warn!("{w}");
        warnings.push(w);
    }
    let mut res = run_variants(plan, &[plan.variant()], cache)?;
    let r = res.pop().expect("one variant");
    Ok(ExperimentResult {
        reports: r.reports,
        references: r.references,
        warnings,
    })
}

/// OLS fit of `log estimate` on `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

fn log_points(reports: &[DistanceReport]) -> Vec<(usize, f64)> {
    reports
        .iter()
        .filter_map(|r| {
            if r.estimate > 0.0 && r.estimate.is_finite() {
                Some((r.n, r.estimate.ln()))
            } else {
                warn!("dropping non-positive estimate {} at n = {} from rate fit", r.estimate, r.n);
                None
            }
        })
        .collect()
}

/// Rate fit over reports of a single metric.
pub fn fit_rate(reports: &[DistanceReport]) -> Result<RateFit> {
    if let Some(first) = reports.first() {
        if reports.iter().any(|r| r.metric != first.metric) {
            return Err(Error::Argument("fit_rate needs reports of a single metric".into()));
        }
    }
    let pts = log_points(reports);
    if pts.len() < 4 {
        return Err(Error::Argument(format!(
            "rate fit needs >= 4 grid points with positive estimates, got {}",
            pts.len()
        )));
    }
    let x: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let f = ols(&x, &y)?;
    Ok(RateFit {
        slope: f.slope,
        intercept: f.intercept,
        stderr_slope: f.stderr_slope,
        r_squared: f.r_squared,
        points: pts.len(),
    })
}

/// Slope difference between two variants for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeDifference {
    pub first: String,
    pub second: String,
    pub metric: MetricKind,
    /// `slope(first) − slope(second)`.
    pub difference: f64,
    /// Standard error of the slope of `log est_first − log est_second`
    /// against `log n`; accounts for the shared paths.
    pub joint_stderr: f64,
    /// `√(se_first² + se_second²)`, ignoring the correlation.
    pub independent_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantFit {
    pub name: String,
    pub rule: String,
    pub reference: Reference,
    pub metric: MetricKind,
    pub fit: RateFit,
}

/// Fits and pairwise differences from [`compare_rules`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub results: Vec<VariantResult>,
    pub fits: Vec<VariantFit>,
    pub differences: Vec<SlopeDifference>,
    pub warnings: Vec<String>,
}

fn metric_reports(r: &VariantResult, m: MetricKind) -> Vec<DistanceReport> {
    r.reports.iter().filter(|x| x.metric == m).cloned().collect()
}

/// Joint slope difference from the regression of the log ratio.
pub fn slope_difference(a: &[DistanceReport], b: &[DistanceReport]) -> Result<(f64, f64)> {
    let pa = log_points(a);
    let pb = log_points(b);
    let (x, y): (Vec<f64>, Vec<f64>) = pa
        .iter()
        .filter_map(|(n, la)| {
            pb.iter()
                .find(|(m, _)| m == n)
                .map(|(_, lb)| ((*n as f64).ln(), la - lb))
        })
        .unzip();
    if x.len() < 4 {
        return Err(Error::Argument("slope difference needs >= 4 common grid points".into()));
    }
    let f = ols(&x, &y)?;
    Ok((f.slope, f.stderr_slope))
}

/// Runs every variant on shared paths and fits rates per metric.
pub fn compare_rules(
    plan: &ExperimentPlan,
    variants: &[RuleVariant],
    cache: &CalibrationCache,
) -> Result<RateTable> {
    if variants.is_empty() {
        return Err(Error::Config("compare_rules needs at least one rule".into()));
    }
    if plan.n_grid.len() < 4 {
        return Err(Error::Config(format!(
            "need >= 4 grid points for a rate fit, got {}",
            plan.n_grid.len()
        )));
    }
    if plan.reps < MIN_RATE_REPS {
        return Err(Error::Config(format!(
            "rate experiments need reps >= {MIN_RATE_REPS}, got {}",
            plan.reps
        )));
    }
    let mut warnings = Vec::new();
    if let Some(w) = plan.noise_floor_warning() {
        warn!("{w}");
        warnings.push(w);
    }
    let results = run_variants(plan, variants, cache)?;
    let mut fits = Vec::new();
    let mut differences = Vec::new();
    for &m in &plan.metrics {
        let per: Vec<(String, Vec<DistanceReport>, RateFit)> = results
            .iter()
            .map(|r| {
                let reps = metric_reports(r, m);
                let fit = fit_rate(&reps)?;
                Ok((r.variant.name(), reps, fit))
            })
            .collect::<Result<_>>()?;
        for (r, (name, _, fit)) in results.iter().zip(&per) {
            fits.push(VariantFit {
                name: name.clone(),
                rule: r.variant.rule_label(),
                reference: r.variant.reference,
                metric: m,
                fit: *fit,
            });
        }
        for i in 0..per.len() {
            for j in i + 1..per.len() {
                let (_, joint) = slope_difference(&per[i].1, &per[j].1)?;
                differences.push(SlopeDifference {
                    first: per[i].0.clone(),
                    second: per[j].0.clone(),
                    metric: m,
                    difference: per[i].2.slope - per[j].2.slope,
                    joint_stderr: joint,
                    independent_stderr: per[i].2.stderr_slope.hypot(per[j].2.stderr_slope),
                });
            }
        }
    }
    Ok(RateTable {
        results,
        fits,
        differences,
        warnings,
    })
}

/// Column header of the results CSV.
pub const CSV_HEADER: &str = "n,metric,estimate,stderr,reps,b,rule,reference,degenerate_count";

/// CSV body (header plus one row per report).
pub fn render_csv(reports: &[DistanceReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&format!(
            "{},{},{:e},{:e},{},{},{},{},{}\n",
            r.n, r.metric, r.estimate, r.mc_stderr, r.reps, r.b, r.rule, r.reference, r.degenerate_count
        ));
    }
    s
}

/// Whitespace-separated `n estimate stderr` columns for plotting one metric.
pub fn render_dat(reports: &[DistanceReport], metric: MetricKind) -> String {
    let mut s = format!("# metric {metric}\n# n estimate stderr\n");
    for r in reports.iter().filter(|r| r.metric == metric) {
        s.push_str(&format!("{} {:e} {:e}\n", r.n, r.estimate, r.mc_stderr));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: usize, estimate: f64) -> DistanceReport {
        DistanceReport {
            n,
            rule: "fixed(b=0)".into(),
            b: 0,
            reference: "pivotal".into(),
            metric: MetricKind::Ks,
            estimate,
            mc_stderr: 0.0,
            reps: 1,
            degenerate_count: 0,
        }
    }

    #[test]
    fn exact_rates() {
        let grid = [256, 512, 1024, 2048, 4096];
        let r: Vec<_> = grid.iter().map(|&n| report(n, (n as f64).powf(-0.5))).collect();
        let f = fit_rate(&r).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let r: Vec<_> = grid.iter().map(|&n| report(n, 3.0 * (n as f64).powf(-1.0 / 3.0))).collect();
        let f = fit_rate(&r).unwrap();
        assert!((f.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit_rate(&r[..3]).is_err());
    }

    #[test]
    fn merge_is_sorted() {
        let blocks = vec![vec![1.0, 4.0, 9.0], vec![], vec![f64::NEG_INFINITY, 2.0, f64::INFINITY], vec![3.0]];
        let merged = kway_merge(&blocks);
        assert_eq!(merged, vec![f64::NEG_INFINITY, 1.0, 2.0, 3.0, 4.0, 9.0, f64::INFINITY]);
    }

    #[test]
    fn statistic_degenerate_signs() {
        assert_eq!(statistic(-1.0, 4, 0.0, None), f64::NEG_INFINITY);
        assert_eq!(statistic(0.0, 4, -1.0, None), f64::INFINITY);
        assert!(statistic(1.0, 4, -1.0, Some(&TruncationRule::default())).is_finite());
    }

    #[test]
    fn single_replication_ks() {
        let plan = ExperimentPlan {
            process: ProcessSpec::ar1(0.0),
            n_grid: vec![16],
            rule: BandwidthRule::fixed(0),
            trunc: None,
            reps: 1,
            metrics: vec![MetricKind::Ks],
            reference: Reference::Pivotal,
            master_seed: 7,
            bootstrap_resamples: 200,
        };
        let res = run_experiment(&plan, &CalibrationCache::new(1000)).unwrap();
        assert!(res.reports[0].estimate >= 0.5);
    }

    #[test]
    fn strict_plan_json() {
        let text = r#"{"process":{"model":{"class":"ar1","params":{"phi":0.5}}},
            "n_grid":[64,128],"rule":{"kind":"fixed","b":2},"reps":10,"metrics":["ks"],"bogus":1}"#;
        assert!(serde_json::from_str::<ExperimentPlan>(text).is_err());
    }

    #[test]
    fn w1_without_truncation_rejected() {
        let plan = ExperimentPlan {
            process: ProcessSpec::ar1(0.5),
            n_grid: vec![64],
            rule: BandwidthRule::fixed(2),
            trunc: None,
            reps: 10,
            metrics: vec![MetricKind::W1],
            reference: Reference::Pivotal,
            master_seed: 7,
            bootstrap_resamples: 200,
        };
        assert!(plan.validate().unwrap_err().to_string().contains("trunc"));
    }
}
