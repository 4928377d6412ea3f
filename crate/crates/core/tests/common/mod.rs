#![allow(dead_code)]

use std::path::PathBuf;

use selfnorm::{ExperimentPlan, ProcessSpec};

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mean and batch-means standard error.
pub fn batch_mean(x: &[f64], batches: usize) -> (f64, f64) {
    let len = x.len() / batches;
    let means: Vec<f64> = x
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let v = means.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (v / batches as f64).sqrt())
}

/// Largest z-score between the two halves of a path, for the mean and
/// for the variance.
pub fn half_window_z(x: &[f64]) -> (f64, f64) {
    let half = x.len() / 2;
    let (a, b) = (&x[..half], &x[half..2 * half]);
    let (ma, sa) = batch_mean(a, 100);
    let (mb, sb) = batch_mean(b, 100);
    let z_mean = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let sq = |s: &[f64]| s.iter().map(|v| (v - m).powi(2)).collect::<Vec<_>>();
    let (va, sva) = batch_mean(&sq(a), 100);
    let (vb, svb) = batch_mean(&sq(b), 100);
    let z_var = (va - vb).abs() / (sva * sva + svb * svb).sqrt();
    (z_mean, z_var)
}

pub fn presets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

/// The `plan` block of a CLI preset.
pub fn preset_plan(rel: &str) -> ExperimentPlan {
    let path = presets_dir().join(rel);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).expect("preset is JSON");
    serde_json::from_value(value["plan"].clone()).expect("preset plan parses")
}

pub const CLASS_PRESETS: [&str; 7] = [
    "ar1",
    "linear-polynomial",
    "garch",
    "iterated-ar",
    "ou-sde",
    "positive-matrix-product",
    "gl2-random-walk",
];

pub fn class_spec(name: &str) -> ProcessSpec {
    preset_plan(&format!("classes/{name}.json")).process
}
