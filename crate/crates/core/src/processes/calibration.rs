//! Long-run calibration of quantities without closed forms (Lyapunov
//! exponents, functional means, autocovariances), cached per spec hash and
//! optionally persisted as JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Default length of a calibration run.
pub const DEFAULT_CALIBRATION_STEPS: usize = 10_000_000;

/// Fixed master seed of calibration streams; calibrations are a pure
/// function of the spec and never of an experiment's seed.
pub const CALIBRATION_SEED: u64 = 0xca1b_2a7e_0f5e_ed00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheFile {
    entries: BTreeMap<String, CalibrationEntry>,
}

/// Thread-safe calibration cache.
#[derive(Debug)]
pub struct CalibrationCache {
    steps: usize,
    entries: Mutex<BTreeMap<String, CalibrationEntry>>,
    path: Option<PathBuf>,
}

impl Default for CalibrationCache {
    fn default() -> Self {
        Self::new(DEFAULT_CALIBRATION_STEPS)
    }
}

impl CalibrationCache {
    pub fn new(steps: usize) -> Self {
        CalibrationCache {
            steps,
            entries: Mutex::new(BTreeMap::new()),
            path: None,
        }
    }

    /// Opens (or starts) a cache persisted at `path`.
    pub fn open(path: impl AsRef<Path>, steps: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str::<CacheFile>(&text)?.entries
        } else {
            BTreeMap::new()
        };
        Ok(CalibrationCache {
            steps,
            entries: Mutex::new(entries),
            path: Some(path),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, key: &str) -> Option<CalibrationEntry> {
        self.entries.lock().expect("cache poisoned").get(key).cloned()
    }

    /// Returns the cached entry for `key` or computes and stores it.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce(usize) -> Result<CalibrationEntry>,
    ) -> Result<CalibrationEntry> {
        let full_key = format!("{key}/steps={}", self.steps);
        if let Some(e) = self.get(&full_key) {
            return Ok(e);
        }
        let entry = compute(self.steps)?;
        self.entries
            .lock()
            .expect("cache poisoned")
            .insert(full_key, entry.clone());
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache to its backing file, if any (temp file + rename).
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = CacheFile {
            entries: self.entries.lock().expect("cache poisoned").clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Mean and batch-means standard error of a stream of values.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: usize,
    current: f64,
    count_in_batch: usize,
    batches: Vec<f64>,
}

impl BatchMeans {
    pub fn new(total: usize, n_batches: usize) -> Self {
        BatchMeans {
            batch_len: (total / n_batches.max(1)).max(1),
            current: 0.0,
            count_in_batch: 0,
            batches: Vec::with_capacity(n_batches + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.current += v;
        self.count_in_batch += 1;
        if self.count_in_batch == self.batch_len {
            self.batches.push(self.current / self.batch_len as f64);
            self.current = 0.0;
            self.count_in_batch = 0;
        }
    }

    /// `(mean, standard error)` over completed batches.
    pub fn finish(&self) -> (f64, f64) {
        let k = self.batches.len();
        if k == 0 {
            return (self.current / self.count_in_batch.max(1) as f64, f64::INFINITY);
        }
        let mean = self.batches.iter().sum::<f64>() / k as f64;
        if k < 2 {
            return (mean, f64::INFINITY);
        }
        let var = self.batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (mean, (var / k as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip() {
        let dir = std::env::temp_dir().join(format!("selfnorm-cal-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cal.json");
        let cache = CalibrationCache::open(&path, 100).unwrap();
        let mut calls = 0;
        let e = cache
            .get_or_compute("k", |steps| {
                calls += 1;
                Ok(CalibrationEntry { values: vec![1.5], stderr: vec![0.1], steps })
            })
            .unwrap();
        assert_eq!(e.steps, 100);
        cache.get_or_compute("k", |_| unreachable!()).unwrap();
        assert_eq!(calls, 1);
        cache.save().unwrap();
        let reopened = CalibrationCache::open(&path, 100).unwrap();
        assert_eq!(reopened.get_or_compute("k", |_| unreachable!()).unwrap(), e);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn batch_means_constant() {
        let mut b = BatchMeans::new(1000, 10);
        for _ in 0..1000 {
            b.push(2.0);
        }
        let (m, se) = b.finish();
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }
}
