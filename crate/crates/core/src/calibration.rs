//! The rank-conditional test.
//!
//! Under the null, given the absolute values, the signs of the responses are
//! independent fair coin flips. The critical value is the
//! `ceil((1 - alpha)(B + 1))`-th smallest of `B` statistics recomputed with
//! simulated signs, which keeps the level for every finite sample.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::ranks::Dataset;
use crate::report::{Method, TestReport};
use crate::rng::{fill_signs, stream, Domain};
use crate::statistic::{build_coefficients, scan, scan_max_batch, CoefficientTable, ScanConfig, ScanResult};

/// Replicates scanned together in one pass over the coefficient table.
const BATCH: usize = 16;

/// Default largest `n` for exact enumeration of the sign distribution.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub kernel: Kernel,
    pub scan: ScanConfig,
    /// Report only upward deviations `T_jk - penalty > kappa`.
    pub one_sided: bool,
    /// Record wall-clock time in the report (makes reports non-reproducible).
    pub timing: bool,
}

impl TestConfig {
    pub fn new(alpha: f64, replicates: usize, seed: u64, kernel: Kernel) -> Result<Self> {
        let cfg = TestConfig {
            alpha,
            replicates,
            seed,
            kernel,
            scan: ScanConfig::default(),
            one_sided: false,
            timing: false,
        };
        quantile_index(alpha, replicates)?;
        Ok(cfg)
    }

    pub fn with_scan(mut self, scan: ScanConfig) -> Self {
        self.scan = scan;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        quantile_index(self.alpha, self.replicates)?;
        self.scan.validate(n)
    }
}

/// 1-based order statistic used as the critical value.
pub fn quantile_index(alpha: f64, replicates: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if replicates == 0 {
        return Err(Error::InvalidConfig("need at least one Monte Carlo replicate".into()));
    }
    let v = (1.0 - alpha) * (replicates + 1) as f64;
    // (1 - 0.1) * 1000 is 900.0000000000001 in floating point
    let q = (v - 1e-9 * v.max(1.0)).ceil().max(1.0) as usize;
    if q > replicates {
        return Err(Error::InvalidConfig(format!(
            "quantile index {q} exceeds the {replicates} replicates; raise B or alpha"
        )));
    }
    Ok(q)
}

/// The `ceil((1 - alpha)(B + 1))`-th smallest sample.
pub fn conditional_quantile(samples: &[f64], alpha: f64) -> Result<f64> {
    let q = quantile_index(alpha, samples.len())?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[q - 1])
}

/// `(1 + #{b : samples[b] >= observed}) / (B + 1)`.
pub fn p_value(samples: &[f64], observed: f64) -> f64 {
    let hits = samples.iter().filter(|&&s| s >= observed).count();
    (1 + hits) as f64 / (samples.len() + 1) as f64
}

/// `T_n` under `replicates` independent sign draws. Replicate `b` uses the
/// stream `(seed, b)`, so the output does not depend on the thread count.
pub fn simulate_null(table: &CoefficientTable, replicates: usize, seed: u64) -> Vec<f64> {
    let n = table.n();
    let mask = table.zero_mask();
    let batches = replicates.div_ceil(BATCH);
    let per_batch: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * BATCH;
            let hi = (lo + BATCH).min(replicates);
            let signs: Vec<Vec<f64>> = (lo..hi)
                .map(|b| {
                    let mut s = vec![0.0; n];
                    fill_signs(&mut stream(seed, Domain::Signs, b as u64), mask, &mut s);
                    s
                })
                .collect();
            scan_max_batch(table, &signs)
        })
        .collect();
    per_batch.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub kappa: f64,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
}

pub fn calibrate(table: &CoefficientTable, observed: f64, cfg: &TestConfig) -> Result<CalibrationResult> {
    quantile_index(cfg.alpha, cfg.replicates)?;
    let null_samples = simulate_null(table, cfg.replicates, cfg.seed);
    let kappa = conditional_quantile(&null_samples, cfg.alpha)?;
    let p_value = p_value(&null_samples, observed);
    Ok(CalibrationResult { kappa, null_samples, p_value })
}

/// Exact conditional law of `T_n`: atoms in increasing order with masses.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub atoms: Vec<(f64, f64)>,
}

impl NullDistribution {
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.0 <= x).map(|a| a.1).sum()
    }

    /// `P(T_n > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > x).map(|a| a.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    /// Atom within `tol` of `x`, if any.
    pub fn atom_near(&self, x: f64, tol: f64) -> Option<(f64, f64)> {
        self.atoms.iter().copied().find(|a| (a.0 - x).abs() <= tol)
    }
}

/// Enumerates all `2^n` sign vectors. Refuses `n > n_limit`.
pub fn exact_null_distribution(table: &CoefficientTable, n_limit: usize) -> Result<NullDistribution> {
    let n = table.n();
    if n > n_limit || n >= 31 {
        return Err(Error::EnumerationTooLarge { n, limit: n_limit.min(30) });
    }
    let mask = table.zero_mask();
    let total = 1usize << n;
    let mut values = Vec::with_capacity(total);
    let mut start = 0;
    while start < total {
        let end = (start + 64).min(total);
        let batch: Vec<Vec<f64>> = (start..end)
            .map(|pattern| {
                (0..n)
                    .map(|i| {
                        if mask[i] {
                            0.0
                        } else if (pattern >> i) & 1 == 1 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .collect()
            })
            .collect();
        values.extend(scan_max_batch(table, &batch));
        start = end;
    }
    values.sort_by(f64::total_cmp);
    let mass = 1.0 / total as f64;
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for v in values {
        match atoms.last_mut() {
            Some(last) if (v - last.0).abs() <= 1e-12 * v.abs().max(1.0) => last.1 += mass,
            _ => atoms.push((v, mass)),
        }
    }
    Ok(NullDistribution { atoms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Up,
    #[serde(rename = "-")]
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedInterval {
    pub j: usize,
    pub k: usize,
    pub x_j: f64,
    pub x_k: f64,
    pub t: f64,
    pub penalty: f64,
    pub excess: f64,
    pub direction: Direction,
}

impl DetectedInterval {
    /// Index-set inclusion.
    pub fn contains(&self, other: &DetectedInterval) -> bool {
        self.j <= other.j && other.k <= self.k
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub intervals: Vec<DetectedInterval>,
    /// Intervals containing no other detected interval.
    pub minimal: Vec<DetectedInterval>,
}

impl DetectionSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Windows with `|T_jk| - penalty > kappa` (or `T_jk - penalty > kappa`
/// when `one_sided`), plus their minimal elements.
pub fn detect_intervals(s: &ScanResult, kappa: f64, d: &Dataset, one_sided: bool) -> DetectionSet {
    let x = d.x();
    let intervals: Vec<DetectedInterval> = s
        .records
        .iter()
        .filter(|r| {
            let lhs = if one_sided { r.t - r.penalty } else { r.excess };
            lhs > kappa
        })
        .map(|r| DetectedInterval {
            j: r.j,
            k: r.k,
            x_j: x[r.j],
            x_k: x[r.k],
            t: r.t,
            penalty: r.penalty,
            excess: r.excess,
            direction: if r.t >= 0.0 { Direction::Up } else { Direction::Down },
        })
        .collect();
    let minimal = minimal_intervals(&intervals, d.len());
    DetectionSet { intervals, minimal }
}

/// An interval `[j, k]` is minimal iff no other listed interval lies inside it.
fn minimal_intervals(intervals: &[DetectedInterval], n: usize) -> Vec<DetectedInterval> {
    // smallest right end per left end, then suffix minima over left ends
    let mut min_k = vec![usize::MAX; n + 1];
    for iv in intervals {
        min_k[iv.j] = min_k[iv.j].min(iv.k);
    }
    let mut suffix = vec![usize::MAX; n + 2];
    for j in (0..=n).rev() {
        suffix[j] = suffix[j + 1].min(min_k[j]);
    }
    intervals
        .iter()
        .filter(|iv| min_k[iv.j] == iv.k && suffix[iv.j + 1] > iv.k)
        .cloned()
        .collect()
}

/// Everything computed by one run of the test.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub scan: ScanResult,
    pub calibration: CalibrationResult,
    pub detections: DetectionSet,
    pub report: TestReport,
}

pub fn run_test(d: &Dataset, cfg: &TestConfig) -> Result<TestReport> {
    run_test_full(d, cfg).map(|o| o.report)
}

pub fn run_test_full(d: &Dataset, cfg: &TestConfig) -> Result<TestOutcome> {
    let started = Instant::now();
    cfg.validate(d.len())?;
    let table = build_coefficients(d, cfg.kernel, &cfg.scan)?;
    let observed = scan(&table, &d.signs())?;
    let calibration = calibrate(&table, observed.t_n, cfg)?;
    let detections = detect_intervals(&observed, calibration.kappa, d, cfg.one_sided);
    let report = TestReport {
        method: Method::SignedRank,
        n: d.len(),
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        seed: cfg.seed,
        kernel: cfg.kernel,
        policy: cfg.scan.policy,
        min_window: cfg.scan.min_window,
        one_sided: cfg.one_sided,
        sigma: None,
        t_n: observed.t_n,
        kappa: calibration.kappa,
        p_value: calibration.p_value,
        reject: observed.t_n > calibration.kappa,
        intervals: detections.intervals.clone(),
        minimal_intervals: detections.minimal.clone(),
        timing_ms: cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
        version: crate::VERSION.to_string(),
    };
    Ok(TestOutcome { scan: observed, calibration, detections, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistic::WindowRecord;

    #[test]
    fn quantile_examples() {
        let s: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(conditional_quantile(&s, 0.1).unwrap(), 9.0);
        assert_eq!(conditional_quantile(&s, 0.5).unwrap(), 5.0);
        assert_eq!(quantile_index(0.1, 999).unwrap(), 900);
        assert_eq!(quantile_index(0.1, 199).unwrap(), 180);
        assert!(conditional_quantile(&s, 0.05).is_err());
        assert!(quantile_index(0.0, 10).is_err());
        assert!(quantile_index(1.0, 10).is_err());
        assert!(quantile_index(0.5, 0).is_err());
        assert_eq!(quantile_index(0.5, 1).unwrap(), 1);
    }

    #[test]
    fn p_value_counts_ties() {
        let s = [1.0, 2.0, 3.0, 3.0];
        assert_eq!(p_value(&s, 3.0), 3.0 / 5.0);
        assert_eq!(p_value(&s, 10.0), 1.0 / 5.0);
        assert_eq!(p_value(&s, -10.0), 1.0);
    }

    fn two_point() -> CoefficientTable {
        let d = Dataset::new(vec![0.5, 1.0], vec![1.0, 2.0]).unwrap();
        build_coefficients(&d, Kernel::Rectangular, &ScanConfig::default()).unwrap()
    }

    #[test]
    fn exact_two_point_law() {
        let dist = exact_null_distribution(&two_point(), EXACT_LIMIT).unwrap();
        assert_eq!(dist.atoms.len(), 2);
        let ln2 = (2.0 * 2f64.ln()).sqrt();
        assert!((dist.atoms[0].0 - (1.0 / 5f64.sqrt() - ln2)).abs() < 1e-12);
        assert!((dist.atoms[1].0 - (3.0 / 5f64.sqrt() - ln2)).abs() < 1e-12);
        assert_eq!(dist.atoms[0].1, 0.5);
        assert_eq!(dist.atoms[1].1, 0.5);
        assert!((dist.atoms[0].0 + 0.73020).abs() < 1e-5);
        assert!((dist.atoms[1].0 - 0.16423).abs() < 1e-5);
    }

    #[test]
    fn simulated_two_point_frequencies() {
        let table = two_point();
        let s = simulate_null(&table, 10_000, 42);
        let high = s.iter().filter(|&&v| v > 0.0).count() as f64 / 1e4;
        assert!((high - 0.5).abs() <= 0.015, "{high}");
        assert_eq!(simulate_null(&table, 1, 9), simulate_null(&table, 1, 9));
        assert_eq!(simulate_null(&table, 40, 9)[..1], simulate_null(&table, 1, 9)[..]);
    }

    #[test]
    fn enumeration_limit() {
        let n = 13;
        let d = Dataset::new((0..n).map(f64::from).collect(), (1..=n).map(f64::from).collect()).unwrap();
        let t = build_coefficients(&d, Kernel::Rectangular, &ScanConfig::default()).unwrap();
        assert!(matches!(
            exact_null_distribution(&t, EXACT_LIMIT),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    fn record(j: usize, k: usize, t: f64) -> WindowRecord {
        WindowRecord { j, k, t, penalty: 1.0, excess: t.abs() - 1.0 }
    }

    #[test]
    fn nested_detections_reduce_to_inner() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let d = Dataset::new(x, vec![1.0; 12]).unwrap();
        let s = ScanResult {
            t_n: 4.0,
            records: vec![record(1, 10, 5.0), record(3, 5, -4.0), record(6, 8, 0.5)],
        };
        let det = detect_intervals(&s, 0.5, &d, false);
        assert_eq!(det.intervals.len(), 2);
        assert_eq!(det.minimal.len(), 1);
        assert_eq!((det.minimal[0].j, det.minimal[0].k), (3, 5));
        assert_eq!(det.minimal[0].direction, Direction::Down);

        assert!(detect_intervals(&s, 10.0, &d, false).is_empty());

        let one = detect_intervals(&s, 0.5, &d, true);
        assert_eq!(one.intervals.len(), 1);
        assert_eq!((one.minimal[0].j, one.minimal[0].k), (1, 10));
    }

    #[test]
    fn minimal_with_shared_endpoints() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = Dataset::new(x, vec![1.0; 10]).unwrap();
        let s = ScanResult {
            t_n: 9.0,
            records: vec![record(0, 4, 9.0), record(0, 6, 9.0), record(2, 4, 9.0), record(5, 9, 9.0), record(6, 9, 9.0)],
        };
        let det = detect_intervals(&s, 0.0, &d, false);
        let mins: Vec<_> = det.minimal.iter().map(|m| (m.j, m.k)).collect();
        assert_eq!(mins, vec![(2, 4), (6, 9)]);
    }
}
