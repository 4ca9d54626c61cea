//! The penalized multiscale statistic.
//!
//! For a window `j..=k` with coefficients `c_i = psi_jk(x_i) R_jk(i)` the
//! local statistic is `T_jk = sum c_i s_i / sqrt(sum c_i^2)` (zero when the
//! denominator vanishes) and the multiscale statistic is
//! `T_n = max_{j<k} |T_jk| - sqrt(2 log(n / (k - j)))`.
//!
//! Everything that depends on the data only through the ranks lives in a
//! [`CoefficientTable`], so Monte Carlo replicates only supply new sign
//! vectors. The same table type, built with unit ranks, serves the
//! Gaussian reference test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::ranks::{local_midranks, Dataset, RankLevels};

/// Largest number of stored coefficients before the table switches to
/// recomputing them on every scan.
pub const DEFAULT_COEFFICIENT_BUDGET: usize = 20_000_000;

/// Largest sample size for which the exhaustive policy is picked automatically.
pub const EXHAUSTIVE_AUTO_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowPolicy {
    /// Every pair `j < k`.
    Exhaustive,
    /// Window sizes on a geometric grid with ratio `sqrt 2`, left ends on a
    /// stride of `max(1, size / 8)`. Approximates the exhaustive maximum.
    Dyadic,
}

impl WindowPolicy {
    pub fn auto(n: usize) -> Self {
        if n <= EXHAUSTIVE_AUTO_LIMIT {
            WindowPolicy::Exhaustive
        } else {
            WindowPolicy::Dyadic
        }
    }
}

impl fmt::Display for WindowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowPolicy::Exhaustive => "exhaustive",
            WindowPolicy::Dyadic => "dyadic",
        })
    }
}

impl FromStr for WindowPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exhaustive" => Ok(WindowPolicy::Exhaustive),
            "dyadic" => Ok(WindowPolicy::Dyadic),
            other => Err(Error::InvalidConfig(format!("unknown window policy {other:?}"))),
        }
    }
}

/// Which windows to scan and how much memory the coefficient table may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub policy: WindowPolicy,
    /// Smallest window size `k - j + 1`.
    pub min_window: usize,
    pub coefficient_budget: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            policy: WindowPolicy::Exhaustive,
            min_window: 2,
            coefficient_budget: DEFAULT_COEFFICIENT_BUDGET,
        }
    }
}

impl ScanConfig {
    pub fn with_policy(policy: WindowPolicy) -> Self {
        ScanConfig { policy, ..Default::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.min_window < 2 {
            return Err(Error::InvalidConfig(format!(
                "minimum window size must be at least 2, got {}",
                self.min_window
            )));
        }
        if self.min_window > n {
            return Err(Error::InvalidConfig(format!(
                "minimum window size {} exceeds n = {n}",
                self.min_window
            )));
        }
        Ok(())
    }
}

/// All scanned windows `(j, k)` (0-based, inclusive) in `(j, k)` order.
pub fn enumerate_windows(n: usize, cfg: &ScanConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate(n)?;
    let mut out = Vec::new();
    match cfg.policy {
        WindowPolicy::Exhaustive => {
            for j in 0..n {
                for k in (j + cfg.min_window - 1)..n {
                    out.push((j, k));
                }
            }
        }
        WindowPolicy::Dyadic => {
            let mut sizes = Vec::new();
            let mut s = cfg.min_window as f64;
            loop {
                let m = s.round() as usize;
                if m > n {
                    break;
                }
                if sizes.last() != Some(&m) {
                    sizes.push(m);
                }
                s *= std::f64::consts::SQRT_2;
            }
            if sizes.last() != Some(&n) {
                sizes.push(n);
            }
            for m in sizes {
                let stride = (m / 8).max(1);
                let last = n - m;
                let mut j = 0;
                while j < last {
                    out.push((j, j + m - 1));
                    j += stride;
                }
                out.push((last, n - 1));
            }
            out.sort_unstable();
            out.dedup();
        }
    }
    Ok(out)
}

/// `sqrt(2 log(n / (k - j)))` for 0-based `j < k < n`.
pub fn penalty(n: usize, j: usize, k: usize) -> Result<f64> {
    if j >= k || k >= n {
        return Err(Error::InvalidWindow { j, k, n });
    }
    Ok(penalty_unchecked(n, k - j))
}

#[inline]
fn penalty_unchecked(n: usize, gap: usize) -> f64 {
    (2.0 * (n as f64 / gap as f64).ln()).sqrt()
}

/// Dot product with a fixed lane-wise summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `sum c_i s_i / sqrt(sum c_i^2)`, or 0 when every coefficient vanishes.
pub fn local_statistic(coeffs: &[f64], signs: &[f64]) -> Result<f64> {
    if coeffs.len() != signs.len() || coeffs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "coefficient and sign sequences must be nonempty and of equal length ({} vs {})",
            coeffs.len(),
            signs.len()
        )));
    }
    let den_sq = dot(coeffs, coeffs);
    if den_sq > 0.0 {
        Ok(dot(coeffs, signs) / den_sq.sqrt())
    } else {
        Ok(0.0)
    }
}

/// Per-window quantities shared by every scan of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMeta {
    pub j: usize,
    pub k: usize,
    offset: usize,
    den_sq: f64,
    den: f64,
    pub penalty: f64,
}

impl WindowMeta {
    pub fn len(&self) -> usize {
        self.k - self.j + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `sum c_i^2`.
    pub fn denominator_sq(&self) -> f64 {
        self.den_sq
    }

    pub fn denominator(&self) -> f64 {
        self.den
    }

    #[inline]
    fn statistic(&self, coeffs: &[f64], scores: &[f64]) -> f64 {
        if self.den_sq > 0.0 {
            dot(coeffs, &scores[self.j..=self.k]) / self.den
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Stored(Vec<f64>),
    OnTheFly { x: Vec<f64>, levels: Option<RankLevels> },
}

/// Precomputed window coefficients for one dataset (or one design, for the
/// Gaussian reference).
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    n: usize,
    kernel: Kernel,
    config: ScanConfig,
    windows: Vec<WindowMeta>,
    storage: Storage,
    zero_mask: Vec<bool>,
}

/// Coefficient table of the signed-rank statistic for `d`.
pub fn build_coefficients(d: &Dataset, kernel: Kernel, config: &ScanConfig) -> Result<CoefficientTable> {
    let levels = RankLevels::from_dataset(d);
    let zero_mask = d.y().iter().map(|&v| v == 0.0).collect();
    CoefficientTable::build(d.x(), Some(levels), kernel, config, zero_mask)
}

/// Kernel-only table (all ranks equal to one), used by the Gaussian reference.
pub fn kernel_table(x: &[f64], kernel: Kernel, config: &ScanConfig) -> Result<CoefficientTable> {
    CoefficientTable::build(x, None, kernel, config, vec![false; x.len()])
}

impl CoefficientTable {
    fn build(
        x: &[f64],
        levels: Option<RankLevels>,
        kernel: Kernel,
        config: &ScanConfig,
        zero_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = x.len();
        let pairs = enumerate_windows(n, config)?;
        let total: usize = pairs.iter().map(|&(j, k)| k - j + 1).sum();
        let mut offset = 0;
        let windows = pairs
            .iter()
            .map(|&(j, k)| {
                let meta = WindowMeta {
                    j,
                    k,
                    offset,
                    den_sq: 0.0,
                    den: 0.0,
                    penalty: penalty_unchecked(n, k - j),
                };
                offset += k - j + 1;
                meta
            })
            .collect();
        let mut table = CoefficientTable {
            n,
            kernel,
            config: config.clone(),
            windows,
            storage: Storage::OnTheFly { x: x.to_vec(), levels },
            zero_mask,
        };
        let store = total <= config.coefficient_budget;
        let mut stored = Vec::with_capacity(if store { total } else { 0 });
        let mut dens = Vec::with_capacity(table.windows.len());
        table.for_each_window(|_, _, c| {
            dens.push(dot(c, c));
            if store {
                stored.extend_from_slice(c);
            }
        });
        for (w, den_sq) in table.windows.iter_mut().zip(dens) {
            w.den_sq = den_sq;
            w.den = den_sq.sqrt();
        }
        if store {
            table.storage = Storage::Stored(stored);
        }
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn config(&self) -> &ScanConfig {
        &self.config
    }

    pub fn windows(&self) -> &[WindowMeta] {
        &self.windows
    }

    /// Whether coefficients are held in memory (as opposed to recomputed per scan).
    pub fn is_precomputed(&self) -> bool {
        matches!(self.storage, Storage::Stored(_))
    }

    /// Positions whose response is exactly zero; their sign is fixed at 0.
    pub fn zero_mask(&self) -> &[bool] {
        &self.zero_mask
    }

    /// Coefficients of every window, in canonical order.
    pub fn coefficients(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.windows.len());
        self.for_each_window(|_, _, c| out.push(c.to_vec()));
        out
    }

    /// Calls `f(index, meta, coefficients)` for every window in canonical order.
    pub fn for_each_window<F>(&self, mut f: F)
    where
        F: FnMut(usize, &WindowMeta, &[f64]),
    {
        match &self.storage {
            Storage::Stored(c) => {
                for (idx, w) in self.windows.iter().enumerate() {
                    f(idx, w, &c[w.offset..w.offset + w.len()]);
                }
            }
            Storage::OnTheFly { x, levels } => {
                let mut buf = Vec::with_capacity(self.n);
                let mut idx = 0;
                while idx < self.windows.len() {
                    let j = self.windows[idx].j;
                    let end = idx + self.windows[idx..].iter().take_while(|w| w.j == j).count();
                    match (levels, self.config.policy) {
                        (Some(levels), WindowPolicy::Exhaustive) => {
                            let mut stream = levels.stream(j);
                            let mut next = idx;
                            while next < end {
                                let Some((k, ranks)) = stream.advance() else { break };
                                let w = &self.windows[next];
                                if k == w.k {
                                    self.fill(x, w, Some(ranks), &mut buf);
                                    f(next, w, &buf);
                                    next += 1;
                                }
                            }
                        }
                        (Some(levels), WindowPolicy::Dyadic) => {
                            for (i, w) in self.windows[idx..end].iter().enumerate() {
                                let ranks = local_midranks(&levels.level_values(w.j, w.k));
                                self.fill(x, w, Some(&ranks), &mut buf);
                                f(idx + i, w, &buf);
                            }
                        }
                        (None, _) => {
                            for (i, w) in self.windows[idx..end].iter().enumerate() {
                                self.fill(x, w, None, &mut buf);
                                f(idx + i, w, &buf);
                            }
                        }
                    }
                    idx = end;
                }
            }
        }
    }

    fn fill(&self, x: &[f64], w: &WindowMeta, ranks: Option<&[f64]>, buf: &mut Vec<f64>) {
        let (s, t) = (x[w.j], x[w.k]);
        buf.clear();
        match ranks {
            Some(r) => buf.extend(
                x[w.j..=w.k]
                    .iter()
                    .zip(r)
                    .map(|(&xi, &ri)| self.kernel.window_weight(s, t, xi) * ri),
            ),
            None => buf.extend(x[w.j..=w.k].iter().map(|&xi| self.kernel.window_weight(s, t, xi))),
        }
    }

    fn check_scores(&self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "expected {} scores, got {}",
                self.n,
                scores.len()
            )));
        }
        Ok(())
    }
}

/// One scanned window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub j: usize,
    pub k: usize,
    pub t: f64,
    pub penalty: f64,
    /// `|t| - penalty`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub t_n: f64,
    pub records: Vec<WindowRecord>,
}

/// Scans every window of `table` against `scores` (signs for the signed-rank
/// test, standardized responses for the Gaussian reference).
pub fn scan(table: &CoefficientTable, scores: &[f64]) -> Result<ScanResult> {
    table.check_scores(scores)?;
    let mut records = Vec::with_capacity(table.windows.len());
    let mut t_n = f64::NEG_INFINITY;
    table.for_each_window(|_, w, c| {
        let t = w.statistic(c, scores);
        let excess = t.abs() - w.penalty;
        t_n = t_n.max(excess);
        records.push(WindowRecord { j: w.j, k: w.k, t, penalty: w.penalty, excess });
    });
    Ok(ScanResult { t_n, records })
}

/// `T_n` alone; equal to `scan(table, scores)?.t_n`.
pub fn scan_max(table: &CoefficientTable, scores: &[f64]) -> Result<f64> {
    table.check_scores(scores)?;
    Ok(scan_max_batch(table, std::slice::from_ref(&scores.to_vec()))[0])
}

/// `T_n` for several score vectors in one pass over the table.
pub(crate) fn scan_max_batch(table: &CoefficientTable, batch: &[Vec<f64>]) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; batch.len()];
    table.for_each_window(|_, w, c| {
        if w.den_sq > 0.0 {
            for (b, scores) in best.iter_mut().zip(batch) {
                let e = w.statistic(c, scores).abs() - w.penalty;
                if e > *b {
                    *b = e;
                }
            }
        } else {
            let e = -w.penalty;
            for b in best.iter_mut() {
                if e > *b {
                    *b = e;
                }
            }
        }
    });
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn local_statistic_examples() {
        let t = local_statistic(&[1.0, 2.0, 3.0], &[1.0, -1.0, 1.0]).unwrap();
        assert!(approx(t, 2.0 / 14f64.sqrt(), 1e-15));
        assert!(approx(t, 0.53452, 1e-5));
        assert_eq!(local_statistic(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        let neg = local_statistic(&[1.0, 2.0, 3.0], &[-1.0, 1.0, -1.0]).unwrap();
        assert_eq!(neg, -t);
        assert!(local_statistic(&[1.0], &[1.0, 1.0]).is_err());
        assert!(local_statistic(&[], &[]).is_err());
    }

    #[test]
    fn penalty_examples() {
        assert!(approx(penalty(100, 0, 10).unwrap(), 2.14597, 1e-5));
        assert!(approx(penalty(100, 0, 99).unwrap(), 0.14178, 1e-5));
        assert!(penalty(100, 0, 99).unwrap() > 0.0);
        assert!(penalty(100, 5, 5).is_err());
        assert!(penalty(100, 6, 5).is_err());
        assert!(penalty(100, 0, 100).is_err());
    }

    #[test]
    fn three_point_enumeration() {
        let d = Dataset::new(vec![1.0 / 3.0, 2.0 / 3.0, 1.0], vec![1.0, -2.0, 3.0]).unwrap();
        let table = build_coefficients(&d, Kernel::Rectangular, &ScanConfig::default()).unwrap();
        let pairs: Vec<_> = table.windows().iter().map(|w| (w.j, w.k)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
        let lens: Vec<_> = table.coefficients().iter().map(Vec::len).collect();
        assert_eq!(lens, vec![2, 3, 2]);

        let r = scan(&table, &d.signs()).unwrap();
        let s5 = 5f64.sqrt();
        assert!(approx(r.records[0].t, -1.0 / s5, 1e-15));
        assert!(approx(r.records[1].t, 2.0 / 14f64.sqrt(), 1e-15));
        assert!(approx(r.records[2].t, 1.0 / s5, 1e-15));
        assert!(approx(r.records[0].penalty, 1.48230, 1e-5));
        assert!(approx(r.records[1].penalty, 0.90052, 1e-5));
        assert!(approx(r.t_n, -0.36600, 1e-5));
        assert_eq!(scan_max(&table, &d.signs()).unwrap(), r.t_n);
    }

    #[test]
    fn two_point_scan() {
        let d = Dataset::new(vec![0.5, 1.0], vec![1.0, 2.0]).unwrap();
        let table = build_coefficients(&d, Kernel::Rectangular, &ScanConfig::default()).unwrap();
        let r = scan(&table, &d.signs()).unwrap();
        assert!(approx(r.records[0].t, 3.0 / 5f64.sqrt(), 1e-15));
        assert!(approx(r.t_n, 3.0 / 5f64.sqrt() - (2.0 * 2f64.ln()).sqrt(), 1e-15));
        assert!(approx(r.t_n, 0.16423, 1e-5));
    }

    #[test]
    fn holder_window_endpoints_vanish() {
        let d = Dataset::new(vec![1.0 / 3.0, 2.0 / 3.0, 1.0], vec![1.0, -2.0, 3.0]).unwrap();
        let table = build_coefficients(&d, Kernel::holder(1.0).unwrap(), &ScanConfig::default()).unwrap();
        let coeffs = table.coefficients();
        // (2/3 - 1/3) / (1 - 1/3) is one ulp below 1/2
        assert_eq!(coeffs[1][0], 0.0);
        assert_eq!(coeffs[1][2], 0.0);
        assert!(approx(coeffs[1][1], 2.0, 1e-12));
        // size-2 windows have all-zero weights
        assert_eq!(table.windows()[0].denominator_sq(), 0.0);
        let r = scan(&table, &d.signs()).unwrap();
        assert_eq!(r.records[0].t, 0.0);
        assert_eq!(r.records[0].excess, -r.records[0].penalty);
    }

    #[test]
    fn scaling_y_leaves_table_unchanged() {
        let x: Vec<f64> = (1..=7).map(|i| i as f64 / 7.0).collect();
        let y = vec![0.3, -1.2, 2.5, -0.1, 0.9, -3.3, 1.1];
        let d1 = Dataset::new(x.clone(), y.clone()).unwrap();
        let d2 = Dataset::new(x, y.iter().map(|v| 5.0 * v).collect()).unwrap();
        let cfg = ScanConfig::default();
        let t1 = build_coefficients(&d1, Kernel::Epanechnikov, &cfg).unwrap();
        let t2 = build_coefficients(&d2, Kernel::Epanechnikov, &cfg).unwrap();
        assert_eq!(t1.coefficients(), t2.coefficients());
    }

    #[test]
    fn on_the_fly_matches_stored() {
        let n = 23;
        let x: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.3).collect();
        let d = Dataset::new(x, y).unwrap();
        for policy in [WindowPolicy::Exhaustive, WindowPolicy::Dyadic] {
            let stored_cfg = ScanConfig::with_policy(policy);
            let lazy_cfg = ScanConfig { coefficient_budget: 0, ..stored_cfg.clone() };
            let a = build_coefficients(&d, Kernel::Epanechnikov, &stored_cfg).unwrap();
            let b = build_coefficients(&d, Kernel::Epanechnikov, &lazy_cfg).unwrap();
            assert!(a.is_precomputed());
            assert!(!b.is_precomputed());
            assert_eq!(a.coefficients(), b.coefficients());
            assert_eq!(scan(&a, &d.signs()).unwrap(), scan(&b, &d.signs()).unwrap());
        }
    }

    #[test]
    fn dyadic_windows_are_sorted_and_cover_the_sample() {
        let cfg = ScanConfig::with_policy(WindowPolicy::Dyadic);
        let w = enumerate_windows(1000, &cfg).unwrap();
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert!(w.contains(&(0, 999)));
        assert!(w.contains(&(0, 1)) && w.contains(&(998, 999)));
        assert!(w.len() < 1000 * 999 / 2 / 10);
    }

    #[test]
    fn min_window_validation() {
        let mut cfg = ScanConfig { min_window: 1, ..ScanConfig::default() };
        assert!(enumerate_windows(10, &cfg).is_err());
        cfg.min_window = 11;
        assert!(enumerate_windows(10, &cfg).is_err());
        cfg.min_window = 4;
        let w = enumerate_windows(5, &cfg).unwrap();
        assert_eq!(w, vec![(0, 3), (0, 4), (1, 4)]);
    }
}
