//! Gaussian-calibrated multiscale test.
//!
//! Same windows, kernel weights and penalty as the signed-rank test, but each
//! window standardizes the raw responses by a noise scale,
//! `sum psi_jk(x_i) y_i / (sigma sqrt(sum psi_jk(x_i)^2))`, and the critical
//! value comes from synthetic standard normal data on the same design. It
//! is exact only for homoscedastic Gaussian noise with the right scale.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{conditional_quantile, detect_intervals, p_value, quantile_index};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::ranks::Dataset;
use crate::report::{Method, TestReport};
use crate::rng::{stream, Domain};
use crate::statistic::{dot, kernel_table, scan, scan_max_batch, CoefficientTable, ScanConfig};

const BATCH: usize = 16;

/// MAD consistency factor for the normal distribution.
const MAD_NORMAL: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SigmaSpec {
    Known(f64),
    /// Robust first-difference estimate from the data.
    Estimate,
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Known(v) => write!(f, "{v}"),
            SigmaSpec::Estimate => f.write_str("estimate"),
        }
    }
}

impl FromStr for SigmaSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "estimate" {
            return Ok(SigmaSpec::Estimate);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("sigma must be a number or \"estimate\", got {s:?}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {v}")));
        }
        Ok(SigmaSpec::Known(v))
    }
}

impl TryFrom<String> for SigmaSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SigmaSpec> for String {
    fn from(s: SigmaSpec) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScanConfig {
    pub sigma: SigmaSpec,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub kernel: Kernel,
    pub scan: ScanConfig,
    pub one_sided: bool,
    pub timing: bool,
}

impl GaussianScanConfig {
    pub fn new(sigma: SigmaSpec, alpha: f64, replicates: usize, seed: u64, kernel: Kernel) -> Result<Self> {
        if let SigmaSpec::Known(v) = sigma {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {v}")));
            }
        }
        quantile_index(alpha, replicates)?;
        Ok(GaussianScanConfig {
            sigma,
            alpha,
            replicates,
            seed,
            kernel,
            scan: ScanConfig::default(),
            one_sided: false,
            timing: false,
        })
    }

    pub fn with_scan(mut self, scan: ScanConfig) -> Self {
        self.scan = scan;
        self
    }
}

/// `sum w_i y_i / (sigma sqrt(sum w_i^2))`, or 0 when all weights vanish.
pub fn gaussian_local(weights: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if weights.len() != y.len() || weights.is_empty() {
        return Err(Error::InvalidInput("weights and responses must be nonempty and of equal length".into()));
    }
    let den_sq = dot(weights, weights);
    if den_sq > 0.0 {
        Ok(dot(weights, y) / (sigma * den_sq.sqrt()))
    } else {
        Ok(0.0)
    }
}

/// `1.4826 median|y_{i+1} - y_i| / sqrt 2`.
pub fn robust_sigma(y: &[f64]) -> f64 {
    let mut diffs: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.is_empty() {
        return 0.0;
    }
    diffs.sort_by(f64::total_cmp);
    let m = diffs.len();
    let median = if m % 2 == 1 { diffs[m / 2] } else { 0.5 * (diffs[m / 2 - 1] + diffs[m / 2]) };
    MAD_NORMAL * median / std::f64::consts::SQRT_2
}

/// Penalized maxima of `replicates` standard normal datasets on the table's design.
pub fn gaussian_null_samples(table: &CoefficientTable, replicates: usize, seed: u64) -> Vec<f64> {
    let n = table.n();
    let batches = replicates.div_ceil(BATCH);
    let per_batch: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * BATCH;
            let hi = (lo + BATCH).min(replicates);
            let ys: Vec<Vec<f64>> = (lo..hi)
                .map(|b| {
                    let mut rng = stream(seed, Domain::Gaussian, b as u64);
                    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
                })
                .collect();
            scan_max_batch(table, &ys)
        })
        .collect();
    per_batch.into_iter().flatten().collect()
}

/// A calibrated Gaussian reference test for one design. The critical value
/// depends only on the design, so one instance serves many datasets.
#[derive(Debug, Clone)]
pub struct GaussianReference {
    cfg: GaussianScanConfig,
    table: CoefficientTable,
    null_samples: Vec<f64>,
    kappa: f64,
}

impl GaussianReference {
    pub fn prepare(x: &[f64], cfg: &GaussianScanConfig) -> Result<Self> {
        cfg.scan.validate(x.len())?;
        let table = kernel_table(x, cfg.kernel, &cfg.scan)?;
        let null_samples = gaussian_null_samples(&table, cfg.replicates, cfg.seed);
        let kappa = conditional_quantile(&null_samples, cfg.alpha)?;
        Ok(GaussianReference { cfg: cfg.clone(), table, null_samples, kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn null_samples(&self) -> &[f64] {
        &self.null_samples
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn test(&self, d: &Dataset) -> Result<TestReport> {
        let started = Instant::now();
        if d.len() != self.table.n() {
            return Err(Error::InvalidInput(format!(
                "reference prepared for n = {}, dataset has n = {}",
                self.table.n(),
                d.len()
            )));
        }
        let sigma = match self.cfg.sigma {
            SigmaSpec::Known(v) => v,
            SigmaSpec::Estimate => robust_sigma(d.y()),
        };
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("estimated noise scale is zero".into()));
        }
        let z: Vec<f64> = d.y().iter().map(|v| v / sigma).collect();
        let observed = scan(&self.table, &z)?;
        let det = detect_intervals(&observed, self.kappa, d, self.cfg.one_sided);
        Ok(TestReport {
            method: Method::Gaussian,
            n: d.len(),
            alpha: self.cfg.alpha,
            replicates: self.cfg.replicates,
            seed: self.cfg.seed,
            kernel: self.cfg.kernel,
            policy: self.cfg.scan.policy,
            min_window: self.cfg.scan.min_window,
            one_sided: self.cfg.one_sided,
            sigma: Some(sigma),
            t_n: observed.t_n,
            kappa: self.kappa,
            p_value: p_value(&self.null_samples, observed.t_n),
            reject: observed.t_n > self.kappa,
            intervals: det.intervals,
            minimal_intervals: det.minimal,
            timing_ms: self.cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
            version: crate::VERSION.to_string(),
        })
    }
}

/// Critical value of the Gaussian reference on design `x`.
pub fn gaussian_calibrate(x: &[f64], cfg: &GaussianScanConfig) -> Result<f64> {
    GaussianReference::prepare(x, cfg).map(|r| r.kappa)
}

pub fn gaussian_test(d: &Dataset, cfg: &GaussianScanConfig) -> Result<TestReport> {
    GaussianReference::prepare(d.x(), cfg)?.test(d)
}
