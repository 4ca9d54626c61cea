//! Conditional multiscale signed-rank goodness-of-fit test for
//! nonparametric regression.
//!
//! Given responses `y_i = l(x_i) + eps_i` with independent errors that are
//! symmetric about zero (possibly heteroscedastic), the test checks
//! `l = 0` simultaneously on every design subinterval. Local weighted
//! signed-rank statistics are combined through a scale-penalized maximum,
//! calibrated by Monte Carlo conditional on the ranks of `|y|`, which makes
//! the test exact for every sample size. Intervals whose local statistic
//! exceeds the critical value carry a simultaneous confidence statement.
//!
//! ```
//! use msrank::{run_test, Dataset, Kernel, TestConfig};
//!
//! let x: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
//! let y: Vec<f64> = x.iter().map(|&t| if t > 0.5 { 3.0 } else { (t * 37.0).sin() }).collect();
//! let d = Dataset::new(x, y).unwrap();
//! let cfg = TestConfig::new(0.1, 199, 7, Kernel::Epanechnikov).unwrap();
//! let report = run_test(&d, &cfg).unwrap();
//! assert_eq!(report.reject, !report.minimal_intervals.is_empty());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod kernels;
pub mod ranks;
pub mod report;
pub mod rng;
pub mod sim;
pub mod statistic;
pub mod svg;
pub mod theory;

pub use calibration::{
    calibrate, conditional_quantile, detect_intervals, exact_null_distribution, p_value, run_test,
    run_test_full, simulate_null, CalibrationResult, DetectedInterval, DetectionSet, Direction,
    NullDistribution, TestConfig, TestOutcome,
};
pub use error::{Error, Result};
pub use gaussian::{gaussian_calibrate, gaussian_local, gaussian_test, GaussianReference, GaussianScanConfig, SigmaSpec};
pub use io::{load_csv, read_csv, CsvOptions};
pub use kernels::{gamma_norm_sq, Kernel, KernelKind};
pub use ranks::{local_midranks, window_rank_stream, Dataset, RankTable};
pub use report::{emit_report, parse_report, Method, ReportFormat, TestReport};
pub use statistic::{
    build_coefficients, local_statistic, penalty, scan, scan_max, CoefficientTable, ScanConfig, ScanResult,
    WindowPolicy, WindowRecord,
};
pub use theory::{ErrorLaw, TheoryConstants};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
