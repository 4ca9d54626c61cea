use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use msrank::report::to_json_string;
use msrank::statistic::WindowPolicy;
use msrank::{
    build_coefficients, exact_null_distribution, load_csv, local_midranks, local_statistic, parse_report, scan,
    CsvOptions, DetectedInterval, Direction, ErrorLaw, GaussianScanConfig, Kernel, ScanConfig, SigmaSpec,
    TestConfig, TestReport, TheoryConstants,
};

fn to_py(e: msrank::Error) -> PyErr {
    match e {
        msrank::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Observations `(x_i, y_i)` with strictly increasing `x`.
#[pyclass(name = "Dataset", module = "msrank", frozen)]
struct PyDataset {
    inner: msrank::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<f64>, y: Vec<f64>) -> PyResult<Self> {
        Ok(PyDataset { inner: msrank::Dataset::new(x, y).map_err(to_py)? })
    }

    /// Read a two-column CSV file; rows are sorted by x.
    #[staticmethod]
    #[pyo3(signature = (path, header = false))]
    fn from_csv(path: &str, header: bool) -> PyResult<Self> {
        Ok(PyDataset { inner: load_csv(path, CsvOptions { header }).map_err(to_py)? })
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x().to_vec()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={})", self.inner.len())
    }
}

/// Result of `run_test` or `gauss_test`.
#[pyclass(name = "Report", module = "msrank", frozen)]
struct PyReport {
    inner: TestReport,
}

fn interval_dict<'py>(py: Python<'py>, iv: &DetectedInterval) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("j", iv.j)?;
    d.set_item("k", iv.k)?;
    d.set_item("x_j", iv.x_j)?;
    d.set_item("x_k", iv.x_k)?;
    d.set_item("t", iv.t)?;
    d.set_item("penalty", iv.penalty)?;
    d.set_item("excess", iv.excess)?;
    d.set_item("direction", if iv.direction == Direction::Up { "+" } else { "-" })?;
    Ok(d)
}

#[pymethods]
impl PyReport {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn t_n(&self) -> f64 {
        self.inner.t_n
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn p_value(&self) -> f64 {
        self.inner.p_value
    }

    #[getter]
    fn reject(&self) -> bool {
        self.inner.reject
    }

    #[getter]
    fn sigma(&self) -> Option<f64> {
        self.inner.sigma
    }

    #[getter]
    fn intervals<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.intervals.iter().map(|iv| interval_dict(py, iv)).collect()
    }

    #[getter]
    fn minimal_intervals<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.minimal_intervals.iter().map(|iv| interval_dict(py, iv)).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json_string(&self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyReport { inner: parse_report(text.as_bytes()).map_err(to_py)? })
    }

    /// SVG with the data and the minimal intervals.
    fn svg(&self, data: &PyDataset) -> String {
        msrank::svg::render_svg(&data.inner, &self.inner)
    }

    fn __eq__(&self, other: &PyReport) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(t_n={:.4}, kappa={:.4}, p_value={:.4}, reject={}, minimal_intervals={})",
            self.inner.t_n,
            self.inner.kappa,
            self.inner.p_value,
            self.inner.reject,
            self.inner.minimal_intervals.len()
        )
    }
}

fn parse_kernel(kernel: &str) -> PyResult<Kernel> {
    kernel.parse().map_err(to_py)
}

fn scan_config(n: usize, policy: Option<&str>, min_window: usize) -> PyResult<ScanConfig> {
    let policy = match policy {
        Some(p) => p.parse::<WindowPolicy>().map_err(to_py)?,
        None => WindowPolicy::auto(n),
    };
    Ok(ScanConfig { policy, min_window, ..ScanConfig::default() })
}

/// Conditional multiscale signed-rank test.
#[pyfunction]
#[pyo3(signature = (data, alpha = 0.1, mc = 999, seed = 1, kernel = "epa", policy = None, min_window = 2, one_sided = false))]
#[allow(clippy::too_many_arguments)]
fn run_test(
    py: Python<'_>,
    data: &PyDataset,
    alpha: f64,
    mc: usize,
    seed: u64,
    kernel: &str,
    policy: Option<&str>,
    min_window: usize,
    one_sided: bool,
) -> PyResult<PyReport> {
    let mut cfg = TestConfig::new(alpha, mc, seed, parse_kernel(kernel)?)
        .map_err(to_py)?
        .with_scan(scan_config(data.inner.len(), policy, min_window)?);
    cfg.one_sided = one_sided;
    let d = &data.inner;
    let inner = py.detach(|| msrank::run_test(d, &cfg)).map_err(to_py)?;
    Ok(PyReport { inner })
}

/// Multiscale test calibrated under Gaussian noise. `sigma=None` estimates
/// the noise scale from first differences.
#[pyfunction]
#[pyo3(signature = (data, sigma = None, alpha = 0.1, mc = 999, seed = 1, kernel = "epa", policy = None, min_window = 2, one_sided = false))]
#[allow(clippy::too_many_arguments)]
fn gauss_test(
    py: Python<'_>,
    data: &PyDataset,
    sigma: Option<f64>,
    alpha: f64,
    mc: usize,
    seed: u64,
    kernel: &str,
    policy: Option<&str>,
    min_window: usize,
    one_sided: bool,
) -> PyResult<PyReport> {
    let sigma = sigma.map(SigmaSpec::Known).unwrap_or(SigmaSpec::Estimate);
    let mut cfg = GaussianScanConfig::new(sigma, alpha, mc, seed, parse_kernel(kernel)?)
        .map_err(to_py)?
        .with_scan(scan_config(data.inner.len(), policy, min_window)?);
    cfg.one_sided = one_sided;
    let d = &data.inner;
    let inner = py.detach(|| msrank::gaussian_test(d, &cfg)).map_err(to_py)?;
    Ok(PyReport { inner })
}

/// Exact conditional null law of the scan statistic as `(value, probability)`
/// pairs, by enumeration of all sign vectors.
#[pyfunction]
#[pyo3(signature = (data, kernel = "epa", min_window = 2, n_limit = 12))]
fn exact_null(data: &PyDataset, kernel: &str, min_window: usize, n_limit: usize) -> PyResult<Vec<(f64, f64)>> {
    let cfg = scan_config(data.inner.len(), Some("exhaustive"), min_window)?;
    cfg.validate(data.inner.len()).map_err(to_py)?;
    let table = build_coefficients(&data.inner, parse_kernel(kernel)?, &cfg).map_err(to_py)?;
    Ok(exact_null_distribution(&table, n_limit).map_err(to_py)?.atoms)
}

/// Observed scan statistic `T_n`.
#[pyfunction]
#[pyo3(signature = (data, kernel = "epa", policy = None, min_window = 2))]
fn scan_statistic(data: &PyDataset, kernel: &str, policy: Option<&str>, min_window: usize) -> PyResult<f64> {
    let cfg = scan_config(data.inner.len(), policy, min_window)?;
    cfg.validate(data.inner.len()).map_err(to_py)?;
    let table = build_coefficients(&data.inner, parse_kernel(kernel)?, &cfg).map_err(to_py)?;
    Ok(scan(&table, &data.inner.signs()).map_err(to_py)?.t_n)
}

/// Efficiency and detection-boundary constants as a dict.
#[pyfunction]
#[pyo3(signature = (law = "normal:1", beta = 1.0, lipschitz = 1.0, n = 100))]
fn constants<'py>(py: Python<'py>, law: &str, beta: f64, lipschitz: f64, n: u64) -> PyResult<Bound<'py, PyDict>> {
    let law: ErrorLaw = law.parse().map_err(to_py)?;
    let c = TheoryConstants::compute(law, beta, lipschitz, n).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("law", c.law.to_string())?;
    d.set_item("beta", c.beta)?;
    d.set_item("L", c.lipschitz)?;
    d.set_item("n", c.n)?;
    d.set_item("fisher", c.fisher)?;
    d.set_item("l2mass", c.l2mass)?;
    d.set_item("gamma_norm_sq", c.gamma_norm_sq)?;
    d.set_item("d_star_lower", c.d_star_lower)?;
    d.set_item("d_star_upper", c.d_star_upper)?;
    d.set_item("rate", c.rate)?;
    d.set_item("efficiency", c.efficiency)?;
    Ok(d)
}

/// Midranks of `values` (ties share the average rank).
#[pyfunction]
#[pyo3(name = "local_midranks")]
fn py_local_midranks(values: Vec<f64>) -> Vec<f64> {
    local_midranks(&values)
}

/// `sqrt(2 log(n / (k - j)))` for a window `j < k < n` (0-based).
#[pyfunction]
fn penalty(n: usize, j: usize, k: usize) -> PyResult<f64> {
    msrank::penalty(n, j, k).map_err(to_py)
}

/// `sum c_i s_i / sqrt(sum c_i^2)`, or 0 for an all-zero window.
#[pyfunction]
#[pyo3(name = "local_statistic")]
fn py_local_statistic(coeffs: Vec<f64>, signs: Vec<f64>) -> PyResult<f64> {
    local_statistic(&coeffs, &signs).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "msrank")]
fn msrank_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", msrank::VERSION)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_test, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_test, m)?)?;
    m.add_function(wrap_pyfunction!(exact_null, m)?)?;
    m.add_function(wrap_pyfunction!(scan_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(py_local_midranks, m)?)?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(py_local_statistic, m)?)?;
    Ok(())
}
