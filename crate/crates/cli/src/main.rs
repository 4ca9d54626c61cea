use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use msrank::calibration::EXACT_LIMIT;
use msrank::report::to_json_string;
use msrank::sim::{
    run_level_experiment, run_power_experiment, run_robustness_comparison, DesignDensity, ExperimentSetup,
    NoiseSpec, ScaleProfile, SignalShape, SignalSpec,
};
use msrank::theory::rate_rho;
use msrank::{
    build_coefficients, emit_report, exact_null_distribution, gaussian_test, load_csv, run_test, scan, svg,
    CsvOptions, Dataset, ErrorLaw, GaussianScanConfig, Kernel, ReportFormat, ScanConfig, SigmaSpec, TestConfig,
    TestReport, TheoryConstants, WindowPolicy,
};

/// Multiscale signed-rank goodness-of-fit test for nonparametric regression.
#[derive(Parser, Debug)]
#[command(name = "msrank", version, about, long_about = None)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object supplying defaults for flags not given on the command line.
    /// Keys are the long flag names, e.g. {"alpha": 0.05, "law": ["t:3"]}.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the signed-rank test on a two-column CSV file.
    Test(TestArgs),
    /// Run the Gaussian-calibrated reference test on a CSV file.
    GaussTest(GaussArgs),
    /// Efficiency and detection-boundary constants for an error law.
    Constants(ConstantsArgs),
    /// Empirical size under the null for one or more error laws.
    LevelSim(LevelArgs),
    /// Rejection rate over a grid of signal amplitudes.
    PowerSim(PowerArgs),
    /// Signed-rank test against the Gaussian reference on heavy-tailed null data.
    CompareSim(CompareArgs),
    /// Exact conditional null distribution by enumeration (n <= 12 by default).
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
struct ScanArgs {
    /// Kernel: epa, rect or holder:<beta> with 0 < beta <= 1.
    #[arg(long)]
    kernel: Option<Kernel>,
    /// Smallest scanned window size (number of points).
    #[arg(long)]
    min_window: Option<usize>,
    /// exhaustive or dyadic (default: exhaustive up to n = 500).
    #[arg(long)]
    policy: Option<WindowPolicy>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Monte Carlo replicates B.
    #[arg(long)]
    mc: Option<usize>,
    /// Random seed.
    #[arg(long, env = "MSRANK_SEED")]
    seed: Option<u64>,
    /// Report only upward deviations.
    #[arg(long)]
    one_sided: bool,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV file with columns x,y.
    input: PathBuf,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// json or table.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also render data and minimal intervals as SVG.
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    /// Include wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scan: ScanArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GaussArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scan: ScanArgs,
    /// Noise standard deviation, or "estimate".
    #[arg(long)]
    sigma: Option<SigmaSpec>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// normal:<sigma>, laplace:<lambda>, logistic:<scale> or t:<nu>.
    #[arg(long)]
    law: Option<ErrorLaw>,
    /// Smoothness of the alternative class.
    #[arg(long)]
    beta: Option<f64>,
    /// Radius of the alternative class.
    #[arg(long = "L", value_name = "L")]
    lipschitz: Option<f64>,
    /// Sample size for the rate.
    #[arg(long)]
    n: Option<u64>,
    /// json or table.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Sample size per dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Number of simulated datasets.
    #[arg(long)]
    datasets: Option<usize>,
    /// Design density: uniform or linear:<c>.
    #[arg(long)]
    design: Option<String>,
    /// Noise scale profile: constant or linear:<a>,<b>.
    #[arg(long)]
    hetero: Option<String>,
    /// Write a CSV table with one row per cell.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LevelArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    scan: ScanArgs,
    /// Error law; repeat for several laws.
    #[arg(long)]
    law: Vec<ErrorLaw>,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    scan: ScanArgs,
    #[arg(long)]
    law: Option<ErrorLaw>,
    /// Signal: zero, constant[:a], bump:<c>,<w>,<beta>[,<a>] or two-bumps.
    #[arg(long)]
    signal: Option<String>,
    /// Comma-separated amplitude grid.
    #[arg(long, value_delimiter = ',')]
    amplitudes: Vec<f64>,
    /// Read amplitudes as multiples of rho_n.
    #[arg(long)]
    rho_units: bool,
    /// Smoothness used for rho_n.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    scan: ScanArgs,
    #[arg(long)]
    law: Option<ErrorLaw>,
    /// Scale for the Gaussian reference (default: the law's standard deviation).
    #[arg(long)]
    sigma: Option<SigmaSpec>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scan: ScanArgs,
    /// Largest n to enumerate.
    #[arg(long)]
    n_limit: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    threads: Option<usize>,
    kernel: Option<Kernel>,
    min_window: Option<usize>,
    policy: Option<WindowPolicy>,
    alpha: Option<f64>,
    mc: Option<usize>,
    seed: Option<u64>,
    one_sided: Option<bool>,
    header: Option<bool>,
    sigma: Option<SigmaSpec>,
    law: Option<Vec<ErrorLaw>>,
    beta: Option<f64>,
    #[serde(rename = "L")]
    lipschitz: Option<f64>,
    n: Option<usize>,
    datasets: Option<usize>,
    design: Option<String>,
    hetero: Option<String>,
    signal: Option<String>,
    amplitudes: Option<Vec<f64>>,
    rho_units: Option<bool>,
    n_limit: Option<usize>,
}

enum CliError {
    Usage(String),
    Lib(msrank::Error),
}

impl From<msrank::Error> for CliError {
    fn from(e: msrank::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_REPLICATES: usize = 999;

fn parse<T: FromStr<Err = msrank::Error>>(s: &str) -> CliResult<T> {
    Ok(s.parse()?)
}

fn first_law(flag: Option<ErrorLaw>, file: &FileConfig, default: ErrorLaw) -> ErrorLaw {
    flag.or_else(|| file.law.as_ref().and_then(|l| l.first().copied())).unwrap_or(default)
}

impl ScanArgs {
    fn scan_config(&self, file: &FileConfig, n: usize) -> ScanConfig {
        ScanConfig {
            policy: self.policy.or(file.policy).unwrap_or(WindowPolicy::auto(n)),
            min_window: self.min_window.or(file.min_window).unwrap_or(2),
            ..ScanConfig::default()
        }
    }

    fn kernel(&self, file: &FileConfig) -> Kernel {
        self.kernel.or(file.kernel).unwrap_or(Kernel::Epanechnikov)
    }

    fn alpha(&self, file: &FileConfig) -> f64 {
        self.alpha.or(file.alpha).unwrap_or(0.1)
    }

    fn replicates(&self, file: &FileConfig) -> usize {
        self.mc.or(file.mc).unwrap_or(DEFAULT_REPLICATES)
    }

    fn seed(&self, file: &FileConfig) -> u64 {
        self.seed.or(file.seed).unwrap_or(DEFAULT_SEED)
    }

    fn one_sided(&self, file: &FileConfig) -> bool {
        self.one_sided || file.one_sided.unwrap_or(false)
    }

    fn test_config(&self, file: &FileConfig, n: usize) -> CliResult<TestConfig> {
        let mut cfg = TestConfig::new(self.alpha(file), self.replicates(file), self.seed(file), self.kernel(file))?
            .with_scan(self.scan_config(file, n));
        cfg.one_sided = self.one_sided(file);
        Ok(cfg)
    }

    fn gauss_config(&self, file: &FileConfig, n: usize, sigma: SigmaSpec) -> CliResult<GaussianScanConfig> {
        let mut cfg =
            GaussianScanConfig::new(sigma, self.alpha(file), self.replicates(file), self.seed(file), self.kernel(file))?
                .with_scan(self.scan_config(file, n));
        cfg.one_sided = self.one_sided(file);
        Ok(cfg)
    }
}

impl InputArgs {
    fn load(&self, file: &FileConfig) -> CliResult<Dataset> {
        let header = self.header || file.header.unwrap_or(false);
        Ok(load_csv(&self.input, CsvOptions { header })?)
    }
}

impl SimArgs {
    fn setup(&self, file: &FileConfig, law: ErrorLaw, seed: u64) -> CliResult<ExperimentSetup> {
        let n = self.n.or(file.n).unwrap_or(100);
        let datasets = self.datasets.or(file.datasets).unwrap_or(500);
        let hetero = match self.hetero.as_deref().or(file.hetero.as_deref()) {
            Some(s) => parse::<ScaleProfile>(s)?,
            None => ScaleProfile::Constant,
        };
        let mut setup = ExperimentSetup::new(datasets, n, NoiseSpec::heteroscedastic(law, hetero), seed);
        if let Some(s) = self.design.as_deref().or(file.design.as_deref()) {
            setup.design = parse::<DesignDensity>(s)?;
        }
        Ok(setup)
    }

    fn n(&self, file: &FileConfig) -> usize {
        self.n.or(file.n).unwrap_or(100)
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Lib(e.into())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Lib(e.into()))
        }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn write_csv_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Lib(msrank::Error::InvalidInput(e.to_string())))?;
    let mut write = || -> csv::Result<()> {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| CliError::Lib(msrank::Error::InvalidInput(e.to_string())))
}

fn emit(report: &TestReport, d: &Dataset, output: &OutputArgs) -> CliResult<()> {
    if let Some(p) = &output.svg {
        svg::write_svg(d, report, p)?;
    }
    let mut bytes = emit_report(report, output.format)?;
    if output.format == ReportFormat::Json {
        bytes.push(b'\n');
    }
    write_output(output.out.as_deref(), &bytes)
}

fn cmd_test(a: &TestArgs, file: &FileConfig) -> CliResult<()> {
    let d = a.input.load(file)?;
    let mut cfg = a.scan.test_config(file, d.len())?;
    cfg.timing = a.output.timing;
    let report = run_test(&d, &cfg)?;
    emit(&report, &d, &a.output)
}

fn cmd_gauss(a: &GaussArgs, file: &FileConfig) -> CliResult<()> {
    let d = a.input.load(file)?;
    let sigma = a.sigma.or(file.sigma).unwrap_or(SigmaSpec::Estimate);
    let mut cfg = a.scan.gauss_config(file, d.len(), sigma)?;
    cfg.timing = a.output.timing;
    let report = gaussian_test(&d, &cfg)?;
    emit(&report, &d, &a.output)
}

fn cmd_constants(a: &ConstantsArgs, file: &FileConfig) -> CliResult<()> {
    let law = first_law(a.law, file, ErrorLaw::Normal { sigma: 1.0 });
    let c = TheoryConstants::compute(
        law,
        a.beta.or(file.beta).unwrap_or(1.0),
        a.lipschitz.or(file.lipschitz).unwrap_or(1.0),
        a.n.or(file.n.map(|n| n as u64)).unwrap_or(100),
    )?;
    let bytes = match a.format {
        ReportFormat::Json => json_bytes(&c)?,
        ReportFormat::Table => {
            let rows = [
                ("law", c.law.to_string()),
                ("beta", c.beta.to_string()),
                ("L", c.lipschitz.to_string()),
                ("n", c.n.to_string()),
                ("fisher information", format!("{:.10}", c.fisher)),
                ("integral of f^2", format!("{:.10}", c.l2mass)),
                ("||gamma_beta||^2", format!("{:.10}", c.gamma_norm_sq)),
                ("d_* (optimal)", format!("{:.10}", c.d_star_lower)),
                ("d^* (signed-rank)", format!("{:.10}", c.d_star_upper)),
                ("rho_n", format!("{:.10}", c.rate)),
                ("efficiency", format!("{:.10}", c.efficiency)),
            ];
            rows.iter().map(|(k, v)| format!("{k:<20} {v}\n")).collect::<String>().into_bytes()
        }
    };
    write_output(None, &bytes)
}

fn cmd_level(a: &LevelArgs, file: &FileConfig) -> CliResult<()> {
    let laws = if !a.law.is_empty() {
        a.law.clone()
    } else {
        file.law.clone().unwrap_or_else(|| vec![ErrorLaw::Normal { sigma: 1.0 }])
    };
    let cfg = a.scan.test_config(file, a.sim.n(file))?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for law in laws {
        let setup = a.sim.setup(file, law, cfg.seed)?;
        let r = run_level_experiment(&setup, &cfg)?;
        rows.push(vec![
            law.to_string(),
            profile_label(&setup.noise.hetero),
            setup.n.to_string(),
            setup.datasets.to_string(),
            r.alpha.to_string(),
            r.replicates.to_string(),
            r.size.rejections.to_string(),
            r.size.rate.to_string(),
            r.size.se.to_string(),
        ]);
        results.push(r);
    }
    if let Some(p) = &a.sim.csv {
        write_csv_table(p, &["law", "hetero", "n", "datasets", "alpha", "replicates", "rejections", "rate", "se"], &rows)?;
    }
    write_output(a.sim.out.as_deref(), &json_bytes(&results)?)
}

fn profile_label(p: &ScaleProfile) -> String {
    match p {
        ScaleProfile::Constant => "constant".into(),
        ScaleProfile::Linear { a, b } => format!("linear:{a},{b}"),
        ScaleProfile::CustomSamples { .. } => "custom".into(),
    }
}

fn cmd_power(a: &PowerArgs, file: &FileConfig) -> CliResult<()> {
    let law = first_law(a.law, file, ErrorLaw::Normal { sigma: 1.0 });
    let cfg = a.scan.test_config(file, a.sim.n(file))?;
    let setup = a.sim.setup(file, law, cfg.seed)?;
    let shape = parse::<SignalShape>(a.signal.as_deref().or(file.signal.as_deref()).unwrap_or("constant"))?;
    let signal = SignalSpec { shape, design_coupled: false };
    let beta = a.beta.or(file.beta).unwrap_or(1.0);
    let mut amplitudes = if !a.amplitudes.is_empty() {
        a.amplitudes.clone()
    } else {
        file.amplitudes.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0])
    };
    let rho_units = a.rho_units || file.rho_units.unwrap_or(false);
    if rho_units {
        let rho = rate_rho(setup.n as f64, beta)?;
        amplitudes.iter_mut().for_each(|v| *v *= rho);
    }
    let curve = run_power_experiment(&setup, &signal, &amplitudes, beta, &cfg)?;
    if let Some(p) = &a.sim.csv {
        let rows: Vec<Vec<String>> = curve
            .points
            .iter()
            .map(|pt| {
                vec![
                    pt.amplitude.to_string(),
                    pt.amplitude_rho.to_string(),
                    setup.datasets.to_string(),
                    pt.power.rejections.to_string(),
                    pt.power.rate.to_string(),
                    pt.power.se.to_string(),
                ]
            })
            .collect();
        write_csv_table(p, &["amplitude", "amplitude_rho", "datasets", "rejections", "rate", "se"], &rows)?;
    }
    write_output(a.sim.out.as_deref(), &json_bytes(&curve)?)
}

fn cmd_compare(a: &CompareArgs, file: &FileConfig) -> CliResult<()> {
    let law = first_law(a.law, file, ErrorLaw::StudentT { nu: 3.0 });
    let n = a.sim.n(file);
    let cfg = a.scan.test_config(file, n)?;
    let sigma = match a.sigma.or(file.sigma) {
        Some(s) => s,
        None => law.std_dev().map(SigmaSpec::Known).unwrap_or(SigmaSpec::Estimate),
    };
    let gauss = a.scan.gauss_config(file, n, sigma)?;
    let setup = a.sim.setup(file, law, cfg.seed)?;
    let r = run_robustness_comparison(&setup, &cfg, &gauss)?;
    if let Some(p) = &a.sim.csv {
        let row = |method: &str, rate: &msrank::sim::Rate, fd: usize| {
            vec![
                method.to_string(),
                law.to_string(),
                setup.datasets.to_string(),
                rate.rejections.to_string(),
                rate.rate.to_string(),
                rate.se.to_string(),
                fd.to_string(),
            ]
        };
        let rows = vec![
            row("signed-rank", &r.signed_rank, r.signed_rank_false_detections),
            row("gaussian", &r.gaussian, r.gaussian_false_detections),
        ];
        write_csv_table(p, &["method", "law", "datasets", "rejections", "rate", "se", "false_detections"], &rows)?;
    }
    write_output(a.sim.out.as_deref(), &json_bytes(&r)?)
}

#[derive(Serialize)]
struct OracleResult {
    n: usize,
    alpha: f64,
    kernel: Kernel,
    t_n: f64,
    kappa: f64,
    p_value: f64,
    reject: bool,
    /// `(value, probability)` pairs in increasing order.
    atoms: Vec<(f64, f64)>,
}

fn cmd_oracle(a: &OracleArgs, file: &FileConfig) -> CliResult<()> {
    let d = a.input.load(file)?;
    let alpha = a.scan.alpha(file);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Lib(msrank::Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}"))));
    }
    let kernel = a.scan.kernel(file);
    let scan_cfg = a.scan.scan_config(file, d.len());
    scan_cfg.validate(d.len())?;
    let table = build_coefficients(&d, kernel, &scan_cfg)?;
    let dist = exact_null_distribution(&table, a.n_limit.or(file.n_limit).unwrap_or(EXACT_LIMIT))?;
    let t_n = scan(&table, &d.signs())?.t_n;
    let tol = 1e-12 * t_n.abs().max(1.0);
    let mut acc = 0.0;
    let mut kappa = f64::INFINITY;
    for &(v, p) in &dist.atoms {
        acc += p;
        if acc >= 1.0 - alpha - 1e-12 {
            kappa = v;
            break;
        }
    }
    let p_value = dist.atoms.iter().filter(|a| a.0 >= t_n - tol).map(|a| a.1).sum();
    let result = OracleResult {
        n: d.len(),
        alpha,
        kernel,
        t_n,
        kappa,
        p_value,
        reject: t_n > kappa + tol,
        atoms: dist.atoms,
    };
    write_output(a.out.as_deref(), &json_bytes(&result)?)
}

fn load_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    let file = load_file_config(cli.config.as_deref())?;
    if let Some(k) = cli.threads.or(file.threads) {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Test(a) => cmd_test(a, &file),
        Command::GaussTest(a) => cmd_gauss(a, &file),
        Command::Constants(a) => cmd_constants(a, &file),
        Command::LevelSim(a) => cmd_level(a, &file),
        Command::PowerSim(a) => cmd_power(a, &file),
        Command::CompareSim(a) => cmd_compare(a, &file),
        Command::Oracle(a) => cmd_oracle(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
