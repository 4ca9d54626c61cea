//! Synthetic data and Monte Carlo experiments: level, power, and the
//! robustness comparison against the Gaussian reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{run_test, TestConfig};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianReference, GaussianScanConfig};
use crate::kernels::gamma_beta;
use crate::ranks::Dataset;
use crate::rng::{derive_seed, stream, Domain};
use crate::theory::{rate_rho, ErrorLaw};

/// Design density `h` on `[0, 1]`; points are placed at `H^{-1}(i/n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DesignDensity {
    Uniform,
    /// `h(x) = (1 + c x) / (1 + c/2)`, requires `c > -1`.
    Linear { c: f64 },
    /// Quantile function tabulated at `u = i / (m - 1)`, linearly interpolated.
    CustomQuantile { values: Vec<f64> },
}

impl DesignDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            DesignDensity::Uniform => Ok(()),
            DesignDensity::Linear { c } if *c > -1.0 && c.is_finite() => Ok(()),
            DesignDensity::Linear { c } => Err(Error::InvalidParameter(format!(
                "linear design density needs c > -1, got {c}"
            ))),
            DesignDensity::CustomQuantile { values } => {
                if values.len() < 2 || values.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParameter(
                        "custom quantile table needs at least 2 strictly increasing values".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            DesignDensity::Uniform => u,
            DesignDensity::Linear { c } => {
                if c.abs() < 1e-12 {
                    u
                } else {
                    // c/2 x^2 + x = u (1 + c/2)
                    let rhs = u * (1.0 + c / 2.0);
                    2.0 * rhs / (1.0 + (1.0 + 2.0 * c * rhs).sqrt())
                }
            }
            DesignDensity::CustomQuantile { values } => {
                let pos = u.clamp(0.0, 1.0) * (values.len() - 1) as f64;
                let i = (pos.floor() as usize).min(values.len() - 2);
                let frac = pos - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }

    /// Density `h(x)`.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            DesignDensity::Uniform => 1.0,
            DesignDensity::Linear { c } => (1.0 + c * x) / (1.0 + c / 2.0),
            DesignDensity::CustomQuantile { values } => {
                // reciprocal slope of the interpolated quantile function
                let m = values.len() - 1;
                let i = values.partition_point(|&v| v <= x).clamp(1, m);
                1.0 / ((values[i] - values[i - 1]) * m as f64)
            }
        }
    }
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number {v:?} in {what}")))
        })
        .collect()
}

impl std::str::FromStr for DesignDensity {
    type Err = Error;

    /// `uniform` or `linear:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        let dd = match s.trim().split_once(':') {
            None if s.trim() == "uniform" => DesignDensity::Uniform,
            Some(("linear", c)) => DesignDensity::Linear { c: parse_floats(c, "linear design")?[0] },
            _ => return Err(Error::InvalidParameter(format!("unknown design density {s:?}"))),
        };
        dd.validate()?;
        Ok(dd)
    }
}

/// `X_i = H^{-1}(i/n)`, `i = 1..=n`.
pub fn gen_design(n: usize, dd: &DesignDensity) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    dd.validate()?;
    Ok((1..=n).map(|i| dd.quantile(i as f64 / n as f64)).collect())
}

/// One `gamma_beta` bump: `amplitude * gamma_beta((x - center) / halfwidth)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub halfwidth: f64,
    pub beta: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * gamma_beta(self.beta, (x - self.center) / self.halfwidth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalShape {
    Zero,
    Constant { a: f64 },
    Bumps { bumps: Vec<Bump> },
    /// One value per design point.
    CustomSamples { values: Vec<f64> },
}

impl std::str::FromStr for SignalShape {
    type Err = Error;

    /// `zero`, `constant[:a]`, `bump:<center>,<halfwidth>,<beta>[,<amplitude>]`,
    /// or `two-bumps`. Amplitudes default to 1.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "zero" => Ok(SignalShape::Zero),
            "constant" => Ok(SignalShape::Constant {
                a: if args.is_empty() { 1.0 } else { parse_floats(args, "constant signal")?[0] },
            }),
            "bump" => {
                let v = parse_floats(args, "bump signal")?;
                if !(3..=4).contains(&v.len()) {
                    return Err(Error::InvalidParameter("bump needs center,halfwidth,beta[,amplitude]".into()));
                }
                Ok(SignalSpec::bump(v.get(3).copied().unwrap_or(1.0), v[0], v[1], v[2]).shape)
            }
            "two-bumps" => Ok(SignalSpec::two_bumps(1.0).shape),
            _ => Err(Error::InvalidParameter(format!("unknown signal {s:?}"))),
        }
    }
}

/// Regression function under the alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub shape: SignalShape,
    /// Divide by `sqrt(h(x))`, so the signal lies in the design-adapted class.
    #[serde(default)]
    pub design_coupled: bool,
}

impl SignalSpec {
    pub fn zero() -> Self {
        SignalSpec { shape: SignalShape::Zero, design_coupled: false }
    }

    pub fn constant(a: f64) -> Self {
        SignalSpec { shape: SignalShape::Constant { a }, design_coupled: false }
    }

    pub fn bump(amplitude: f64, center: f64, halfwidth: f64, beta: f64) -> Self {
        SignalSpec {
            shape: SignalShape::Bumps { bumps: vec![Bump { amplitude, center, halfwidth, beta }] },
            design_coupled: false,
        }
    }

    /// Two bumps of opposite sign, the default illustrative alternative.
    pub fn two_bumps(amplitude: f64) -> Self {
        SignalSpec {
            shape: SignalShape::Bumps {
                bumps: vec![
                    Bump { amplitude, center: 0.3, halfwidth: 0.1, beta: 1.0 },
                    Bump { amplitude: -amplitude, center: 0.75, halfwidth: 0.05, beta: 0.5 },
                ],
            },
            design_coupled: false,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let shape = match &self.shape {
            SignalShape::Zero => SignalShape::Zero,
            SignalShape::Constant { a } => SignalShape::Constant { a: a * factor },
            SignalShape::Bumps { bumps } => SignalShape::Bumps {
                bumps: bumps.iter().map(|b| Bump { amplitude: b.amplitude * factor, ..*b }).collect(),
            },
            SignalShape::CustomSamples { values } => {
                SignalShape::CustomSamples { values: values.iter().map(|v| v * factor).collect() }
            }
        };
        SignalSpec { shape, design_coupled: self.design_coupled }
    }

    /// Signal values at the design points.
    pub fn values(&self, x: &[f64], dd: &DesignDensity) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match &self.shape {
            SignalShape::Zero => vec![0.0; x.len()],
            SignalShape::Constant { a } => vec![*a; x.len()],
            SignalShape::Bumps { bumps } => {
                if bumps.iter().any(|b| !(b.halfwidth > 0.0) || !(b.beta > 0.0 && b.beta <= 1.0)) {
                    return Err(Error::InvalidParameter("bumps need halfwidth > 0 and beta in (0, 1]".into()));
                }
                x.iter().map(|&xi| bumps.iter().map(|b| b.eval(xi)).sum()).collect()
            }
            SignalShape::CustomSamples { values } => {
                if values.len() != x.len() {
                    return Err(Error::InvalidInput(format!(
                        "custom signal has {} values for {} design points",
                        values.len(),
                        x.len()
                    )));
                }
                values.clone()
            }
        };
        Ok(if self.design_coupled {
            raw.iter().zip(x).map(|(v, &xi)| v / dd.density(xi).sqrt()).collect()
        } else {
            raw
        })
    }
}

/// Noise scale as a function of the design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScaleProfile {
    Constant,
    /// `sigma(x) = a + b x`.
    Linear { a: f64, b: f64 },
    CustomSamples { values: Vec<f64> },
}

impl std::str::FromStr for ScaleProfile {
    type Err = Error;

    /// `constant` or `linear:<a>,<b>` for `sigma(x) = a + b x`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            None if s.trim() == "constant" => Ok(ScaleProfile::Constant),
            Some(("linear", args)) => {
                let v = parse_floats(args, "linear scale profile")?;
                if v.len() != 2 {
                    return Err(Error::InvalidParameter("linear profile needs a,b".into()));
                }
                Ok(ScaleProfile::Linear { a: v[0], b: v[1] })
            }
            _ => Err(Error::InvalidParameter(format!("unknown scale profile {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub law: ErrorLaw,
    #[serde(default = "constant_profile")]
    pub hetero: ScaleProfile,
}

fn constant_profile() -> ScaleProfile {
    ScaleProfile::Constant
}

impl NoiseSpec {
    pub fn iid(law: ErrorLaw) -> Self {
        NoiseSpec { law, hetero: ScaleProfile::Constant }
    }

    pub fn heteroscedastic(law: ErrorLaw, hetero: ScaleProfile) -> Self {
        NoiseSpec { law, hetero }
    }

    pub fn scales(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s: Vec<f64> = match &self.hetero {
            ScaleProfile::Constant => vec![1.0; x.len()],
            ScaleProfile::Linear { a, b } => x.iter().map(|xi| a + b * xi).collect(),
            ScaleProfile::CustomSamples { values } => {
                if values.len() != x.len() {
                    return Err(Error::InvalidInput("scale profile length differs from n".into()));
                }
                values.clone()
            }
        };
        if s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("noise scale must be positive everywhere".into()));
        }
        Ok(s)
    }
}

/// `y_i = l(x_i) + sigma(x_i) eps_i`, reproducible from `seed`.
pub fn gen_dataset(
    n: usize,
    dd: &DesignDensity,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    gen_dataset_indexed(n, dd, signal, noise, seed, 0)
}

/// Dataset number `index` of the experiment keyed by `seed`.
pub fn gen_dataset_indexed(
    n: usize,
    dd: &DesignDensity,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    seed: u64,
    index: u64,
) -> Result<Dataset> {
    noise.law.validate()?;
    let x = gen_design(n, dd)?;
    let l = signal.values(&x, dd)?;
    let s = noise.scales(&x)?;
    let mut rng = stream(seed, Domain::Data, index);
    let y = l.iter().zip(&s).map(|(li, si)| li + si * noise.law.sample(&mut rng)).collect();
    Dataset::new(x, y)
}

/// A rejection frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub rejections: usize,
    pub datasets: usize,
    pub rate: f64,
    pub se: f64,
}

impl Rate {
    pub fn from_count(rejections: usize, datasets: usize) -> Self {
        let rate = rejections as f64 / datasets as f64;
        Rate { rejections, datasets, rate, se: (rate * (1.0 - rate) / datasets as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub datasets: usize,
    pub n: usize,
    pub design: DesignDensity,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl ExperimentSetup {
    pub fn new(datasets: usize, n: usize, noise: NoiseSpec, seed: u64) -> Self {
        ExperimentSetup { datasets, n, design: DesignDensity::Uniform, noise, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.datasets == 0 {
            return Err(Error::InvalidConfig("need at least one dataset".into()));
        }
        if self.n < 2 {
            return Err(Error::TooFewRows(self.n));
        }
        self.design.validate()
    }

    fn dataset(&self, signal: &SignalSpec, index: usize) -> Result<Dataset> {
        gen_dataset_indexed(self.n, &self.design, signal, &self.noise, self.seed, index as u64)
    }
}

/// Rejections of the signed-rank test over the experiment's datasets; the
/// Monte Carlo seed of dataset `i` is derived from `(cfg.seed, i)`.
fn count_rejections(setup: &ExperimentSetup, signal: &SignalSpec, cfg: &TestConfig) -> Result<usize> {
    let rejected: Vec<bool> = (0..setup.datasets)
        .into_par_iter()
        .map(|i| {
            let d = setup.dataset(signal, i)?;
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, Domain::TestSeed, i as u64);
            c.timing = false;
            Ok(run_test(&d, &c)?.reject)
        })
        .collect::<Result<_>>()?;
    Ok(rejected.into_iter().filter(|&r| r).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub setup: ExperimentSetup,
    pub alpha: f64,
    pub replicates: usize,
    pub size: Rate,
}

/// Empirical size under the null (zero signal).
pub fn run_level_experiment(setup: &ExperimentSetup, cfg: &TestConfig) -> Result<LevelResult> {
    setup.validate()?;
    cfg.validate(setup.n)?;
    let hits = count_rejections(setup, &SignalSpec::zero(), cfg)?;
    Ok(LevelResult {
        setup: setup.clone(),
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        size: Rate::from_count(hits, setup.datasets),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub amplitude: f64,
    /// `amplitude / rho_n`.
    pub amplitude_rho: f64,
    pub power: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub setup: ExperimentSetup,
    pub alpha: f64,
    pub replicates: usize,
    pub rho_n: f64,
    pub beta: f64,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    /// Whether each step in amplitude loses at most `slack` standard errors.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.points.windows(2).all(|w| {
            let se = (w[0].power.se.powi(2) + w[1].power.se.powi(2)).sqrt();
            w[1].power.rate + slack * se >= w[0].power.rate
        })
    }
}

/// Rejection rate for `signal.scaled(a)` at each amplitude `a`. Every
/// amplitude reuses the same noise draws.
pub fn run_power_experiment(
    setup: &ExperimentSetup,
    signal: &SignalSpec,
    amplitudes: &[f64],
    beta: f64,
    cfg: &TestConfig,
) -> Result<PowerCurve> {
    setup.validate()?;
    cfg.validate(setup.n)?;
    if amplitudes.is_empty() || amplitudes.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidConfig("amplitude grid must be nonempty and nonnegative".into()));
    }
    let rho_n = rate_rho(setup.n as f64, beta)?;
    let points = amplitudes
        .iter()
        .map(|&a| {
            let hits = count_rejections(setup, &signal.scaled(a), cfg)?;
            Ok(PowerPoint { amplitude: a, amplitude_rho: a / rho_n, power: Rate::from_count(hits, setup.datasets) })
        })
        .collect::<Result<_>>()?;
    Ok(PowerCurve { setup: setup.clone(), alpha: cfg.alpha, replicates: cfg.replicates, rho_n, beta, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub setup: ExperimentSetup,
    pub alpha: f64,
    pub sigma: String,
    pub gaussian_kappa: f64,
    pub signed_rank: Rate,
    pub gaussian: Rate,
    /// Datasets with a nonempty detection set.
    pub signed_rank_false_detections: usize,
    pub gaussian_false_detections: usize,
}

/// Both tests on the same null datasets.
pub fn run_robustness_comparison(
    setup: &ExperimentSetup,
    cfg: &TestConfig,
    gauss_cfg: &GaussianScanConfig,
) -> Result<ComparisonResult> {
    setup.validate()?;
    cfg.validate(setup.n)?;
    if cfg.kernel != gauss_cfg.kernel || cfg.scan != gauss_cfg.scan || cfg.alpha != gauss_cfg.alpha {
        return Err(Error::InvalidConfig("both tests must share kernel, windows and alpha".into()));
    }
    let x = gen_design(setup.n, &setup.design)?;
    let reference = GaussianReference::prepare(&x, gauss_cfg)?;
    let signal = SignalSpec::zero();
    let outcomes: Vec<(bool, bool, bool, bool)> = (0..setup.datasets)
        .into_par_iter()
        .map(|i| {
            let d = setup.dataset(&signal, i)?;
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, Domain::TestSeed, i as u64);
            c.timing = false;
            let sr = run_test(&d, &c)?;
            let g = reference.test(&d)?;
            Ok((sr.reject, !sr.intervals.is_empty(), g.reject, !g.intervals.is_empty()))
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&(bool, bool, bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count();
    Ok(ComparisonResult {
        setup: setup.clone(),
        alpha: cfg.alpha,
        sigma: gauss_cfg.sigma.to_string(),
        gaussian_kappa: reference.kappa(),
        signed_rank: Rate::from_count(count(|o| o.0), setup.datasets),
        gaussian: Rate::from_count(count(|o| o.2), setup.datasets),
        signed_rank_false_detections: count(|o| o.1),
        gaussian_false_detections: count(|o| o.3),
    })
}
