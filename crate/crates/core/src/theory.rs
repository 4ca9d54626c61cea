//! Closed-form constants of the minimax theory for symmetric error laws:
//! Fisher information, the L2 mass of the density, the detection
//! boundaries of the optimal and the signed-rank test, and the relative
//! efficiency `12 (int f^2)^2 / I(f)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::gamma_norm_sq;

/// Absolute tolerance of the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-9;

/// Symmetric error laws with their scale (or shape) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ErrorLaw {
    Normal { sigma: f64 },
    /// Density `lambda/2 exp(-lambda |x|)`.
    Laplace { lambda: f64 },
    /// Density `exp(-x/s) / (s (1 + exp(-x/s))^2)`.
    Logistic { scale: f64 },
    /// Unit-scale Student t with `nu` degrees of freedom.
    StudentT { nu: f64 },
}

impl ErrorLaw {
    pub fn validate(&self) -> Result<()> {
        let (name, v, ok) = match *self {
            ErrorLaw::Normal { sigma } => ("sigma", sigma, sigma > 0.0),
            ErrorLaw::Laplace { lambda } => ("lambda", lambda, lambda > 0.0),
            ErrorLaw::Logistic { scale } => ("scale", scale, scale > 0.0),
            ErrorLaw::StudentT { nu } => ("nu", nu, nu >= 1.0),
        };
        if ok && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} = {v} is out of range for {self}")))
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            ErrorLaw::Normal { sigma } => (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()),
            ErrorLaw::Laplace { lambda } => lambda / 2.0 * (-lambda * x.abs()).exp(),
            ErrorLaw::Logistic { scale } => {
                let e = (-x.abs() / scale).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            ErrorLaw::StudentT { nu } => {
                let log_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln();
                (log_c - (nu + 1.0) / 2.0 * (x * x / nu).ln_1p()).exp()
            }
        }
    }

    /// `f'(x) / f(x)`.
    pub fn score(&self, x: f64) -> f64 {
        match *self {
            ErrorLaw::Normal { sigma } => -x / (sigma * sigma),
            ErrorLaw::Laplace { lambda } => -lambda * x.signum(),
            ErrorLaw::Logistic { scale } => -(x / (2.0 * scale)).tanh() / scale,
            ErrorLaw::StudentT { nu } => -(nu + 1.0) * x / (nu + x * x),
        }
    }

    /// Standard deviation, if finite.
    pub fn std_dev(&self) -> Option<f64> {
        match *self {
            ErrorLaw::Normal { sigma } => Some(sigma),
            ErrorLaw::Laplace { lambda } => Some(2f64.sqrt() / lambda),
            ErrorLaw::Logistic { scale } => Some(scale * PI / 3f64.sqrt()),
            ErrorLaw::StudentT { nu } if nu > 2.0 => Some((nu / (nu - 2.0)).sqrt()),
            ErrorLaw::StudentT { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ErrorLaw::Normal { sigma } => Normal::new(0.0, sigma).expect("validated sigma").sample(rng),
            ErrorLaw::Laplace { lambda } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / lambda
            }
            ErrorLaw::Logistic { scale } => {
                let u: f64 = rng.random();
                scale * (u / (1.0 - u)).ln()
            }
            ErrorLaw::StudentT { nu } => StudentT::new(nu).expect("validated nu").sample(rng),
        }
    }

    /// Half-width beyond which the density carries less than `1e-12` mass,
    /// for the laws with exponential tails.
    fn exp_tail_cutoff(&self) -> Option<f64> {
        match *self {
            ErrorLaw::Normal { sigma } => Some(7.5 * sigma),
            ErrorLaw::Laplace { lambda } => Some(28.0 / lambda),
            ErrorLaw::Logistic { scale } => Some(30.0 * scale),
            ErrorLaw::StudentT { .. } => None,
        }
    }

    /// `int_R g(x) dx` for an even integrand `g` of this law.
    fn integrate_even<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        match self.exp_tail_cutoff() {
            Some(t) => 2.0 * adaptive_simpson(&g, 0.0, t, QUAD_TOL / 2.0),
            None => {
                // polynomial tails: [0, 1] directly, [1, inf) through x = 1/u
                let head = adaptive_simpson(&g, 0.0, 1.0, QUAD_TOL / 4.0);
                let tail = adaptive_simpson(
                    &|u: f64| if u <= 0.0 { 0.0 } else { g(1.0 / u) / (u * u) },
                    0.0,
                    1.0,
                    QUAD_TOL / 4.0,
                );
                2.0 * (head + tail)
            }
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorLaw::Normal { sigma } => write!(f, "normal:{sigma}"),
            ErrorLaw::Laplace { lambda } => write!(f, "laplace:{lambda}"),
            ErrorLaw::Logistic { scale } => write!(f, "logistic:{scale}"),
            ErrorLaw::StudentT { nu } => write!(f, "t:{nu}"),
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    /// `normal[:sigma]`, `laplace[:lambda]`, `logistic[:s]`, `t:<nu>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad law parameter in {s:?}")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let law = match name {
            "normal" | "gauss" | "gaussian" => ErrorLaw::Normal { sigma: param.unwrap_or(1.0) },
            "laplace" => ErrorLaw::Laplace { lambda: param.unwrap_or(1.0) },
            "logistic" => ErrorLaw::Logistic { scale: param.unwrap_or(1.0) },
            "t" | "student" | "student_t" => ErrorLaw::StudentT {
                nu: param.ok_or_else(|| Error::InvalidParameter("student t needs degrees of freedom".into()))?,
            },
            other => return Err(Error::InvalidParameter(format!("unknown error law {other:?}"))),
        };
        law.validate()?;
        Ok(law)
    }
}

impl TryFrom<String> for ErrorLaw {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ErrorLaw> for String {
    fn from(l: ErrorLaw) -> String {
        l.to_string()
    }
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    // start from a few panels so narrow peaks near an endpoint are not missed
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    let mut fl = fa;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let hi = if p + 1 == panels { b } else { lo + h };
        let fr = if p + 1 == panels { fb } else { f(hi) };
        let fm = f(0.5 * (lo + hi));
        let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fr);
        total += step(f, lo, hi, fl, fm, fr, whole, tol / panels as f64, 48);
        fl = fr;
    }
    total
}

/// `I(f) = int (f'/f)^2 f`.
pub fn fisher_information(law: &ErrorLaw) -> Result<f64> {
    law.validate()?;
    Ok(match *law {
        ErrorLaw::Normal { sigma } => 1.0 / (sigma * sigma),
        ErrorLaw::Laplace { lambda } => lambda * lambda,
        ErrorLaw::Logistic { scale } => 1.0 / (3.0 * scale * scale),
        ErrorLaw::StudentT { nu } => {
            if nu <= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "Fisher information of t:{nu} is only computed for nu > 1"
                )));
            }
            law.integrate_even(|x| {
                let s = law.score(x);
                s * s * law.density(x)
            })
        }
    })
}

/// `int f^2`.
pub fn density_l2(law: &ErrorLaw) -> Result<f64> {
    law.validate()?;
    Ok(match *law {
        ErrorLaw::Normal { sigma } => 1.0 / (2.0 * sigma * PI.sqrt()),
        ErrorLaw::Laplace { lambda } => lambda / 4.0,
        ErrorLaw::Logistic { scale } => 1.0 / (6.0 * scale),
        ErrorLaw::StudentT { .. } => law.integrate_even(|x| law.density(x).powi(2)),
    })
}

/// Quadrature values of `I(f)` and `int f^2`, bypassing the closed forms.
pub fn quadrature_constants(law: &ErrorLaw) -> Result<(f64, f64)> {
    law.validate()?;
    let fisher = law.integrate_even(|x| {
        let s = law.score(x);
        s * s * law.density(x)
    });
    let l2 = law.integrate_even(|x| law.density(x).powi(2));
    Ok((fisher, l2))
}

/// `12 (int f^2)^2 / I(f)`.
pub fn efficiency_ratio(law: &ErrorLaw) -> Result<f64> {
    let l2 = density_l2(law)?;
    Ok(12.0 * l2 * l2 / fisher_information(law)?)
}

fn check_smoothness(beta: f64, lipschitz: f64) -> Result<()> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {lipschitz}")));
    }
    gamma_norm_sq(beta).map(|_| ())
}

/// `(d_*, d^*)`: the lower detection boundary (any test) and the boundary
/// attained by the signed-rank test with the optimal kernel.
pub fn detection_constants(beta: f64, lipschitz: f64, law: &ErrorLaw) -> Result<(f64, f64)> {
    check_smoothness(beta, lipschitz)?;
    let g = gamma_norm_sq(beta)?;
    let exponent = beta / (2.0 * beta + 1.0);
    let num = 2.0 * lipschitz.powf(1.0 / beta);
    let boundary = |info: f64| (num / ((2.0 * beta + 1.0) * info * g)).powf(exponent);
    let l2 = density_l2(law)?;
    Ok((boundary(fisher_information(law)?), boundary(12.0 * l2 * l2)))
}

/// `rho_n = (log n / n)^(beta / (2 beta + 1))`.
pub fn rate_rho(n: f64, beta: f64) -> Result<f64> {
    if !(n > 1.0 && n.is_finite()) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("rate needs n > 1 and beta > 0, got n = {n}, beta = {beta}")));
    }
    Ok((n.ln() / n).powf(beta / (2.0 * beta + 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub law: ErrorLaw,
    pub beta: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub n: u64,
    pub fisher: f64,
    pub l2mass: f64,
    pub gamma_norm_sq: f64,
    pub d_star_lower: f64,
    pub d_star_upper: f64,
    pub rate: f64,
    pub efficiency: f64,
}

impl TheoryConstants {
    pub fn compute(law: ErrorLaw, beta: f64, lipschitz: f64, n: u64) -> Result<Self> {
        let (d_star_lower, d_star_upper) = detection_constants(beta, lipschitz, &law)?;
        Ok(TheoryConstants {
            law,
            beta,
            lipschitz,
            n,
            fisher: fisher_information(&law)?,
            l2mass: density_l2(&law)?,
            gamma_norm_sq: gamma_norm_sq(beta)?,
            d_star_lower,
            d_star_upper,
            rate: rate_rho(n as f64, beta)?,
            efficiency: efficiency_ratio(&law)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_examples() {
        assert!((fisher_information(&ErrorLaw::Normal { sigma: 2.0 }).unwrap() - 0.25).abs() < 1e-15);
        assert!((fisher_information(&ErrorLaw::Laplace { lambda: 3.0 }).unwrap() - 9.0).abs() < 1e-15);
        assert!((fisher_information(&ErrorLaw::Logistic { scale: 1.0 }).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(fisher_information(&ErrorLaw::StudentT { nu: 1.0 }).is_err());
    }

    #[test]
    fn student_fisher_by_quadrature() {
        for nu in [2.0, 3.0, 5.0, 10.0] {
            let i = fisher_information(&ErrorLaw::StudentT { nu }).unwrap();
            assert!((i - (nu + 1.0) / (nu + 3.0)).abs() < 1e-8, "nu={nu}: {i}");
        }
    }

    #[test]
    fn l2_examples() {
        assert!((density_l2(&ErrorLaw::Normal { sigma: 1.0 }).unwrap() - 0.282095).abs() < 1e-6);
        assert_eq!(density_l2(&ErrorLaw::Laplace { lambda: 1.0 }).unwrap(), 0.25);
        assert!((density_l2(&ErrorLaw::Logistic { scale: 1.0 }).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn densities_integrate_to_one() {
        for law in ["normal:0.7", "laplace:2", "logistic:1.5", "t:3", "t:1"] {
            let law: ErrorLaw = law.parse().unwrap();
            let mass = law.integrate_even(|x| law.density(x));
            assert!((mass - 1.0).abs() < 1e-8, "{law}: {mass}");
        }
    }

    #[test]
    fn detection_boundaries() {
        let normal = ErrorLaw::Normal { sigma: 1.0 };
        let (lo, hi) = detection_constants(1.0, 1.0, &normal).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - (PI / 3.0).cbrt()).abs() < 1e-12);
        assert!((hi - 1.01549).abs() < 1e-5);
        assert!(detection_constants(1.5, 1.0, &normal).is_err());
        assert!(detection_constants(1.0, 0.0, &normal).is_err());
    }

    #[test]
    fn rate_examples() {
        assert!((rate_rho(100.0, 1.0).unwrap() - (100f64.ln() / 100.0).cbrt()).abs() < 1e-15);
        assert!((rate_rho(100.0, 1.0).unwrap() - 0.35844).abs() < 1e-5);
        let e = std::f64::consts::E;
        assert!((rate_rho(e, 1.0).unwrap() - (1.0 / e).cbrt()).abs() < 1e-15);
        let big = rate_rho(100.0, 1e9).unwrap();
        assert!((big - (100f64.ln() / 100.0).sqrt()).abs() < 1e-8);
        assert!(rate_rho(1.0, 1.0).is_err());
        assert!(rate_rho(100.0, 0.0).is_err());
    }

    #[test]
    fn parse_laws() {
        assert_eq!("t:3".parse::<ErrorLaw>().unwrap(), ErrorLaw::StudentT { nu: 3.0 });
        assert_eq!("normal".parse::<ErrorLaw>().unwrap(), ErrorLaw::Normal { sigma: 1.0 });
        assert!("t".parse::<ErrorLaw>().is_err());
        assert!("normal:-1".parse::<ErrorLaw>().is_err());
        assert!("cauchy".parse::<ErrorLaw>().is_err());
    }

    #[test]
    fn samplers_have_the_right_spread() {
        use crate::rng::{stream, Domain};
        for law in ["normal:2", "laplace:1", "logistic:1", "t:5"] {
            let law: ErrorLaw = law.parse().unwrap();
            let mut rng = stream(1, Domain::Data, 0);
            let m = 40_000;
            let xs: Vec<f64> = (0..m).map(|_| law.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
            let sd = law.std_dev().unwrap();
            assert!(mean.abs() < 5.0 * sd / (m as f64).sqrt(), "{law}: mean {mean}");
            assert!((var.sqrt() / sd - 1.0).abs() < 0.05, "{law}: sd {}", var.sqrt());
        }
    }
}
