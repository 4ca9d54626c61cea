//! Kernel weight functions on `[0, 1]`.
//!
//! Kernels are only ever used through ratios in which a positive rescaling
//! cancels, so none of them is normalized to unit mass.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Rectangular,
    Epanechnikov,
    Holder,
}

/// A weight function on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Kernel {
    Rectangular,
    /// `1 - (2x - 1)^2`.
    Epanechnikov,
    /// `1 - |2x - 1|^beta`, the optimal kernel for Hölder smoothness `beta <= 1`.
    Holder { beta: f64 },
}

impl Kernel {
    pub fn new(kind: KernelKind, beta: Option<f64>) -> Result<Self> {
        match kind {
            KernelKind::Rectangular => Ok(Kernel::Rectangular),
            KernelKind::Epanechnikov => Ok(Kernel::Epanechnikov),
            KernelKind::Holder => {
                let beta = beta.ok_or_else(|| {
                    Error::InvalidParameter("holder kernel needs a beta".into())
                })?;
                Kernel::holder(beta)
            }
        }
    }

    pub fn holder(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "holder beta must be positive, got {beta}"
            )));
        }
        if beta > 1.0 {
            return Err(Error::UnsupportedKernel(format!(
                "holder kernel with beta = {beta} > 1 has no closed form"
            )));
        }
        Ok(Kernel::Holder { beta })
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Rectangular => KernelKind::Rectangular,
            Kernel::Epanechnikov => KernelKind::Epanechnikov,
            Kernel::Holder { .. } => KernelKind::Holder,
        }
    }

    /// Value at `x`; arguments outside `[0, 1]` are clamped onto it.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            Kernel::Rectangular => 1.0,
            Kernel::Epanechnikov => {
                let u = 2.0 * x - 1.0;
                1.0 - u * u
            }
            Kernel::Holder { beta } => 1.0 - (2.0 * x - 1.0).abs().powf(beta),
        }
    }

    /// The kernel stretched onto the window `[s, t]`, evaluated at `x`.
    pub fn rescale_eval(&self, s: f64, t: f64, x: f64) -> Result<f64> {
        if !(s < t) {
            return Err(Error::DegenerateWindow { s, t });
        }
        Ok(self.window_weight(s, t, x))
    }

    #[inline]
    pub(crate) fn window_weight(&self, s: f64, t: f64, x: f64) -> f64 {
        self.eval((x - s) / (t - s))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rectangular => f.write_str("rect"),
            Kernel::Epanechnikov => f.write_str("epa"),
            Kernel::Holder { beta } => write!(f, "holder:{beta}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "rect" | "rectangular" => return Ok(Kernel::Rectangular),
            "epa" | "epanechnikov" => return Ok(Kernel::Epanechnikov),
            "holder" => return Kernel::new(KernelKind::Holder, None),
            _ => {}
        }
        if let Some(beta) = s.strip_prefix("holder:") {
            let beta: f64 = beta
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad holder beta {beta:?}")))?;
            return Kernel::holder(beta);
        }
        Err(Error::UnsupportedKernel(s.to_string()))
    }
}

impl TryFrom<String> for Kernel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Kernel> for String {
    fn from(k: Kernel) -> String {
        k.to_string()
    }
}

/// `gamma_beta(x) = 1{|x| <= 1} (1 - |x|^beta)`, the solution of the optimal
/// recovery problem on the real line for `0 < beta <= 1`.
pub fn gamma_beta(beta: f64, x: f64) -> f64 {
    let a = x.abs();
    if a > 1.0 {
        0.0
    } else {
        1.0 - a.powf(beta)
    }
}

/// Squared L2 norm of [`gamma_beta`]: `2 (1 - 2/(beta+1) + 1/(2 beta+1))`.
pub fn gamma_norm_sq(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    Ok(2.0 * (1.0 - 2.0 / (beta + 1.0) + 1.0 / (2.0 * beta + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holder_one_is_a_tent() {
        let k = Kernel::new(KernelKind::Holder, Some(1.0)).unwrap();
        assert_eq!(k.eval(0.5), 1.0);
        assert_eq!(k.eval(0.0), 0.0);
        assert_eq!(k.eval(1.0), 0.0);
    }

    #[test]
    fn rectangular_is_constant() {
        let k = Kernel::new(KernelKind::Rectangular, None).unwrap();
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(k.eval(x), 1.0);
        }
    }

    #[test]
    fn holder_beta_errors() {
        assert!(matches!(Kernel::holder(2.0), Err(Error::UnsupportedKernel(_))));
        assert!(matches!(Kernel::holder(0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(Kernel::holder(-1.0), Err(Error::InvalidParameter(_))));
        assert!(Kernel::new(KernelKind::Holder, None).is_err());
    }

    #[test]
    fn rescaling() {
        let tent = Kernel::holder(1.0).unwrap();
        assert_eq!(tent.rescale_eval(2.0, 4.0, 3.0).unwrap(), 1.0);
        let epa = Kernel::Epanechnikov;
        assert!((epa.rescale_eval(0.0, 2.0, 0.5).unwrap() - 0.75).abs() < 1e-15);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(epa.rescale_eval(0.0, 1.0, x).unwrap(), epa.eval(x));
        }
        assert!(matches!(
            epa.rescale_eval(1.0, 1.0, 1.0),
            Err(Error::DegenerateWindow { .. })
        ));
        assert!(epa.rescale_eval(2.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn gamma_norm_values() {
        assert!((gamma_norm_sq(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((gamma_norm_sq(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(gamma_norm_sq(0.0).is_err());
        assert!(gamma_norm_sq(1.5).is_err());
    }

    #[test]
    fn parse_and_display() {
        for s in ["rect", "epa", "holder:0.5", "holder:1"] {
            let k: Kernel = s.parse().unwrap();
            assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
        }
        assert!("holder:2".parse::<Kernel>().is_err());
        assert!("gauss".parse::<Kernel>().is_err());
    }
}
