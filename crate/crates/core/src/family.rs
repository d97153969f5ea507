//! Response families: link functions, variance functions and deviances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RgamError};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-10;

/// Scale on which predictions are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Linear predictor.
    #[default]
    Link,
    /// Mean response, i.e. the inverse link applied to the linear predictor.
    Response,
}

impl FromStr for Scale {
    type Err = RgamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "link" => Ok(Scale::Link),
            "response" => Ok(Scale::Response),
            other => Err(RgamError::InvalidConfig(format!(
                "unknown scale `{other}` (expected link or response)"
            ))),
        }
    }
}

/// Exponential family of the response, with its canonical link.
///
/// | family   | link     | variance   |
/// |----------|----------|------------|
/// | gaussian | identity | 1          |
/// | binomial | logit    | mu(1 - mu) |
/// | poisson  | log      | mu         |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
}

impl Family {
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }

    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Family::Poisson => eta.exp(),
        }
    }

    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Deviance contribution of a single observation.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Binomial => {
                let p = mu.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                    + 2.0 * (xlogx(y) + xlogx(1.0 - y))
            }
            Family::Poisson => {
                let m = mu.max(f64::MIN_POSITIVE);
                2.0 * (xlogx(y) - y * m.ln() - (y - m))
            }
        }
    }

    /// Mean unit deviance of `mu` against `y`.
    pub fn mean_deviance(self, y: &[f64], mu: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), mu.len());
        let total: f64 = y
            .iter()
            .zip(mu)
            .map(|(&yi, &mi)| self.unit_deviance(yi, mi))
            .sum();
        total / y.len() as f64
    }

    /// Checks that a response value is in the support of the family.
    pub fn admits(self, y: f64) -> bool {
        match self {
            Family::Gaussian => y.is_finite(),
            Family::Binomial => y == 0.0 || y == 1.0,
            Family::Poisson => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        }
    }

    /// Validates every response value, reporting the first offending row (1-based).
    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        match y.iter().position(|&v| !self.admits(v)) {
            None => Ok(()),
            Some(i) => Err(RgamError::FamilyMismatch {
                family: self.to_string(),
                row: i + 1,
                value: y[i],
            }),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }
}

fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = RgamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "binomial" | "logistic" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            other => Err(RgamError::InvalidConfig(format!(
                "unknown family `{other}` (expected gaussian, binomial or poisson)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn link_inverts_inverse_link(eta in -8.0f64..8.0) {
            for fam in [Family::Gaussian, Family::Binomial, Family::Poisson] {
                let back = fam.link(fam.inverse_link(eta));
                prop_assert!((back - eta).abs() < 1e-12, "{fam}: {eta} -> {back}");
            }
        }

        #[test]
        fn inverse_link_inverts_link(mu in 0.001f64..0.999) {
            for fam in [Family::Gaussian, Family::Binomial, Family::Poisson] {
                prop_assert!((fam.inverse_link(fam.link(mu)) - mu).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deviance_is_zero_at_the_data() {
        assert_abs_diff_eq!(Family::Gaussian.unit_deviance(1.5, 1.5), 0.0);
        assert_abs_diff_eq!(Family::Poisson.unit_deviance(3.0, 3.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(Family::Poisson.unit_deviance(0.0, 1e-300), 0.0, epsilon = 1e-12);
        assert!(Family::Binomial.unit_deviance(1.0, 1.0) < 1e-9);
    }

    #[test]
    fn binomial_deviance_at_half() {
        assert_abs_diff_eq!(
            Family::Binomial.unit_deviance(1.0, 0.5),
            2.0 * std::f64::consts::LN_2,
            epsilon = 1e-14
        );
    }

    #[test]
    fn response_support() {
        assert!(Family::Binomial.validate_response(&[0.0, 1.0, 1.0]).is_ok());
        let err = Family::Binomial.validate_response(&[0.0, 0.5]).unwrap_err();
        assert!(matches!(err, RgamError::FamilyMismatch { row: 2, .. }));
        assert!(Family::Poisson.validate_response(&[0.0, 4.0]).is_ok());
        assert!(Family::Poisson.validate_response(&[1.5]).is_err());
        assert!(Family::Poisson.validate_response(&[-1.0]).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("Binomial".parse::<Family>().unwrap(), Family::Binomial);
        assert!("cox".parse::<Family>().is_err());
        assert_eq!("response".parse::<Scale>().unwrap(), Scale::Response);
    }
}
