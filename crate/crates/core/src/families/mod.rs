//! Exponential-family and link-function primitives.
//!
//! A response density is written as
//! `exp{(yθ − b(θ) − c₁(y)) m/φ − a(−m/φ)/2 + c₂(y)}`, so everything the
//! estimators need is the variance function, the unit deviance
//! `q = −2m{yθ − b(θ) − c₁(y)}` and the derivatives of `a(·)`.

mod special;
pub mod table2;

pub use special::{
    digamma, normal_cdf, normal_pdf, normal_quantile, polygamma, tetragamma, trigamma,
};

use crate::error::{GlmError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
    Poisson,
    Gamma,
}

/// First three derivatives of `a(u)` at `u = −m/φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ADerivatives {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Gaussian,
        Family::Binomial,
        Family::Poisson,
        Family::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
        }
    }

    /// Binomial and Poisson have φ fixed at 1.
    pub fn dispersion_known(self) -> bool {
        matches!(self, Family::Binomial | Family::Poisson)
    }

    pub fn canonical_link(self) -> Link {
        match self {
            Family::Gaussian => Link::Identity,
            Family::Binomial => Link::Logit,
            Family::Poisson => Link::Log,
            Family::Gamma => Link::Inverse,
        }
    }

    pub fn check_mean(self, mu: f64) -> Result<()> {
        let ok = mu.is_finite()
            && match self {
                Family::Gaussian => true,
                Family::Binomial => mu > 0.0 && mu < 1.0,
                Family::Poisson | Family::Gamma => mu > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(GlmError::InvalidMean {
                family: self.name(),
                mu,
            })
        }
    }

    /// Binomial responses are proportions of `m` trials, so they live in [0, 1].
    pub fn check_response(self, y: f64) -> Result<()> {
        let ok = y.is_finite()
            && match self {
                Family::Gaussian => true,
                Family::Binomial => (0.0..=1.0).contains(&y),
                Family::Poisson => y >= 0.0,
                Family::Gamma => y > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(GlmError::InvalidResponse {
                family: self.name(),
                y,
            })
        }
    }

    pub fn variance(self, mu: f64) -> Result<f64> {
        self.variance_parts(mu, 1.0 - mu).map(|(v, _)| v)
    }

    pub fn variance_derivative(self, mu: f64) -> Result<f64> {
        self.variance_parts(mu, 1.0 - mu).map(|(_, dv)| dv)
    }

    /// `(V(μ), V′(μ))` given `μ` and `1 − μ` separately. For the binomial the
    /// complement keeps fitted probabilities that round to 1 usable.
    pub fn variance_parts(self, mu: f64, mu_c: f64) -> Result<(f64, f64)> {
        if self == Family::Binomial {
            if !(mu > 0.0 && mu_c > 0.0 && mu.is_finite() && mu_c.is_finite()) {
                return Err(GlmError::InvalidMean { family: self.name(), mu });
            }
            return Ok((mu * mu_c, mu_c - mu));
        }
        self.check_mean(mu)?;
        Ok(match self {
            Family::Gaussian => (1.0, 0.0),
            Family::Poisson => (mu, 1.0),
            Family::Gamma => (mu * mu, 2.0 * mu),
            Family::Binomial => unreachable!(),
        })
    }

    /// Unit deviance scaled by the prior weight, `q = −2m{yθ − b(θ) − c₁(y)}`.
    ///
    /// `y log y` terms are taken at their limit 0 when `y = 0` (and `(1−y)
    /// log(1−y)` when `y = 1` for the binomial).
    pub fn unit_deviance(self, y: f64, mu: f64, m: f64) -> Result<f64> {
        self.unit_deviance_parts(y, mu, 1.0 - mu, m)
    }

    /// [`Family::unit_deviance`] with `1 − μ` supplied by the caller.
    pub fn unit_deviance_parts(self, y: f64, mu: f64, mu_c: f64, m: f64) -> Result<f64> {
        self.check_response(y)?;
        self.variance_parts(mu, mu_c)?;
        if !(m > 0.0) {
            return Err(GlmError::InvalidArgument(format!(
                "prior weight must be positive, got {m}"
            )));
        }
        let q = match self {
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Binomial => 2.0 * (xlogy_ratio(y, mu) + xlogy_ratio(1.0 - y, mu_c)),
            Family::Poisson => 2.0 * (xlogy_ratio(y, mu) - (y - mu)),
            Family::Gamma => 2.0 * ((y - mu) / mu - (y / mu).ln()),
        };
        // rounding can leave tiny negative values near the saturated point
        Ok(m * q.max(0.0))
    }

    /// `a(u)` for `u < 0`; only defined for families with unknown dispersion.
    pub fn a_function(self, u: f64) -> Result<f64> {
        self.require_dispersion("a(u)")?;
        if !(u < 0.0) {
            return Err(GlmError::Domain { name: "a(u)", x: u });
        }
        Ok(match self {
            Family::Gaussian => (2.0 * std::f64::consts::PI).ln() - (-u).ln(),
            Family::Gamma => 2.0 * statrs::function::gamma::ln_gamma(-u) + 2.0 * u * (-u).ln(),
            _ => unreachable!(),
        })
    }

    /// `a′, a″, a‴` evaluated at `u = −m/φ`.
    pub fn a_derivatives(self, m: f64, phi: f64) -> Result<ADerivatives> {
        self.require_dispersion("a-derivatives")?;
        if !(m > 0.0) || !(phi > 0.0) {
            return Err(GlmError::InvalidArgument(format!(
                "a-derivatives need m > 0 and phi > 0 (m = {m}, phi = {phi})"
            )));
        }
        match self {
            Family::Gaussian => {
                let r = phi / m;
                Ok(ADerivatives {
                    a1: r,
                    a2: r * r,
                    a3: 2.0 * r * r * r,
                })
            }
            Family::Gamma => {
                let kappa = m / phi;
                Ok(ADerivatives {
                    a1: -2.0 * digamma(kappa)? + 2.0 * kappa.ln() + 2.0,
                    a2: 2.0 * trigamma(kappa)? - 2.0 / kappa,
                    a3: -2.0 * tetragamma(kappa)? - 2.0 / (kappa * kappa),
                })
            }
            _ => unreachable!(),
        }
    }

    /// `ρ = E(q)` for the unit deviance returned by [`Family::unit_deviance`].
    ///
    /// For the gamma family `a(u) = 2 log Γ(−u) + 2u log(−u)` pairs with
    /// `c₁(y) = −log y`, under which `−2m{yθ − b(θ) − c₁(y)}` exceeds the unit
    /// deviance by `2m`. The shift cancels in `q − ρ`, so it is removed here
    /// rather than carried in `q`.
    pub fn expected_deviance(self, m: f64, phi: f64) -> Result<f64> {
        let a1 = self.a_derivatives(m, phi)?.a1;
        Ok(match self {
            Family::Gamma => m * (a1 - 2.0),
            _ => m * a1,
        })
    }

    fn require_dispersion(self, what: &'static str) -> Result<()> {
        if self.dispersion_known() {
            Err(GlmError::DispersionKnown {
                family: self.name(),
                what,
            })
        } else {
            Ok(())
        }
    }

    /// Starting mean that keeps the first link evaluation finite.
    pub fn start_mean(self, y: f64, m: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Binomial => (m * y + 0.5) / (m + 1.0),
            Family::Poisson | Family::Gamma => {
                if y == 0.0 {
                    y + 0.1
                } else {
                    y
                }
            }
        }
    }
}

fn xlogy_ratio(x: f64, mu: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / mu).ln()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| GlmError::InvalidArgument(format!("unknown family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    Logit,
    Probit,
    Cloglog,
    Inverse,
    Sqrt,
}

/// Inverse link and its first two derivatives at a linear predictor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuantities {
    pub mu: f64,
    /// `1 − μ`, without cancellation for the links mapping into (0, 1)
    pub mu_c: f64,
    /// dμ/dη
    pub d: f64,
    /// d²μ/dη²
    pub d_prime: f64,
}

impl Link {
    pub const ALL: [Link; 7] = [
        Link::Identity,
        Link::Log,
        Link::Logit,
        Link::Probit,
        Link::Cloglog,
        Link::Inverse,
        Link::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
            Link::Inverse => "inverse",
            Link::Sqrt => "sqrt",
        }
    }

    /// g(μ)
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Probit => normal_quantile(mu).unwrap_or(f64::NAN),
            Link::Cloglog => (-(-mu).ln_1p()).ln(),
            Link::Inverse => 1.0 / mu,
            Link::Sqrt => mu.sqrt(),
        }
    }

    /// g⁻¹(η)
    pub fn inverse(self, eta: f64) -> f64 {
        self.quantities(eta).mu
    }

    pub fn quantities(self, eta: f64) -> LinkQuantities {
        match self {
            Link::Identity => LinkQuantities {
                mu: eta,
                mu_c: 1.0 - eta,
                d: 1.0,
                d_prime: 0.0,
            },
            Link::Log => {
                let e = eta.exp();
                LinkQuantities {
                    mu: e,
                    mu_c: 1.0 - e,
                    d: e,
                    d_prime: e,
                }
            }
            Link::Logit => {
                let t = (-eta.abs()).exp();
                let (mu, one_minus) = if eta >= 0.0 {
                    (1.0 / (1.0 + t), t / (1.0 + t))
                } else {
                    (t / (1.0 + t), 1.0 / (1.0 + t))
                };
                let d = t / ((1.0 + t) * (1.0 + t));
                LinkQuantities {
                    mu,
                    mu_c: one_minus,
                    d,
                    d_prime: d * (one_minus - mu),
                }
            }
            Link::Probit => {
                let d = normal_pdf(eta);
                LinkQuantities {
                    mu: normal_cdf(eta),
                    mu_c: normal_cdf(-eta),
                    d,
                    d_prime: -eta * d,
                }
            }
            Link::Cloglog => {
                let e = eta.exp();
                let d = (eta - e).exp();
                LinkQuantities {
                    mu: -(-e).exp_m1(),
                    mu_c: (-e).exp(),
                    d,
                    d_prime: d * (1.0 - e),
                }
            }
            Link::Inverse => LinkQuantities {
                mu: 1.0 / eta,
                mu_c: 1.0 - 1.0 / eta,
                d: -1.0 / (eta * eta),
                d_prime: 2.0 / (eta * eta * eta),
            },
            Link::Sqrt => LinkQuantities {
                mu: eta * eta,
                mu_c: 1.0 - eta * eta,
                d: 2.0 * eta,
                d_prime: 2.0,
            },
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self> {
        Link::ALL
            .into_iter()
            .find(|l| l.name() == s.to_ascii_lowercase())
            .ok_or_else(|| GlmError::InvalidArgument(format!("unknown link '{s}'")))
    }
}
