//! Distribution functions and quantiles for the normal, Student t and χ²
//! distributions.

use crate::error::{GlmError, Result};
use crate::families::{normal_cdf, normal_pdf, normal_quantile};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal,
    StudentT(f64),
    ChiSquare(f64),
}

impl Distribution {
    fn check(self) -> Result<()> {
        match self {
            Distribution::StudentT(nu) | Distribution::ChiSquare(nu) if !(nu > 0.0) || !nu.is_finite() => {
                Err(GlmError::InvalidArgument(format!("degrees of freedom must be positive, got {nu}")))
            }
            _ => Ok(()),
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => normal_cdf(x),
            Distribution::StudentT(nu) => {
                let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
                if x > 0.0 { 1.0 - tail } else { tail }
            }
            Distribution::ChiSquare(k) => {
                if x <= 0.0 { 0.0 } else { gamma_lr(0.5 * k, 0.5 * x) }
            }
        }
    }

    /// `1 − F(x)` without cancellation in the upper tail.
    pub fn survival(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => normal_cdf(-x),
            Distribution::StudentT(_) => self.cdf(-x),
            Distribution::ChiSquare(k) => {
                if x <= 0.0 { 1.0 } else { gamma_ur(0.5 * k, 0.5 * x) }
            }
        }
    }

    pub fn pdf(self, x: f64) -> f64 {
        match self {
            Distribution::Normal => normal_pdf(x),
            Distribution::StudentT(nu) => {
                let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
                (ln_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
            }
            Distribution::ChiSquare(k) => {
                if x <= 0.0 {
                    return 0.0;
                }
                let h = 0.5 * k;
                ((h - 1.0) * x.ln() - 0.5 * x - h * 2f64.ln() - ln_gamma(h)).exp()
            }
        }
    }

    /// Inverse distribution function.
    ///
    /// Normal: rational approximation with Halley refinement. t and χ²:
    /// bracketed Newton on the incomplete beta/gamma representation, with
    /// bisection whenever a Newton step leaves the bracket.
    pub fn quantile(self, prob: f64) -> Result<f64> {
        self.check()?;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(GlmError::Domain { name: "quantile", x: prob });
        }
        match self {
            Distribution::Normal => normal_quantile(prob),
            Distribution::StudentT(_) => {
                // symmetric: solve in the upper half for accuracy
                if prob < 0.5 {
                    return Ok(-self.quantile(1.0 - prob)?);
                }
                if prob == 0.5 {
                    return Ok(0.0);
                }
                let upper = 1.0 - prob;
                let start = normal_quantile(prob)?;
                self.invert_upper(upper, start, 0.0)
            }
            Distribution::ChiSquare(k) => {
                let start = {
                    // Wilson-Hilferty
                    let z = normal_quantile(prob)?;
                    let c = 2.0 / (9.0 * k);
                    (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8)
                };
                if prob <= 0.5 {
                    self.invert_lower(prob, start)
                } else {
                    self.invert_upper(1.0 - prob, start, 0.0)
                }
            }
        }
    }

    /// Solves `survival(x) = upper` for `x > floor`.
    fn invert_upper(self, upper: f64, start: f64, floor: f64) -> Result<f64> {
        let mut lo = floor;
        let mut hi = start.max(floor + 1.0);
        while self.survival(hi) > upper {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(GlmError::Domain { name: "quantile", x: upper });
            }
        }
        let mut x = start.clamp(lo, hi);
        if x <= lo || x >= hi {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..300 {
            let f = self.survival(x) - upper;
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let dens = self.pdf(x);
            let mut next = x + f / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 2.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    fn invert_lower(self, prob: f64, start: f64) -> Result<f64> {
        let mut lo = 0.0;
        let mut hi = start.max(1e-8);
        while self.cdf(hi) < prob {
            lo = hi;
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..300 {
            let f = self.cdf(x) - prob;
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - f / self.pdf(x);
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.max(1e-300) || hi - lo <= 2.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

pub fn quantile(dist: Distribution, prob: f64) -> Result<f64> {
    dist.quantile(prob)
}
