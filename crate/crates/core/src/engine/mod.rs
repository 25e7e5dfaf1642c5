//! Score functions, mean and median bias-reducing adjustments, and the
//! adjusted IWLS loops built on them.

mod fit;
mod working;

pub use fit::{
    explicit_correction, fit, fit_constrained, ml_dispersion, moment_dispersion,
    quasi_fisher_step, starting_beta,
};
pub use working::{
    adjusted_scores, dispersion_sums, mean_adjustments, median_adjustments, score_beta,
    score_phi, working_quantities, AdjustedScores, MeanAdjustment, MedianAdjustment,
    WorkingQuantities,
};

use crate::error::{GlmError, Result};
use crate::families::{Family, Link};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A GLM fit problem: design, response, prior weights, family, link, offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub m: DVector<f64>,
    pub family: Family,
    pub link: Link,
    pub offset: DVector<f64>,
}

impl ModelSpec {
    /// Unit prior weights and zero offset.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: Family, link: Link) -> Result<Self> {
        let n = x.nrows();
        let spec = ModelSpec {
            x,
            y,
            m: DVector::from_element(n, 1.0),
            family,
            link,
            offset: DVector::zeros(n),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_weights(mut self, m: DVector<f64>) -> Result<Self> {
        self.m = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: DVector<f64>) -> Result<Self> {
        self.offset = offset;
        self.validate()?;
        Ok(self)
    }

    /// Same design and weights with a new response vector; used by the simulation harness.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        let mut spec = self.clone();
        spec.y = y;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        for (what, len) in [("response", self.y.len()), ("weights", self.m.len()), ("offset", self.offset.len())] {
            if len != n {
                return Err(GlmError::Dimension(format!(
                    "{what} has length {len} but the design has {n} rows"
                )));
            }
        }
        if p == 0 || n < p {
            return Err(GlmError::DegreesOfFreedom { n, p });
        }
        if let Some(i) = self.m.iter().position(|&mi| !(mi > 0.0) || !mi.is_finite()) {
            return Err(GlmError::InvalidArgument(format!(
                "prior weight at row {i} must be positive, got {}",
                self.m[i]
            )));
        }
        if self.x.iter().chain(self.offset.iter()).any(|v| !v.is_finite()) {
            return Err(GlmError::InvalidArgument(
                "design and offset must be finite".into(),
            ));
        }
        for &yi in self.y.iter() {
            self.family.check_response(yi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ml,
    CorrectedMl,
    MeanBr,
    MedianBr,
    MixedBr,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ml,
        Method::CorrectedMl,
        Method::MeanBr,
        Method::MedianBr,
        Method::MixedBr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::CorrectedMl => "corrected_ml",
            Method::MeanBr => "mean_br",
            Method::MedianBr => "median_br",
            Method::MixedBr => "mixed_br",
        }
    }

    /// Which adjustment enters the β equations.
    pub(crate) fn beta_adjustment(self) -> Adjustment {
        match self {
            Method::Ml => Adjustment::None,
            Method::CorrectedMl | Method::MeanBr | Method::MixedBr => Adjustment::Mean,
            Method::MedianBr => Adjustment::Median,
        }
    }

    /// Which adjustment enters the φ equation.
    pub(crate) fn phi_adjustment(self) -> Adjustment {
        match self {
            Method::Ml => Adjustment::None,
            Method::CorrectedMl | Method::MeanBr => Adjustment::Mean,
            Method::MedianBr | Method::MixedBr => Adjustment::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Adjustment {
    None,
    Mean,
    Median,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| GlmError::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Scale on which the dispersion is updated and its adjusted score measured.
///
/// Mean BR is not invariant under `φ ↦ log φ`, so the two scales give
/// different mean-BR estimates of φ. ML and median BR give the same φ on either scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionScale {
    #[default]
    Phi,
    LogPhi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitControl {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub phi_start: Option<f64>,
    pub beta_start: Option<DVector<f64>>,
    pub max_step_halvings: usize,
    pub dispersion_scale: DispersionScale,
}

impl Default for FitControl {
    fn default() -> Self {
        FitControl {
            tolerance: 1e-10,
            max_iterations: 100,
            phi_start: None,
            beta_start: None,
            max_step_halvings: 10,
            dispersion_scale: DispersionScale::Phi,
        }
    }
}

impl FitControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(GlmError::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(GlmError::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let Some(phi) = self.phi_start {
            if !(phi > 0.0) || !phi.is_finite() {
                return Err(GlmError::InvalidArgument(format!("phi_start must be positive, got {phi}")));
            }
        }
        Ok(())
    }
}

/// Final IWLS quantities (W, D, z, ξ, u, h) at the reported estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingState {
    pub eta: DVector<f64>,
    pub mu: DVector<f64>,
    pub w: DVector<f64>,
    pub d: DVector<f64>,
    pub z: DVector<f64>,
    pub xi: DVector<f64>,
    pub u: DVector<f64>,
    pub hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub beta: DVector<f64>,
    /// Fixed at 1 when the family has known dispersion.
    pub phi: f64,
    pub dispersion_known: bool,
    /// Inverse expected information at the estimates: `(p+1)×(p+1)` with φ
    /// last, or `p×p` when the dispersion is known.
    pub vcov: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `‖s + A‖∞` for the method's adjusted score.
    pub adjusted_score_norm: f64,
    pub working: WorkingState,
}

impl FitResult {
    pub fn std_errors(&self) -> DVector<f64> {
        self.vcov.map_diagonal(|v| v.max(0.0).sqrt())
    }

    pub fn beta_se(&self) -> DVector<f64> {
        let p = self.beta.len();
        DVector::from_iterator(p, (0..p).map(|j| self.vcov[(j, j)].max(0.0).sqrt()))
    }

    pub fn phi_se(&self) -> Option<f64> {
        if self.dispersion_known {
            None
        } else {
            let p = self.beta.len();
            Some(self.vcov[(p, p)].max(0.0).sqrt())
        }
    }
}
