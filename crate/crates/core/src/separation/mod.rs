//! Detection of complete and quasi-complete separation in binomial-response
//! data by linear programming.

mod simplex;

pub use simplex::{lp_solve, Bound, LpSolution};

use crate::error::{GlmError, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Margins above this count as strictly positive.
pub const STRICT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationStatus {
    None,
    Quasi,
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub status: SeparationStatus,
    /// In the original column scale; zero when there is no separation.
    pub direction: DVector<f64>,
    /// Rows of the input (not the expanded data) with a strictly positive margin.
    pub certifying_rows: Vec<usize>,
}

/// Collapses proportion responses to 0/1 rows: `0 < y m < m` contributes one
/// row of each kind. Returns the design rows, signs `2ȳ − 1` and the source row.
fn binary_rows(x: &DMatrix<f64>, y: &DVector<f64>, m: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<f64>, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut signs = Vec::new();
    for i in 0..x.nrows() {
        let (yi, mi) = (y[i], m[i]);
        if !(0.0..=1.0).contains(&yi) || !(mi > 0.0) {
            return Err(GlmError::InvalidResponse { family: "binomial", y: yi });
        }
        let successes = yi * mi;
        if successes > 0.5e-9 * mi {
            rows.push(i);
            signs.push(1.0);
        }
        if successes < mi * (1.0 - 0.5e-9) {
            rows.push(i);
            signs.push(-1.0);
        }
    }
    let xb = x.select_rows(&rows);
    Ok((xb, signs, rows))
}

/// Detects separation for responses `y ∈ [0,1]` (proportions of `m` trials).
///
/// Stage one maximizes `Σ sᵢ` subject to `sᵢ ≤ ỹᵢxᵢᵀγ`, `0 ≤ sᵢ ≤ 1`,
/// `‖γ‖∞ ≤ 1`; a positive optimum means some direction separates. Stage two
/// maximizes the common margin `t ≤ ỹᵢxᵢᵀγ`, whose optimum is positive exactly
/// when the separation is complete. Columns are scaled to unit max-norm for
/// both LPs.
pub fn detect_separation(x: &DMatrix<f64>, y: &DVector<f64>, m: &DVector<f64>) -> Result<SeparationReport> {
    let (n, p) = x.shape();
    if y.len() != n || m.len() != n {
        return Err(GlmError::Dimension("response and weights must match the design rows".into()));
    }
    if n == 0 || x.iter().all(|&v| v == 0.0) {
        return Err(GlmError::InvalidArgument("design is empty or all zero".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::InvalidArgument("design must be finite".into()));
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| x.column(j).amax())
        .map(|s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let zero_col: Vec<bool> = (0..p).map(|j| x.column(j).amax() == 0.0).collect();
    let (xb, signs, source) = binary_rows(x, y, m)?;
    let nb = xb.nrows();
    // signed, scaled rows ỹᵢxᵢ/scale
    let g = DMatrix::from_fn(nb, p, |i, j| signs[i] * xb[(i, j)] / scale[j]);
    let gamma_bounds = |j: usize| if zero_col[j] { Bound::new(0.0, 0.0) } else { Bound::new(-1.0, 1.0) };

    // stage one: variables (γ, s); rows sᵢ − gᵢᵀγ ≤ 0
    let mut a = DMatrix::zeros(nb, p + nb);
    a.view_mut((0, 0), (nb, p)).copy_from(&(-&g));
    for i in 0..nb {
        a[(i, p + i)] = 1.0;
    }
    let mut c = DVector::zeros(p + nb);
    c.rows_mut(p, nb).fill(1.0);
    let mut bounds: Vec<Bound> = (0..p).map(gamma_bounds).collect();
    bounds.extend(std::iter::repeat_n(Bound::new(0.0, 1.0), nb));
    let stage1 = lp_solve(&c, &a, &DVector::zeros(nb), &bounds)?;

    let to_original = |gamma: DVector<f64>| DVector::from_iterator(p, (0..p).map(|j| gamma[j] / scale[j]));
    if stage1.optimum <= STRICT_TOL {
        return Ok(SeparationReport {
            status: SeparationStatus::None,
            direction: DVector::zeros(p),
            certifying_rows: Vec::new(),
        });
    }

    // stage two: variables (γ, t); rows t − gᵢᵀγ ≤ 0
    let mut a2 = DMatrix::zeros(nb, p + 1);
    a2.view_mut((0, 0), (nb, p)).copy_from(&(-&g));
    a2.column_mut(p).fill(1.0);
    let mut c2 = DVector::zeros(p + 1);
    c2[p] = 1.0;
    let mut bounds2: Vec<Bound> = (0..p).map(gamma_bounds).collect();
    bounds2.push(Bound::new(0.0, 1.0));
    let stage2 = lp_solve(&c2, &a2, &DVector::zeros(nb), &bounds2)?;

    let (status, gamma) = if stage2.optimum > STRICT_TOL {
        (SeparationStatus::Complete, stage2.x.rows(0, p).into_owned())
    } else {
        (SeparationStatus::Quasi, stage1.x.rows(0, p).into_owned())
    };
    let margins = &g * &gamma;
    let mut certifying_rows: Vec<usize> = (0..nb).filter(|&i| margins[i] > STRICT_TOL).map(|i| source[i]).collect();
    certifying_rows.dedup();
    Ok(SeparationReport { status, direction: to_original(gamma), certifying_rows })
}
