//! Dense bounded-variable primal simplex for `max cᵀx, Ax ≤ b, l ≤ x ≤ u`.

use crate::error::{GlmError, Result};
use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub fn new(lower: f64, upper: f64) -> Self {
        Bound { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub optimum: f64,
    pub x: DVector<f64>,
    pub iterations: usize,
}

struct Tableau {
    /// `B⁻¹[A I ±E]`
    t: DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
}

impl Tableau {
    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (r, &b) in self.basis.iter().enumerate() {
            d -= cost[b] * self.t[(r, j)];
        }
        d
    }

    /// Maximizes `cost·x` from the current basic feasible solution.
    fn optimize(&mut self, cost: &[f64], max_iter: usize, iterations: &mut usize) -> Result<()> {
        let ncol = self.t.ncols();
        let m = self.t.nrows();
        loop {
            if *iterations >= max_iter {
                return Err(GlmError::InvalidState("simplex iteration limit reached".into()));
            }
            // Bland: lowest-index improving column
            let mut entering = None;
            for j in 0..ncol {
                if self.is_basic[j] || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(cost, j);
                let at_lower = self.value[j] <= self.lo[j];
                if (at_lower && d > COST_TOL) || (!at_lower && d < -COST_TOL) {
                    entering = Some((j, if at_lower { 1.0 } else { -1.0 }));
                    break;
                }
            }
            let Some((j, dir)) = entering else { return Ok(()) };
            *iterations += 1;

            let mut step = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let alpha = dir * self.t[(r, j)];
                let b = self.basis[r];
                let room = if alpha > PIVOT_TOL {
                    (self.value[b] - self.lo[b]) / alpha
                } else if alpha < -PIVOT_TOL && self.hi[b].is_finite() {
                    (self.hi[b] - self.value[b]) / -alpha
                } else {
                    continue;
                };
                let room = room.max(0.0);
                let better = match leave {
                    None => room < step || (room == step && step.is_finite()),
                    Some((r0, _)) => room < step || (room == step && b < self.basis[r0]),
                };
                if better {
                    step = room;
                    leave = Some((r, alpha));
                }
            }
            if !step.is_finite() {
                return Err(GlmError::Unbounded);
            }
            for r in 0..m {
                let b = self.basis[r];
                self.value[b] -= dir * step * self.t[(r, j)];
            }
            self.value[j] += dir * step;
            if let Some((r, alpha)) = leave {
                let out = self.basis[r];
                // snap the leaving variable onto the bound it reached
                self.value[out] = if alpha > 0.0 { self.lo[out] } else { self.hi[out] };
                self.pivot(r, j);
            } else {
                // bound flip
                self.value[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.t[(r, j)];
        let ncol = self.t.ncols();
        for c in 0..ncol {
            self.t[(r, c)] /= piv;
        }
        for i in 0..self.t.nrows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, j)];
            if f != 0.0 {
                for c in 0..ncol {
                    let v = self.t[(r, c)];
                    self.t[(i, c)] -= f * v;
                }
            }
        }
        let out = self.basis[r];
        self.is_basic[out] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
    }
}

/// Solves `max cᵀx` subject to `Ax ≤ b` and finite box bounds on `x`.
///
/// Two-phase: rows violated at the starting vertex get an artificial
/// variable whose sum is driven to zero first. Bland's rule prevents cycling.
pub fn lp_solve(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, bounds: &[Bound]) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if c.len() != n || b.len() != m || bounds.len() != n {
        return Err(GlmError::Dimension("inconsistent LP shapes".into()));
    }
    for bd in bounds {
        if !(bd.lower.is_finite() && bd.upper.is_finite() && bd.lower <= bd.upper) {
            return Err(GlmError::InvalidArgument("LP bounds must be finite with lower ≤ upper".into()));
        }
    }
    // nonbasic start: the bound nearest zero
    let start: Vec<f64> = bounds
        .iter()
        .map(|bd| if bd.upper.abs() < bd.lower.abs() { bd.upper } else { bd.lower })
        .collect();
    let x0 = DVector::from_vec(start.clone());
    let resid = b - a * &x0;
    let violated: Vec<usize> = (0..m).filter(|&i| resid[i] < 0.0).collect();
    let k = violated.len();
    let ncol = n + m + k;

    let mut t = DMatrix::zeros(m, ncol);
    t.view_mut((0, 0), (m, n)).copy_from(a);
    for i in 0..m {
        t[(i, n + i)] = 1.0;
    }
    let mut lo = vec![0.0; ncol];
    let mut hi = vec![f64::INFINITY; ncol];
    let mut value = vec![0.0; ncol];
    for j in 0..n {
        lo[j] = bounds[j].lower;
        hi[j] = bounds[j].upper;
        value[j] = start[j];
    }
    let mut basis = vec![0; m];
    let mut is_basic = vec![false; ncol];
    let mut art_of_row = vec![None; m];
    for (q, &i) in violated.iter().enumerate() {
        art_of_row[i] = Some(n + m + q);
    }
    for i in 0..m {
        match art_of_row[i] {
            None => {
                basis[i] = n + i;
                value[n + i] = resid[i];
            }
            Some(col) => {
                // a_iᵀx + s_i − art = b_i with s_i nonbasic at 0
                t[(i, col)] = -1.0;
                basis[i] = col;
                value[col] = -resid[i];
            }
        }
        is_basic[basis[i]] = true;
    }
    // express the tableau in the starting basis: rows with artificials are negated
    for i in 0..m {
        if art_of_row[i].is_some() {
            for c in 0..ncol {
                t[(i, c)] = -t[(i, c)];
            }
        }
    }
    let mut tab = Tableau { t, lo, hi, value, basis, is_basic };
    let max_iter = 50 * (ncol + m) + 1000;
    let mut iterations = 0;

    if k > 0 {
        let mut cost = vec![0.0; ncol];
        for q in 0..k {
            cost[n + m + q] = -1.0;
        }
        tab.optimize(&cost, max_iter, &mut iterations)?;
        let infeasibility: f64 = (0..k).map(|q| tab.value[n + m + q]).sum();
        if infeasibility > FEAS_TOL * (1.0 + b.amax()) {
            return Err(GlmError::Infeasible);
        }
        for q in 0..k {
            let col = n + m + q;
            tab.hi[col] = 0.0;
            tab.value[col] = 0.0;
        }
    }
    let mut cost = vec![0.0; ncol];
    cost[..n].copy_from_slice(c.as_slice());
    tab.optimize(&cost, max_iter, &mut iterations)?;
    let x = DVector::from_iterator(n, tab.value[..n].iter().copied());
    Ok(LpSolution { optimum: c.dot(&x), x, iterations })
}
