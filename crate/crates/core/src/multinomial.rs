//! Baseline-category multinomial logistic regression through the equivalent
//! Poisson log-linear model.
//!
//! Expanded rows are ordered `i·k + j` (observation `i`, category `j`). The
//! design has `n` indicator columns for the nuisance intercepts `λ`, followed
//! by one block of `p` covariate columns per non-baseline category, in
//! category order.

use crate::engine::{fit, quasi_fisher_step, FitControl, Method, ModelSpec};
use crate::error::{GlmError, Result};
use crate::families::{Family, Link};
use crate::linalg::WeightedQr;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialProblem {
    /// `n × k` category counts.
    pub counts: DMatrix<f64>,
    /// `n × p`; include a column of ones for category intercepts.
    pub covariates: DMatrix<f64>,
    /// 0-based baseline category.
    pub baseline: usize,
}

impl MultinomialProblem {
    /// Uses the last category as baseline.
    pub fn new(counts: DMatrix<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        let baseline = counts.ncols().saturating_sub(1);
        Self::with_baseline(counts, covariates, baseline)
    }

    pub fn with_baseline(counts: DMatrix<f64>, covariates: DMatrix<f64>, baseline: usize) -> Result<Self> {
        let pr = MultinomialProblem { counts, covariates, baseline };
        pr.validate()?;
        Ok(pr)
    }

    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    pub fn k(&self) -> usize {
        self.counts.ncols()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn totals(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.counts.row_iter().map(|r| r.sum()))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.counts.shape();
        if k < 2 {
            return Err(GlmError::InvalidArgument("need at least two categories".into()));
        }
        if self.baseline >= k {
            return Err(GlmError::InvalidArgument(format!("baseline {} out of range for k = {k}", self.baseline)));
        }
        if self.covariates.nrows() != n {
            return Err(GlmError::Dimension(format!(
                "covariates have {} rows, counts have {n}",
                self.covariates.nrows()
            )));
        }
        for &c in self.counts.iter() {
            if !(c >= 0.0) || c.fract() != 0.0 {
                return Err(GlmError::InvalidResponse { family: "multinomial", y: c });
            }
        }
        if let Some(i) = self.counts.row_iter().position(|r| r.sum() < 1.0) {
            return Err(GlmError::DegenerateRow { row: i });
        }
        Ok(())
    }

    /// Column of coefficient `l` of non-baseline category `cat` in the expanded design.
    pub fn gamma_column(&self, cat: usize, l: usize) -> usize {
        assert!(cat != self.baseline);
        let rank = if cat < self.baseline { cat } else { cat - 1 };
        self.n() + rank * self.p() + l
    }

    fn non_baseline(&self) -> Vec<usize> {
        (0..self.k()).filter(|&j| j != self.baseline).collect()
    }
}

/// `log μ_ij = λ_i + x_iᵀγ_j`, with `γ_baseline = 0`.
pub fn expand_to_poisson(problem: &MultinomialProblem) -> Result<ModelSpec> {
    problem.validate()?;
    let (n, k, p) = (problem.n(), problem.k(), problem.p());
    let ncol = n + (k - 1) * p;
    let mut x = DMatrix::zeros(n * k, ncol);
    let mut y = DVector::zeros(n * k);
    for i in 0..n {
        for j in 0..k {
            let row = i * k + j;
            x[(row, i)] = 1.0;
            y[row] = problem.counts[(i, j)];
            if j != problem.baseline {
                for l in 0..p {
                    x[(row, problem.gamma_column(j, l))] = problem.covariates[(i, l)];
                }
            }
        }
    }
    ModelSpec::new(x, y, Family::Poisson, Link::Log)
}

/// `μ̄_is = m_i μ_is / Σ_t μ_it` for `μ` laid out in rows of `k`.
pub fn rescale_means(mu: &DVector<f64>, totals: &DVector<f64>) -> Result<DVector<f64>> {
    let n = totals.len();
    if n == 0 || mu.len() % n != 0 {
        return Err(GlmError::Dimension("means must hold k entries per total".into()));
    }
    let k = mu.len() / n;
    let mut out = mu.clone();
    for i in 0..n {
        if !(totals[i] > 0.0) {
            return Err(GlmError::DegenerateRow { row: i });
        }
        let row = mu.rows(i * k, k);
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(GlmError::InvalidMean { family: "poisson", mu: row.min() });
        }
        let s: f64 = row.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(GlmError::DegenerateRow { row: i });
        }
        let f = totals[i] / s;
        for j in 0..k {
            out[i * k + j] = mu[i * k + j] * f;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialFit {
    pub method: Method,
    /// `(k−1) × p`, rows in category order with the baseline skipped.
    pub gamma: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub vcov_gamma: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub baseline: usize,
    pub k: usize,
    pub covariates: DMatrix<f64>,
    /// Final Poisson means, rows of `k`.
    pub fitted: DVector<f64>,
}

impl MultinomialFit {
    /// The `p` coefficients of category `cat`; zeros for the baseline.
    pub fn category_coefficients(&self, cat: usize) -> DVector<f64> {
        let p = self.gamma.ncols();
        if cat == self.baseline {
            return DVector::zeros(p);
        }
        let r = if cat < self.baseline { cat } else { cat - 1 };
        self.gamma.row(r).transpose()
    }

    pub fn gamma_norm(&self) -> f64 {
        self.gamma.amax()
    }
}

/// Rows of `gamma` in `vec` order: category-major, coefficient-minor.
fn gamma_indices(problem: &MultinomialProblem) -> Vec<usize> {
    let p = problem.p();
    problem
        .non_baseline()
        .into_iter()
        .flat_map(|c| (0..p).map(move |l| problem.gamma_column(c, l)))
        .collect()
}

/// λ that makes the row sums of the Poisson means equal the totals, given γ.
fn rescaled_lambda(problem: &MultinomialProblem, spec: &ModelSpec, beta: &mut DVector<f64>) {
    let (n, k) = (problem.n(), problem.k());
    let totals = problem.totals();
    let eta = &spec.x * &*beta;
    for i in 0..n {
        // log-sum-exp of x_iᵀγ_j
        let lin: Vec<f64> = (0..k).map(|j| eta[i * k + j] - beta[i]).collect();
        let mx = lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + lin.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        beta[i] = totals[i].ln() - lse;
    }
}

fn starting_beta(problem: &MultinomialProblem, spec: &ModelSpec) -> Result<DVector<f64>> {
    let (n, k) = (problem.n(), problem.k());
    let totals = problem.totals();
    let mut mu0 = DVector::zeros(n * k);
    for i in 0..n {
        let s: f64 = (0..k).map(|j| problem.counts[(i, j)] + 0.5).sum();
        for j in 0..k {
            mu0[i * k + j] = totals[i] * (problem.counts[(i, j)] + 0.5) / s;
        }
    }
    let z = mu0.map(f64::ln);
    WeightedQr::new(&spec.x, &mu0)?.solve(&z)
}

fn finish(
    problem: &MultinomialProblem,
    spec: &ModelSpec,
    method: Method,
    beta: DVector<f64>,
    converged: bool,
    iterations: usize,
) -> Result<MultinomialFit> {
    let (n, k, p) = (problem.n(), problem.k(), problem.p());
    let mu = (&spec.x * &beta).map(f64::exp);
    let idx = gamma_indices(problem);
    let vcov_full = match WeightedQr::new(&spec.x, &mu) {
        Ok(qr) => qr.xtwx_inverse(),
        Err(_) => DMatrix::from_element(spec.p(), spec.p(), f64::NAN),
    };
    let vcov_gamma = DMatrix::from_fn(idx.len(), idx.len(), |a, b| vcov_full[(idx[a], idx[b])]);
    let gamma = DMatrix::from_fn(k - 1, p, |r, l| beta[n + r * p + l]);
    Ok(MultinomialFit {
        method,
        gamma,
        lambda: beta.rows(0, n).into_owned(),
        vcov_gamma,
        converged,
        iterations,
        baseline: problem.baseline,
        k,
        covariates: problem.covariates.clone(),
        fitted: mu,
    })
}

/// Fits the multinomial model by `method` on the Poisson expansion.
///
/// ML is the plain Poisson fit, whose λ score equations already match the
/// totals. The bias-reducing methods reset λ before every sweep so the
/// Poisson means add up to the row totals, then take one adjusted IWLS step
/// on the expanded model. Convergence is judged on γ, which determines the
/// rescaled state.
pub fn fit_multinomial(problem: &MultinomialProblem, method: Method, control: &FitControl) -> Result<MultinomialFit> {
    control.validate()?;
    let spec = expand_to_poisson(problem)?;
    let n = problem.n();
    match method {
        Method::Ml => {
            let f = fit(&spec, Method::Ml, control)?;
            return finish(problem, &spec, method, f.beta, f.converged, f.iterations);
        }
        Method::CorrectedMl => {
            return Err(GlmError::InvalidArgument(
                "multinomial fits support ml, mean_br, median_br and mixed_br".into(),
            ))
        }
        _ => {}
    }
    let mut beta = match &control.beta_start {
        Some(b) if b.len() == spec.p() => b.clone(),
        Some(b) => {
            return Err(GlmError::Dimension(format!("beta_start has length {}, expected {}", b.len(), spec.p())))
        }
        None => starting_beta(problem, &spec)?,
    };
    rescaled_lambda(problem, &spec, &mut beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=control.max_iterations {
        iterations = it;
        let (proposal, _) = quasi_fisher_step(&spec, method, &beta, 1.0)?;
        let mut step = proposal - &beta;
        let mut halvings = 0;
        let next = loop {
            let mut cand = &beta + &step;
            rescaled_lambda(problem, &spec, &mut cand);
            if cand.iter().all(|v| v.is_finite()) && (&spec.x * &cand).iter().all(|&e| e < 700.0) {
                break cand;
            }
            halvings += 1;
            if halvings > control.max_step_halvings {
                return Err(GlmError::FitFailure { iteration: it, halvings: halvings - 1 });
            }
            step *= 0.5;
        };
        let dg = (next.rows(n, spec.p() - n) - beta.rows(n, spec.p() - n)).amax();
        beta = next;
        if dg <= control.tolerance * (1.0 + beta.rows(n, spec.p() - n).amax()) {
            converged = true;
            break;
        }
    }
    finish(problem, &spec, method, beta, converged, iterations)
}

/// Re-expresses the coefficients against `new_baseline`:
/// `γ′_j = γ_j − γ_new`, `λ′_i = λ_i + x_iᵀγ_new`.
///
/// For mean BR this reproduces a refit with the new baseline. For median BR
/// the transformed values need not be median-BR estimates.
pub fn change_baseline(fit: &MultinomialFit, new_baseline: usize) -> Result<MultinomialFit> {
    let (k, p) = (fit.k, fit.gamma.ncols());
    if new_baseline >= k {
        return Err(GlmError::InvalidArgument(format!("baseline {new_baseline} out of range for k = {k}")));
    }
    let old_cats: Vec<usize> = (0..k).filter(|&j| j != fit.baseline).collect();
    let new_cats: Vec<usize> = (0..k).filter(|&j| j != new_baseline).collect();
    let pos = |cats: &[usize], c: usize| cats.iter().position(|&v| v == c);
    // linear map from old vec(γ) to new vec(γ)
    let dim = (k - 1) * p;
    let mut map: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for (r, &c) in new_cats.iter().enumerate() {
        for l in 0..p {
            if let Some(a) = pos(&old_cats, c) {
                map[(r * p + l, a * p + l)] += 1.0;
            }
            if let Some(b) = pos(&old_cats, new_baseline) {
                map[(r * p + l, b * p + l)] -= 1.0;
            }
        }
    }
    let old_vec: DVector<f64> = DVector::from_fn(dim, |q, _| fit.gamma[(q / p, q % p)]);
    let new_vec = &map * old_vec;
    let gamma = DMatrix::from_fn(k - 1, p, |r, l| new_vec[r * p + l]);
    let shift = &fit.covariates * fit.category_coefficients(new_baseline);
    Ok(MultinomialFit {
        gamma,
        lambda: &fit.lambda + shift,
        vcov_gamma: &map * &fit.vcov_gamma * map.transpose(),
        baseline: new_baseline,
        ..fit.clone()
    })
}

/// Softmax of `(xᵀγ_1, …, xᵀγ_k)` with `γ_baseline = 0`.
pub fn predicted_probs(fit: &MultinomialFit, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != fit.gamma.ncols() {
        return Err(GlmError::Dimension(format!("x has length {}, expected {}", x.len(), fit.gamma.ncols())));
    }
    let lin = DVector::from_iterator(fit.k, (0..fit.k).map(|j| fit.category_coefficients(j).dot(x)));
    let mx = lin.max();
    let e = lin.map(|v| (v - mx).exp());
    let s = e.sum();
    Ok(e / s)
}
