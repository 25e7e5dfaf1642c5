//! Oracles and fixtures shared by the integration targets.
#![allow(dead_code)]

use adjscore_core::engine::ModelSpec;
use adjscore_core::multinomial::MultinomialProblem;
use adjscore_core::sim::{replicate_rng, sample_spec};
use adjscore_core::{DMatrix, DVector, Family, Link};
use rand::Rng;

/// Newton ascent with central-difference gradient and Hessian.
pub fn maximize(f: impl Fn(&DVector<f64>) -> f64, start: DVector<f64>) -> DVector<f64> {
    let d = start.len();
    let mut x = start;
    let grad = |x: &DVector<f64>| {
        let h = 1e-6;
        DVector::from_fn(d, |j, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
    };
    for _ in 0..200 {
        let g = grad(&x);
        let h = 1e-4;
        let mut hess = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            hess.set_column(j, &((grad(&a) - grad(&b)) / (2.0 * h)));
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let mut step = hess.lu().solve(&(-&g)).unwrap();
        // ascent with backtracking
        let f0 = f(&x);
        while f(&(&x + &step)) < f0 - 1e-12 && step.amax() > 1e-14 {
            step *= 0.5;
        }
        x += &step;
        if step.amax() < 1e-11 {
            break;
        }
    }
    x
}

/// Penalized log-likelihood ℓ(β) + ½ log det(XᵀWX) for binomial/logit and
/// poisson/log, written from the densities.
pub fn jeffreys_objective(spec: &ModelSpec, beta: &DVector<f64>) -> f64 {
    let eta = &spec.x * beta;
    let mut ll = 0.0;
    let mut w = DVector::zeros(spec.n());
    for i in 0..spec.n() {
        let (y, m, e) = (spec.y[i], spec.m[i], eta[i]);
        match spec.family {
            Family::Binomial => {
                let mu = 1.0 / (1.0 + (-e).exp());
                ll += m * (y * e - (1.0 + e.exp()).ln());
                w[i] = m * mu * (1.0 - mu);
            }
            Family::Poisson => {
                ll += m * (y * e - e.exp());
                w[i] = m * e.exp();
            }
            _ => unreachable!(),
        }
    }
    let xtwx = spec.x.transpose() * DMatrix::from_diagonal(&w) * &spec.x;
    ll + 0.5 * xtwx.determinant().ln()
}

/// Small binomial/logit and poisson/log datasets.
pub fn jeffreys_cases() -> Vec<ModelSpec> {
    let logistic = {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -1.2, 1.0, -0.5, 1.0, 0.0, 1.0, 0.3, 1.0, 0.9, 1.0, 1.6]);
        let y = DVector::from_vec(vec![0.25, 0.0, 0.5, 0.75, 0.5, 1.0]);
        ModelSpec::new(x, y, Family::Binomial, Link::Logit).unwrap().with_weights(DVector::from_element(6, 4.0)).unwrap()
    };
    let binary = {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        ModelSpec::new(x, y, Family::Binomial, Link::Logit).unwrap()
    };
    let separated = {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.5, 1.0, -0.5, 1.0, 0.5, 1.0, 1.5]);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        ModelSpec::new(x, y, Family::Binomial, Link::Logit).unwrap()
    };
    let poisson = {
        let x = DMatrix::from_row_slice(7, 2, &[1.0, -1.0, 1.0, -0.6, 1.0, -0.2, 1.0, 0.1, 1.0, 0.5, 1.0, 0.8, 1.0, 1.2]);
        let y = DVector::from_vec(vec![0.0, 1.0, 1.0, 3.0, 2.0, 5.0, 4.0]);
        ModelSpec::new(x, y, Family::Poisson, Link::Log).unwrap()
    };
    let poisson3 = {
        let x = DMatrix::from_row_slice(
            8,
            3,
            &[1.0, 0.0, 0.2, 1.0, 0.0, 0.9, 1.0, 0.0, 1.4, 1.0, 0.0, 2.0, 1.0, 1.0, 0.3, 1.0, 1.0, 0.8, 1.0, 1.0, 1.6, 1.0, 1.0, 2.2],
        );
        let y = DVector::from_vec(vec![1.0, 0.0, 2.0, 4.0, 0.0, 1.0, 1.0, 3.0]);
        ModelSpec::new(x, y, Family::Poisson, Link::Log).unwrap()
    };
    vec![logistic, binary, separated, poisson, poisson3]
}

/// Newton's method on the multinomial log-likelihood with a finite-difference
/// Hessian; coefficients are category-major.
pub fn direct_multinomial_ml(pr: &MultinomialProblem) -> Vec<f64> {
    let (n, k, p) = (pr.n(), pr.k(), pr.p());
    let dim = (k - 1) * p;
    let grad = |g: &[f64]| {
        let mut out = vec![0.0; dim];
        for i in 0..n {
            let xi = pr.covariates.row(i);
            let mut lin = vec![0.0; k];
            for c in 0..k - 1 {
                lin[c] = (0..p).map(|l| xi[l] * g[c * p + l]).sum();
            }
            let z: f64 = lin.iter().map(|v| v.exp()).sum();
            let mi: f64 = pr.counts.row(i).sum();
            for c in 0..k - 1 {
                let pi = lin[c].exp() / z;
                for l in 0..p {
                    out[c * p + l] += xi[l] * (pr.counts[(i, c)] - mi * pi);
                }
            }
        }
        out
    };
    let mut g = vec![0.0; dim];
    for _ in 0..100 {
        let s = grad(&g);
        let h = 1e-6;
        let mut hess = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp[b] += h;
            gm[b] -= h;
            let (sp, sm) = (grad(&gp), grad(&gm));
            for a in 0..dim {
                hess[(a, b)] = (sp[a] - sm[a]) / (2.0 * h);
            }
        }
        let step = hess.lu().solve(&DVector::from_vec(s.clone())).unwrap();
        for a in 0..dim {
            g[a] -= step[a];
        }
        if step.amax() < 1e-13 {
            break;
        }
    }
    g
}

pub fn three_category() -> MultinomialProblem {
    let counts = DMatrix::from_row_slice(4, 3, &[5.0, 2.0, 3.0, 1.0, 4.0, 2.0, 3.0, 3.0, 6.0, 0.0, 5.0, 2.0]);
    let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 0.5, 1.0, 1.5]);
    MultinomialProblem::new(counts, x).unwrap()
}

pub fn binary_multinomial() -> MultinomialProblem {
    let counts = DMatrix::from_row_slice(5, 2, &[3.0, 5.0, 4.0, 2.0, 1.0, 6.0, 7.0, 2.0, 2.0, 2.0]);
    let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.2, 1.0, 1.1, 1.0, -0.7, 1.0, 2.0, 1.0, 0.4]);
    MultinomialProblem::new(counts, x).unwrap()
}

pub fn random_binary(seed: u64, n: usize, beta: &[f64]) -> ModelSpec {
    let mut rng = replicate_rng(seed, 7);
    let x = DMatrix::from_fn(n, beta.len(), |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
    let base = ModelSpec::new(x, DVector::zeros(n), Family::Binomial, Link::Logit).unwrap();
    sample_spec(&base, &DVector::from_vec(beta.to_vec()), 1.0, &mut rng).unwrap()
}

/// 50 random binary datasets plus one completely and one quasi-completely
/// separated construction.
pub fn separation_corpus() -> Vec<ModelSpec> {
    let mut corpus: Vec<ModelSpec> =
        (0..50u64).map(|seed| random_binary(seed, 8 + (seed as usize % 5) * 4, &[0.0, 2.5, -2.0])).collect();
    let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let xs = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
    corpus.push(ModelSpec::new(xs, y.clone(), Family::Binomial, Link::Logit).unwrap());
    let xq = DMatrix::from_row_slice(6, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
    corpus.push(ModelSpec::new(xq, y, Family::Binomial, Link::Logit).unwrap());
    corpus
}
