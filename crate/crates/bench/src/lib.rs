//! Fixtures shared by the benchmarks.

use adjscore_core::engine::ModelSpec;
use adjscore_core::sim::{replicate_rng, sample_spec};
use adjscore_core::{DMatrix, DVector, Family, Link};

/// Intercept plus `p − 1` covariates spread over (−1, 1) by a fixed
/// low-discrepancy sequence, so fixtures are identical across runs.
pub fn design(n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            let golden = 0.618_033_988_749_895 * (j as f64 + 1.0);
            2.0 * ((i as f64 + 0.5) * golden).fract() - 1.0
        }
    })
}

/// A response drawn from the model at `beta = (0.5, 1, −1, 1, ...)`, `phi`.
pub fn problem(n: usize, p: usize, family: Family, link: Link, phi: f64) -> ModelSpec {
    let x = design(n, p);
    let beta = DVector::from_fn(p, |j, _| if j == 0 { 0.5 } else if j % 2 == 1 { 1.0 } else { -1.0 });
    let base = ModelSpec::new(x, DVector::from_element(n, 1.0), family, link).expect("fixture design is valid");
    let base = if family == Family::Binomial {
        base.with_response(DVector::from_element(n, 0.5)).expect("valid proportion")
    } else {
        base
    };
    sample_spec(&base, &beta, phi, &mut replicate_rng(2024, 0)).expect("fixture parameters are valid")
}

pub fn logistic(n: usize, p: usize) -> ModelSpec {
    problem(n, p, Family::Binomial, Link::Logit, 1.0)
}

pub fn gamma(n: usize, p: usize) -> ModelSpec {
    problem(n, p, Family::Gamma, Link::Log, 0.2)
}
