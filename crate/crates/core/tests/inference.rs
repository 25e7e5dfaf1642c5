use adjscore_core::engine::{fit, score_beta, score_phi, FitControl, Method, ModelSpec};
use adjscore_core::inference::{
    adjusted_score_statistic, expected_information, normal_intervals, quantile, theorem1_check, theorem1_gh,
    theorem1_threshold, transform_exp, wald_interval, Distribution,
};
use adjscore_core::sim::{replicate_rng, sample_spec};
use adjscore_core::{DMatrix, DVector, Family, Link};
use proptest::prelude::*;
use rand::Rng;
use std::ops::AddAssign;

fn gaussian_spec(n: usize, seed: u64) -> ModelSpec {
    let mut rng = replicate_rng(seed, 0);
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
    let y = DVector::zeros(n);
    let base = ModelSpec::new(x, y, Family::Gaussian, Link::Identity).unwrap();
    sample_spec(&base, &DVector::from_vec(vec![1.0, 0.5, -0.3]), 0.7, &mut rng).unwrap()
}

fn logistic_spec(n: usize, seed: u64, beta: &[f64]) -> ModelSpec {
    let mut rng = replicate_rng(seed, 0);
    let x = DMatrix::from_fn(n, beta.len(), |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
    let base = ModelSpec::new(x, DVector::zeros(n), Family::Binomial, Link::Logit).unwrap();
    sample_spec(&base, &DVector::from_vec(beta.to_vec()), 1.0, &mut rng).unwrap()
}

/// Expected score under θ₀ evaluated at θ. The score is quadratic in each
/// yᵢ, so averaging over `y = μ₀ ± √φ₀` reproduces the gaussian expectation.
fn expected_score(spec: &ModelSpec, theta0: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let p = spec.p();
    let b0 = theta0.rows(0, p).into_owned();
    let mu0 = &spec.x * &b0;
    let sd0 = theta0[p].sqrt();
    let b = theta.rows(0, p).into_owned();
    let mut total = DVector::zeros(p + 1);
    for sign in [-1.0, 1.0] {
        let y = mu0.map(|m| m + sign * sd0);
        let s = spec.with_response(y).unwrap();
        let sb = score_beta(&s, &b, theta[p]).unwrap();
        total.rows_mut(0, p).add_assign(&(sb * 0.5));
        total[p] += 0.5 * score_phi(&s, &b, theta[p]).unwrap();
    }
    total
}

#[test]
fn information_matches_finite_difference_oracle() {
    let spec = gaussian_spec(25, 3);
    let f = fit(&spec, Method::Ml, &FitControl::default()).unwrap();
    let theta0 = DVector::from_iterator(4, f.beta.iter().copied().chain([f.phi]));
    let d = theta0.len();
    let mut fd_info = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-5 * theta0[j].abs().max(1.0);
        let mut a = theta0.clone();
        let mut b = theta0.clone();
        a[j] += h;
        b[j] -= h;
        let col = -(expected_score(&spec, &theta0, &a) - expected_score(&spec, &theta0, &b)) / (2.0 * h);
        fd_info.set_column(j, &col);
    }
    let info = expected_information(&spec, &f.beta, f.phi).unwrap().to_dense();
    assert!((&info - &fd_info).amax() < 1e-6 * info.amax(), "{info} vs {fd_info}");
    let oracle_vcov = fd_info.try_inverse().unwrap();
    assert!((&f.vcov - &oracle_vcov).amax() < 1e-6 * f.vcov.amax());
}

#[test]
fn statistic_vanishes_at_unconstrained_estimate() {
    let cases = [
        adjscore_core::datasets::clotting_spec(),
        gaussian_spec(30, 1),
        logistic_spec(40, 2, &[0.2, 1.0, -0.5]),
    ];
    for spec in cases {
        for method in [Method::Ml, Method::MeanBr, Method::MedianBr, Method::MixedBr] {
            let f = fit(&spec, method, &FitControl::default()).unwrap();
            let t = adjusted_score_statistic(&spec, &[1], &[f.beta[1]], method, &FitControl::default()).unwrap();
            assert!(t.constrained.converged);
            assert!(t.statistic < 1e-10, "{method} {}: {}", spec.family, t.statistic);
            assert!((t.p_value - 1.0).abs() < 1e-5);
            assert!((&t.constrained.beta - &f.beta).amax() < 1e-7);
        }
    }
}

#[test]
fn gaussian_statistic_closed_form() {
    // mean BR: (n − p)(RSS₀ − RSS₁)/RSS₀, a scaled Beta(½, (n−p)/2) under the null
    let spec = gaussian_spec(40, 8);
    let psi0 = -0.1;
    let t = adjusted_score_statistic(&spec, &[2], &[psi0], Method::MeanBr, &FitControl::default()).unwrap();
    let x0 = spec.x.columns(0, 2).into_owned();
    let y0 = &spec.y - spec.x.column(2) * psi0;
    let b0 = (x0.transpose() * &x0).lu().solve(&(x0.transpose() * &y0)).unwrap();
    let rss0 = (&y0 - &x0 * b0).norm_squared();
    let b1 = (spec.x.transpose() * &spec.x).lu().solve(&(spec.x.transpose() * &spec.y)).unwrap();
    let rss1 = (&spec.y - &spec.x * b1).norm_squared();
    let want = 37.0 * (rss0 - rss1) / rss0;
    assert!((t.statistic - want).abs() < 1e-10 * want.max(1.0), "{} vs {want}", t.statistic);
    assert!((t.constrained.phi - rss0 / 37.0).abs() < 1e-10 * rss0);
}

#[test]
fn statistic_invariant_to_rescaling_nuisance_columns() {
    let spec = adjscore_core::datasets::clotting_spec();
    let mut x = spec.x.clone();
    x.column_mut(0).scale_mut(4.0);
    x.column_mut(3).scale_mut(0.1);
    let scaled = ModelSpec::new(x, spec.y.clone(), spec.family, spec.link).unwrap();
    for method in [Method::Ml, Method::MeanBr, Method::MedianBr, Method::MixedBr] {
        let a = adjusted_score_statistic(&spec, &[2], &[-0.55], method, &FitControl::default()).unwrap();
        let b = adjusted_score_statistic(&scaled, &[2], &[-0.55], method, &FitControl::default()).unwrap();
        assert!(a.statistic > 1.0);
        assert!((a.statistic - b.statistic).abs() < 1e-8 * a.statistic, "{method}: {} {}", a.statistic, b.statistic);
    }
}

#[test]
fn score_and_wald_statistics_agree_as_n_grows() {
    // mean |S − W²| over replicates of a logistic model under the null
    let beta = [0.3, 0.8];
    let mut gaps = Vec::new();
    for n in [50usize, 200, 800] {
        let mut gap = 0.0;
        let reps = 200;
        for r in 0..reps {
            let spec = logistic_spec(n, 100 + r, &beta);
            let f = fit(&spec, Method::Ml, &FitControl::default()).unwrap();
            let w = wald_interval(&f, 1, 0.95).unwrap();
            let se = (w.upper - w.lower) / (2.0 * quantile(Distribution::Normal, 0.975).unwrap());
            let wald = ((f.beta[1] - beta[1]) / se).powi(2);
            let s = adjusted_score_statistic(&spec, &[1], &[beta[1]], Method::Ml, &FitControl::default()).unwrap();
            gap += (s.statistic - wald).abs() / reps as f64;
        }
        gaps.push(gap);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 0.5 * gaps[0], "{gaps:?}");
}

#[test]
fn transform_and_wald_arithmetic() {
    let spec = adjscore_core::datasets::clotting_spec();
    let f = fit(&spec, Method::MedianBr, &FitControl::default()).unwrap();
    let (psi, se) = transform_exp(&f, 0).unwrap();
    assert_eq!(psi, f.beta[0].exp());
    assert!((se - psi * f.beta_se()[0]).abs() < 1e-15 * se);
    let w = wald_interval(&f, 4, 0.9).unwrap();
    assert_eq!(w.estimate, f.phi);
    assert!(w.contains(f.phi));
    assert!(wald_interval(&f, 5, 0.9).is_err());
    assert!(wald_interval(&f, 0, 1.0).is_err());
}

#[test]
fn theorem1_small_grid() {
    for nu in [1usize, 2, 5, 30, 200] {
        for k in 0..175 {
            let alpha = 0.001 + 0.002 * k as f64;
            let r = theorem1_check(nu, alpha).unwrap();
            assert!(r.hat_in_star && r.star_in_exact && r.star_in_dagger && r.dagger_in_exact, "{r:?}");
        }
    }
    let g0 = theorem1_threshold(1, false, 0.2, 0.5).unwrap();
    let h0 = theorem1_threshold(1, true, 0.5, 0.8).unwrap();
    assert!((g0 - 0.35562).abs() < 5e-5, "{g0}");
    assert!((h0 - 0.62647).abs() < 5e-5, "{h0}");
    assert!(!theorem1_check(1, 0.7).unwrap().dagger_closer);
    assert!(theorem1_check(10, 0.05).unwrap().dagger_closer);
}

#[test]
fn normal_intervals_scale_with_rss() {
    let [hat, star, dagger, exact] = normal_intervals(12.0, 20, 3, 0.05, 0.95, 1.5).unwrap();
    let z = quantile(Distribution::Normal, 0.975).unwrap();
    let t = quantile(Distribution::StudentT(17.0), 0.975).unwrap();
    let half = |q: f64, phi: f64| q * (0.05 * phi).sqrt();
    assert!((hat.upper - 1.5 - half(z, 12.0 / 20.0)).abs() < 1e-14);
    assert!((star.upper - 1.5 - half(z, 12.0 / 17.0)).abs() < 1e-14);
    assert!((dagger.upper - 1.5 - half(z, 12.0 / (17.0 - 2.0 / 3.0))).abs() < 1e-14);
    assert!((exact.upper - 1.5 - half(t, 12.0 / 17.0)).abs() < 1e-14);
    assert!(normal_intervals(1.0, 3, 3, 1.0, 0.95, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nesting_holds_off_grid(nu in 1usize..400, alpha in 0.0005f64..0.35) {
        let r = theorem1_check(nu, alpha).unwrap();
        prop_assert!(r.hat_in_star && r.star_in_exact && r.star_in_dagger && r.dagger_in_exact);
        let (g, _) = theorem1_gh(nu, alpha).unwrap();
        prop_assert!(g > 0.0 || nu == 1);
    }

    #[test]
    fn dagger_closer_for_nu_at_least_two(nu in 2usize..400, alpha in 0.001f64..0.999) {
        prop_assert!(theorem1_check(nu, alpha).unwrap().dagger_closer);
    }
}
