//! Expected information, Wald intervals, the adjusted score statistic and
//! interval calculus for the normal linear model.

mod quantile;

pub use quantile::{quantile, Distribution};

use crate::engine::{adjusted_scores, working_quantities, FitControl, FitResult, Method, ModelSpec};
use crate::error::{GlmError, Result};
use crate::linalg::WeightedQr;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Block-diagonal expected information: `φ⁻¹XᵀWX` for β and
/// `(2φ⁴)⁻¹Σm²a″` for φ.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix {
    pub beta_block: DMatrix<f64>,
    /// `None` when the dispersion is known.
    pub phi_entry: Option<f64>,
}

impl InformationMatrix {
    pub fn dim(&self) -> usize {
        self.beta_block.nrows() + usize::from(self.phi_entry.is_some())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.beta_block.nrows();
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m.view_mut((0, 0), (p, p)).copy_from(&self.beta_block);
        if let Some(v) = self.phi_entry {
            m[(p, p)] = v;
        }
        m
    }

    /// Inverse, blockwise.
    pub fn vcov(&self) -> Result<DMatrix<f64>> {
        let p = self.beta_block.nrows();
        let inv = self
            .beta_block
            .clone()
            .cholesky()
            .ok_or(GlmError::SingularInformation)?
            .inverse();
        let mut v = DMatrix::zeros(self.dim(), self.dim());
        v.view_mut((0, 0), (p, p)).copy_from(&inv);
        if let Some(e) = self.phi_entry {
            if !(e > 0.0) {
                return Err(GlmError::SingularInformation);
            }
            v[(p, p)] = 1.0 / e;
        }
        Ok(v)
    }
}

pub fn expected_information(spec: &ModelSpec, beta: &DVector<f64>, phi: f64) -> Result<InformationMatrix> {
    let wq = working_quantities(spec, beta, phi)?;
    // rank check on the weighted design
    WeightedQr::new(&spec.x, &wq.w).map_err(|_| GlmError::SingularInformation)?;
    let xw = DMatrix::from_fn(spec.n(), spec.p(), |i, j| spec.x[(i, j)] * wq.w[i]);
    let mut beta_block = spec.x.transpose() * xw / phi;
    beta_block = (&beta_block + beta_block.transpose()) * 0.5;
    let phi_entry = if spec.family.dispersion_known() {
        None
    } else {
        let mut s2 = 0.0;
        for &mi in spec.m.iter() {
            s2 += mi * mi * spec.family.a_derivatives(mi, phi)?.a2;
        }
        Some(s2 / (2.0 * phi.powi(4)))
    };
    Ok(InformationMatrix { beta_block, phi_entry })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// Plug-in Wald interval from a fitted model.
    Wald,
    /// Normal quantile with `φ̂ = rss/n`.
    Hat,
    /// Normal quantile with `φ* = rss/(n−p)`.
    Star,
    /// Normal quantile with `φ† = rss/(n−p−2/3)`.
    Dagger,
    /// t quantile with `φ*`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSet {
    pub kind: IntervalKind,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// `[(XᵀX)⁻¹]_jj` for the normal-model intervals.
    pub kappa: Option<f64>,
}

impl IntervalSet {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Closed-interval inclusion `self ⊆ other`.
    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        other.lower <= self.lower && self.upper <= other.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(GlmError::InvalidArgument(format!("level must be in (0, 1), got {level}")))
    }
}

/// `estimate ± z·SE` for parameter `j`; `j = p` selects φ when it is estimated.
pub fn wald_interval(fit: &FitResult, j: usize, level: f64) -> Result<IntervalSet> {
    check_level(level)?;
    let p = fit.beta.len();
    let estimate = if j < p {
        fit.beta[j]
    } else if j == p && !fit.dispersion_known {
        fit.phi
    } else {
        return Err(GlmError::InvalidArgument(format!("parameter index {j} out of range")));
    };
    let se = fit.vcov[(j, j)].max(0.0).sqrt();
    let z = quantile(Distribution::Normal, 0.5 * (1.0 + level))?;
    Ok(IntervalSet {
        kind: IntervalKind::Wald,
        estimate,
        lower: estimate - z * se,
        upper: estimate + z * se,
        level,
        kappa: None,
    })
}

/// `(e^{β_j}, e^{β_j}·SE_j)` by first-order propagation.
///
/// The map is monotone, so `exp` of a median-BR estimate is the median-BR
/// estimate of `e^{β_j}`. The same is not true of mean BR.
pub fn transform_exp(fit: &FitResult, j: usize) -> Result<(f64, f64)> {
    if j >= fit.beta.len() {
        return Err(GlmError::InvalidArgument(format!("coefficient index {j} out of range")));
    }
    let psi = fit.beta[j].exp();
    Ok((psi, psi * fit.vcov[(j, j)].max(0.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// The fit with ψ held at ψ₀; check `converged` before trusting the statistic.
    pub constrained: FitResult,
}

/// Quadratic form `(s_ψ + A_ψ)ᵀ i^{ψψ} (s_ψ + A_ψ)` at `(ψ₀, λ̂_ψ)`, where
/// `λ̂_ψ` solves the λ-components of the method's adjusted score equations.
/// The adjustments are the full-model ones; `i^{ψψ}` is the ψ block of the
/// inverse expected information at the constrained estimate.
pub fn adjusted_score_statistic(
    spec: &ModelSpec,
    psi_index: &[usize],
    psi0: &[f64],
    method: Method,
    control: &FitControl,
) -> Result<ScoreTest> {
    let p = spec.p();
    if psi_index.is_empty() || psi_index.len() >= p || psi_index.len() != psi0.len() {
        return Err(GlmError::InvalidArgument(
            "psi must be a nonempty proper subset of the coefficients with one null value each".into(),
        ));
    }
    let fixed: Vec<(usize, f64)> = psi_index.iter().copied().zip(psi0.iter().copied()).collect();
    let constrained = crate::engine::fit_constrained(spec, method, control, &fixed)?;
    let scores = adjusted_scores(spec, method, &constrained.beta, constrained.phi)?;
    let s = DVector::from_iterator(psi_index.len(), psi_index.iter().map(|&j| scores.beta[j]));
    let v = DMatrix::from_fn(psi_index.len(), psi_index.len(), |a, b| {
        constrained.vcov[(psi_index[a], psi_index[b])]
    });
    let statistic = (s.transpose() * v * &s)[(0, 0)].max(0.0);
    let dof = psi_index.len();
    let p_value = Distribution::ChiSquare(dof as f64).survival(statistic);
    Ok(ScoreTest { statistic, dof, p_value, constrained })
}

/// The four normal-model intervals for a coefficient with least-squares
/// estimate `center` and `kappa = [(XᵀX)⁻¹]_jj`, ordered hat, star, dagger, exact.
pub fn normal_intervals(
    rss: f64,
    n: usize,
    p: usize,
    kappa: f64,
    level: f64,
    center: f64,
) -> Result<[IntervalSet; 4]> {
    check_level(level)?;
    if n <= p {
        return Err(GlmError::DegreesOfFreedom { n, p });
    }
    if !(rss > 0.0) || !(kappa > 0.0) {
        return Err(GlmError::InvalidArgument("rss and kappa must be positive".into()));
    }
    let nu = (n - p) as f64;
    let prob = 0.5 * (1.0 + level);
    let z = quantile(Distribution::Normal, prob)?;
    let t = quantile(Distribution::StudentT(nu), prob)?;
    let make = |kind, q: f64, phi: f64| {
        let half = q * (kappa * phi).sqrt();
        IntervalSet { kind, estimate: center, lower: center - half, upper: center + half, level, kappa: Some(kappa) }
    };
    Ok([
        make(IntervalKind::Hat, z, rss / n as f64),
        make(IntervalKind::Star, z, rss / nu),
        make(IntervalKind::Dagger, z, rss / (nu - 2.0 / 3.0)),
        make(IntervalKind::Exact, t, rss / nu),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Record {
    pub nu: usize,
    pub alpha: f64,
    pub g: f64,
    pub h: f64,
    pub hat_in_star: bool,
    pub star_in_exact: bool,
    pub star_in_dagger: bool,
    pub dagger_in_exact: bool,
    /// `|Len(I†) − Len(I^E)| < |Len(I*) − Len(I^E)|`
    pub dagger_closer: bool,
}

/// `g(ν,α) = √((ν−2/3)/ν)·t − z` and `h(ν,α) = 2t/√ν − z/√(ν−2/3) − z/√ν`
/// with `t = t_{ν;1−α/2}` and `z = z_{1−α/2}`.
pub fn theorem1_gh(nu: usize, alpha: f64) -> Result<(f64, f64)> {
    if nu == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(GlmError::InvalidArgument(format!("need nu ≥ 1 and alpha in (0,1), got ({nu}, {alpha})")));
    }
    let v = nu as f64;
    let prob = 1.0 - 0.5 * alpha;
    let t = quantile(Distribution::StudentT(v), prob)?;
    let z = quantile(Distribution::Normal, prob)?;
    let g = ((v - 2.0 / 3.0) / v).sqrt() * t - z;
    let h = 2.0 * t / v.sqrt() - z / (v - 2.0 / 3.0).sqrt() - z / v.sqrt();
    Ok((g, h))
}

/// Evaluates `g`, `h` and the interval comparisons they encode. The
/// intervals are built with `p = 1`, unit `rss` and `kappa`; inclusions only
/// depend on the half-widths.
pub fn theorem1_check(nu: usize, alpha: f64) -> Result<Theorem1Record> {
    let (g, h) = theorem1_gh(nu, alpha)?;
    let [hat, star, dagger, exact] = normal_intervals(1.0, nu + 1, 1, 1.0, 1.0 - alpha, 0.0)?;
    let le = exact.length();
    Ok(Theorem1Record {
        nu,
        alpha,
        g,
        h,
        hat_in_star: hat.is_subset_of(&star),
        star_in_exact: star.is_subset_of(&exact),
        star_in_dagger: star.is_subset_of(&dagger),
        dagger_in_exact: dagger.is_subset_of(&exact),
        dagger_closer: (dagger.length() - le).abs() < (star.length() - le).abs(),
    })
}

/// The α in `(lo, hi)` at which `f(ν, ·)` changes sign, by bisection.
pub fn theorem1_threshold(nu: usize, use_h: bool, lo: f64, hi: f64) -> Result<f64> {
    let f = |a: f64| theorem1_gh(nu, a).map(|(g, h)| if use_h { h } else { g });
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)?;
    if fa.signum() == f(b)?.signum() {
        return Err(GlmError::InvalidArgument("no sign change in the bracket".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(mid)?.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{fit, FitControl};
    use crate::families::{Family, Link};

    fn orthonormal_spec() -> ModelSpec {
        // columns (1,1,1,1)/2 and (1,−1,1,−1)/2
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0]);
        ModelSpec::new(x, y, Family::Gaussian, Link::Identity).unwrap()
    }

    #[test]
    fn information_identity_for_orthonormal_design() {
        let spec = orthonormal_spec();
        let info = expected_information(&spec, &DVector::zeros(2), 1.0).unwrap();
        assert!((info.beta_block.clone() - DMatrix::identity(2, 2)).amax() < 1e-15);
        // n/(2φ²) at φ = 1.7
        let info = expected_information(&spec, &DVector::zeros(2), 1.7).unwrap();
        assert!((info.phi_entry.unwrap() - 4.0 / (2.0 * 1.7 * 1.7)).abs() < 1e-14);
        let dense = info.to_dense();
        assert_eq!(dense[(0, 2)], 0.0);
        assert_eq!(dense[(2, 1)], 0.0);
    }

    #[test]
    fn singular_information_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let spec = ModelSpec::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0]), Family::Gaussian, Link::Identity).unwrap();
        assert!(matches!(
            expected_information(&spec, &DVector::zeros(2), 1.0),
            Err(GlmError::SingularInformation)
        ));
    }

    #[test]
    fn fit_vcov_is_inverse_information() {
        let spec = crate::datasets::clotting_spec();
        let f = fit(&spec, Method::MeanBr, &FitControl::default()).unwrap();
        let v = expected_information(&spec, &f.beta, f.phi).unwrap().vcov().unwrap();
        assert!((v - &f.vcov).amax() < 1e-12);
    }

    #[test]
    fn transform_exp_arithmetic() {
        let spec = orthonormal_spec();
        let mut f = fit(&spec, Method::Ml, &FitControl::default()).unwrap();
        f.beta[0] = 2f64.ln();
        f.vcov[(0, 0)] = 0.25;
        let (psi, se) = transform_exp(&f, 0).unwrap();
        assert!((psi - 2.0).abs() < 1e-15 && (se - 1.0).abs() < 1e-15);
        f.beta[1] = 0.0;
        assert_eq!(transform_exp(&f, 1).unwrap().0, 1.0);
        assert!(transform_exp(&f, 2).is_err());
    }

    #[test]
    fn wald_degenerate_and_phi() {
        let spec = orthonormal_spec();
        let mut f = fit(&spec, Method::Ml, &FitControl::default()).unwrap();
        f.vcov[(1, 1)] = 0.0;
        let i = wald_interval(&f, 1, 0.95).unwrap();
        assert_eq!((i.lower, i.upper), (f.beta[1], f.beta[1]));
        let iphi = wald_interval(&f, 2, 0.9).unwrap();
        assert_eq!(iphi.estimate, f.phi);
        assert!(wald_interval(&f, 3, 0.9).is_err());
        assert!(wald_interval(&f, 0, 1.0).is_err());
    }

    #[test]
    fn normal_intervals_nested() {
        let [hat, star, dagger, exact] = normal_intervals(3.0, 12, 2, 0.2, 0.95, 1.0).unwrap();
        assert!(hat.is_subset_of(&star) && star.is_subset_of(&exact));
        assert!(star.is_subset_of(&dagger) && dagger.is_subset_of(&exact));
        let [a, b, c, d] = normal_intervals(3.0, 1_000_002, 2, 0.2, 0.95, 1.0).unwrap();
        for i in [&b, &c, &d] {
            assert!((i.length() / a.length() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn theorem1_examples() {
        assert!(theorem1_check(1, 0.3).unwrap().g > 0.0);
        assert!(theorem1_check(1, 0.7).unwrap().h < 0.0);
        let r = theorem1_check(30, 0.05).unwrap();
        assert!(r.g > 0.0 && r.h > 0.0 && r.dagger_in_exact && r.dagger_closer);
    }
}
