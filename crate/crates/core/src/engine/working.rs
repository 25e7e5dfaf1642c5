use super::{Adjustment, Method, ModelSpec};
use crate::error::{GlmError, Result};
use crate::linalg::{htilde_from_inverse, WeightedQr};
use nalgebra::{DMatrix, DVector};

/// Per-observation IWLS quantities at `(β, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingQuantities {
    pub eta: DVector<f64>,
    pub mu: DVector<f64>,
    pub d: DVector<f64>,
    pub d_prime: DVector<f64>,
    pub v: DVector<f64>,
    pub v_prime: DVector<f64>,
    /// `m d²/v`
    pub w: DVector<f64>,
    /// `η + (y − μ)/d`
    pub z: DVector<f64>,
    /// unit deviances
    pub q: DVector<f64>,
    /// `E(q)`; absent when the dispersion is known
    pub rho: Option<DVector<f64>>,
}

pub fn working_quantities(spec: &ModelSpec, beta: &DVector<f64>, phi: f64) -> Result<WorkingQuantities> {
    let (n, p) = spec.x.shape();
    if beta.len() != p {
        return Err(GlmError::Dimension(format!(
            "beta has length {} but the design has {p} columns",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GlmError::InvalidState("non-finite coefficients".into()));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(GlmError::InvalidState(format!("dispersion {phi} is not positive")));
    }
    let family = spec.family;
    let eta = &spec.x * beta + &spec.offset;
    let mut wq = WorkingQuantities {
        eta: eta.clone(),
        mu: DVector::zeros(n),
        d: DVector::zeros(n),
        d_prime: DVector::zeros(n),
        v: DVector::zeros(n),
        v_prime: DVector::zeros(n),
        w: DVector::zeros(n),
        z: DVector::zeros(n),
        q: DVector::zeros(n),
        rho: (!family.dispersion_known()).then(|| DVector::zeros(n)),
    };
    for i in 0..n {
        let lq = spec.link.quantities(eta[i]);
        let (v, v_prime) = family.variance_parts(lq.mu, lq.mu_c)?;
        if !(lq.d != 0.0) || !lq.d.is_finite() || !lq.d_prime.is_finite() {
            return Err(GlmError::SingularLink { index: i });
        }
        let w = spec.m[i] * lq.d * lq.d / v;
        let z = eta[i] + (spec.y[i] - lq.mu) / lq.d;
        if !(w > 0.0) || !w.is_finite() || !z.is_finite() {
            return Err(GlmError::InvalidState(format!("working weight or variate non-finite at row {i}")));
        }
        wq.mu[i] = lq.mu;
        wq.d[i] = lq.d;
        wq.d_prime[i] = lq.d_prime;
        wq.v[i] = v;
        wq.v_prime[i] = v_prime;
        wq.w[i] = w;
        wq.z[i] = z;
        wq.q[i] = family.unit_deviance_parts(spec.y[i], lq.mu, lq.mu_c, spec.m[i])?;
        if let Some(rho) = wq.rho.as_mut() {
            rho[i] = family.expected_deviance(spec.m[i], phi)?;
        }
    }
    Ok(wq)
}

fn score_beta_from(spec: &ModelSpec, wq: &WorkingQuantities, phi: f64) -> DVector<f64> {
    // φ⁻¹ Xᵀ W (z − η)
    let r = DVector::from_iterator(
        wq.w.len(),
        (0..wq.w.len()).map(|i| wq.w[i] * (spec.y[i] - wq.mu[i]) / wq.d[i]),
    );
    spec.x.transpose() * r / phi
}

fn score_phi_from(wq: &WorkingQuantities, phi: f64) -> Option<f64> {
    wq.rho.as_ref().map(|rho| {
        let s: f64 = wq.q.iter().zip(rho.iter()).map(|(q, r)| q - r).sum();
        s / (2.0 * phi * phi)
    })
}

/// `s_β = φ⁻¹ XᵀWD⁻¹(y − μ)`.
pub fn score_beta(spec: &ModelSpec, beta: &DVector<f64>, phi: f64) -> Result<DVector<f64>> {
    let wq = working_quantities(spec, beta, phi)?;
    Ok(score_beta_from(spec, &wq, phi))
}

/// `s_φ = Σ(qᵢ − ρᵢ)/(2φ²)`.
pub fn score_phi(spec: &ModelSpec, beta: &DVector<f64>, phi: f64) -> Result<f64> {
    if spec.family.dispersion_known() {
        return Err(GlmError::DispersionKnown {
            family: spec.family.name(),
            what: "the dispersion score",
        });
    }
    let wq = working_quantities(spec, beta, phi)?;
    Ok(score_phi_from(&wq, phi).expect("dispersion unknown"))
}

/// `(Σ m² a″, Σ m³ a‴)` at φ.
pub fn dispersion_sums(spec: &ModelSpec, phi: f64) -> Result<(f64, f64)> {
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for &m in spec.m.iter() {
        let a = spec.family.a_derivatives(m, phi)?;
        s2 += m * m * a.a2;
        s3 += m * m * m * a.a3;
    }
    Ok((s2, s3))
}

fn mean_a_phi(p: usize, phi: f64, s2: f64, s3: f64) -> f64 {
    (p as f64 - 2.0) / (2.0 * phi) + s3 / (2.0 * phi * phi * s2)
}

fn median_a_phi(p: usize, phi: f64, s2: f64, s3: f64) -> f64 {
    p as f64 / (2.0 * phi) + s3 / (6.0 * phi * phi * s2)
}

fn xi_from(wq: &WorkingQuantities, hat: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        hat.len(),
        (0..hat.len()).map(|i| hat[i] * wq.d_prime[i] / (2.0 * wq.d[i] * wq.w[i])),
    )
}

/// `d v′/(6v) − d′/(2d)` at each observation.
fn median_core(wq: &WorkingQuantities) -> DVector<f64> {
    DVector::from_iterator(
        wq.d.len(),
        (0..wq.d.len()).map(|i| {
            wq.d[i] * wq.v_prime[i] / (6.0 * wq.v[i]) - wq.d_prime[i] / (2.0 * wq.d[i])
        }),
    )
}

fn u_from(x: &DMatrix<f64>, wq: &WorkingQuantities, inv: &DMatrix<f64>) -> Result<DVector<f64>> {
    let core = median_core(wq);
    let xc = x * inv;
    let p = x.ncols();
    let mut u = DVector::zeros(p);
    for j in 0..p {
        let ht = htilde_from_inverse(x, &wq.w, inv, j)?;
        u[j] = (0..x.nrows()).map(|i| xc[(i, j)] * ht[i] * core[i]).sum();
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAdjustment {
    /// `XᵀWξ`
    pub a_beta: DVector<f64>,
    /// `(p−2)/(2φ) + Σm³a‴/(2φ²Σm²a″)`; absent for known dispersion
    pub a_phi: Option<f64>,
    pub xi: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianAdjustment {
    /// `XᵀW(ξ + Xu)`
    pub a_beta: DVector<f64>,
    /// `p/(2φ) + Σm³a‴/(6φ²Σm²a″)`; absent for known dispersion
    pub a_phi: Option<f64>,
    pub u: DVector<f64>,
    pub xi: DVector<f64>,
}

fn check_hat(spec: &ModelSpec, hat: &DVector<f64>) -> Result<()> {
    if hat.len() != spec.n() {
        return Err(GlmError::Dimension(format!(
            "hat has length {}, expected {}",
            hat.len(),
            spec.n()
        )));
    }
    Ok(())
}

pub fn mean_adjustments(
    spec: &ModelSpec,
    beta: &DVector<f64>,
    phi: f64,
    hat: &DVector<f64>,
) -> Result<MeanAdjustment> {
    check_hat(spec, hat)?;
    let wq = working_quantities(spec, beta, phi)?;
    let xi = xi_from(&wq, hat);
    let a_beta = spec.x.transpose() * xi.component_mul(&wq.w);
    let a_phi = if spec.family.dispersion_known() {
        None
    } else {
        let (s2, s3) = dispersion_sums(spec, phi)?;
        Some(mean_a_phi(spec.p(), phi, s2, s3))
    };
    Ok(MeanAdjustment { a_beta, a_phi, xi })
}

pub fn median_adjustments(
    spec: &ModelSpec,
    beta: &DVector<f64>,
    phi: f64,
    hat: &DVector<f64>,
) -> Result<MedianAdjustment> {
    check_hat(spec, hat)?;
    let wq = working_quantities(spec, beta, phi)?;
    let inv = WeightedQr::new(&spec.x, &wq.w)?.xtwx_inverse();
    let xi = xi_from(&wq, hat);
    let u = u_from(&spec.x, &wq, &inv)?;
    let shifted = &xi + &spec.x * &u;
    let a_beta = spec.x.transpose() * shifted.component_mul(&wq.w);
    let a_phi = if spec.family.dispersion_known() {
        None
    } else {
        let (s2, s3) = dispersion_sums(spec, phi)?;
        Some(median_a_phi(spec.p(), phi, s2, s3))
    };
    Ok(MedianAdjustment { a_beta, a_phi, u, xi })
}

/// Adjusted scores `s + A` for a method, evaluated with the full-model
/// adjustment at `(β, φ)` on the φ scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedScores {
    pub beta: DVector<f64>,
    pub phi: Option<f64>,
}

pub fn adjusted_scores(
    spec: &ModelSpec,
    method: Method,
    beta: &DVector<f64>,
    phi: f64,
) -> Result<AdjustedScores> {
    let ev = Evaluation::new(spec, method, beta, phi)?;
    Ok(AdjustedScores {
        beta: ev.adjusted_beta_score(),
        phi: ev.adjusted_phi_score(),
    })
}

/// Everything one adjusted IWLS sweep needs at the current iterate.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub method: Method,
    pub phi: f64,
    pub wq: WorkingQuantities,
    pub qr: WeightedQr,
    pub inv: DMatrix<f64>,
    pub hat: DVector<f64>,
    pub xi: DVector<f64>,
    pub u: DVector<f64>,
    pub s_beta: DVector<f64>,
    pub s_phi: Option<f64>,
    pub s2: f64,
    pub s3: f64,
    /// `diag(XᵀWX)/φ`
    pub info_beta_diag: DVector<f64>,
    x_u: DVector<f64>,
    xtw: DMatrix<f64>,
    p: usize,
}

impl Evaluation {
    pub fn new(spec: &ModelSpec, method: Method, beta: &DVector<f64>, phi: f64) -> Result<Self> {
        let wq = working_quantities(spec, beta, phi)?;
        let qr = WeightedQr::new(&spec.x, &wq.w)?;
        let inv = qr.xtwx_inverse();
        let hat = qr.hat();
        let xi = xi_from(&wq, &hat);
        let u = if method.beta_adjustment() == Adjustment::Median {
            u_from(&spec.x, &wq, &inv)?
        } else {
            DVector::zeros(spec.p())
        };
        let (s2, s3) = if spec.family.dispersion_known() {
            (f64::NAN, f64::NAN)
        } else {
            dispersion_sums(spec, phi)?
        };
        let s_beta = score_beta_from(spec, &wq, phi);
        let s_phi = score_phi_from(&wq, phi);
        let x_u = &spec.x * &u;
        let xtw = {
            let mut t = spec.x.transpose();
            for (i, mut col) in t.column_iter_mut().enumerate() {
                col *= wq.w[i];
            }
            t
        };
        let info_beta_diag = DVector::from_fn(spec.p(), |j, _| {
            xtw.row(j).iter().zip(spec.x.column(j).iter()).map(|(a, b)| a * b).sum::<f64>() / phi
        });
        Ok(Evaluation {
            method,
            phi,
            wq,
            qr,
            inv,
            hat,
            xi,
            u,
            s_beta,
            s_phi,
            s2,
            s3,
            info_beta_diag,
            x_u,
            xtw,
            p: spec.p(),
        })
    }

    /// Working variate shift added to `z` in the β step.
    pub fn variate_shift(&self) -> DVector<f64> {
        match self.method.beta_adjustment() {
            Adjustment::None => DVector::zeros(self.xi.len()),
            Adjustment::Mean => &self.xi * self.phi,
            Adjustment::Median => (&self.xi + &self.x_u) * self.phi,
        }
    }

    pub fn a_beta(&self) -> DVector<f64> {
        match self.method.beta_adjustment() {
            Adjustment::None => DVector::zeros(self.p),
            Adjustment::Mean => &self.xtw * &self.xi,
            Adjustment::Median => &self.xtw * (&self.xi + &self.x_u),
        }
    }

    pub fn a_phi(&self) -> Option<f64> {
        self.s_phi?;
        Some(match self.method.phi_adjustment() {
            Adjustment::None => 0.0,
            Adjustment::Mean => mean_a_phi(self.p, self.phi, self.s2, self.s3),
            Adjustment::Median => median_a_phi(self.p, self.phi, self.s2, self.s3),
        })
    }

    pub fn adjusted_beta_score(&self) -> DVector<f64> {
        &self.s_beta + self.a_beta()
    }

    pub fn adjusted_phi_score(&self) -> Option<f64> {
        Some(self.s_phi? + self.a_phi()?)
    }

    /// `i_φφ = Σm²a″/(2φ⁴)`
    pub fn i_phiphi(&self) -> f64 {
        self.s2 / (2.0 * self.phi.powi(4))
    }
}
