use super::working::Evaluation;
use super::{DispersionScale, FitControl, FitResult, Method, ModelSpec, WorkingState};
use crate::error::{GlmError, Result};
use crate::linalg::WeightedQr;
use nalgebra::{DMatrix, DVector};

/// Coefficients held fixed during a constrained fit.
#[derive(Debug, Clone)]
struct Constraint {
    free: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    x_free: DMatrix<f64>,
    /// `X_fixed β_fixed`
    fixed_eta: DVector<f64>,
}

impl Constraint {
    fn new(spec: &ModelSpec, fixed: &[(usize, f64)]) -> Result<Self> {
        let p = spec.p();
        let mut is_fixed = vec![false; p];
        for &(j, v) in fixed {
            if j >= p || is_fixed[j] || !v.is_finite() {
                return Err(GlmError::InvalidArgument(format!(
                    "invalid constraint on coefficient {j} (p = {p})"
                )));
            }
            is_fixed[j] = true;
        }
        let free: Vec<usize> = (0..p).filter(|&j| !is_fixed[j]).collect();
        if free.is_empty() {
            return Err(GlmError::InvalidArgument(
                "a constrained fit needs at least one free coefficient".into(),
            ));
        }
        let x_free = spec.x.select_columns(&free);
        let mut fixed_eta = DVector::zeros(spec.n());
        for &(j, v) in fixed {
            fixed_eta += spec.x.column(j) * v;
        }
        Ok(Constraint {
            free,
            fixed: fixed.to_vec(),
            x_free,
            fixed_eta,
        })
    }

    fn embed(&self, free_values: &DVector<f64>, p: usize) -> DVector<f64> {
        let mut beta = DVector::zeros(p);
        for (k, &j) in self.free.iter().enumerate() {
            beta[j] = free_values[k];
        }
        for &(j, v) in &self.fixed {
            beta[j] = v;
        }
        beta
    }
}

fn is_recoverable(e: &GlmError) -> bool {
    matches!(
        e,
        GlmError::InvalidMean { .. }
            | GlmError::InvalidState(_)
            | GlmError::SingularLink { .. }
            | GlmError::RankDeficient { .. }
            | GlmError::Domain { .. }
            | GlmError::SingularInformation
    )
}

fn start_beta(spec: &ModelSpec, constraint: Option<&Constraint>) -> Result<DVector<f64>> {
    let n = spec.n();
    let mut target = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let mu0 = spec.family.start_mean(spec.y[i], spec.m[i]);
        let eta0 = spec.link.link(mu0);
        let lq = spec.link.quantities(eta0);
        let v = spec.family.variance(mu0)?;
        w[i] = spec.m[i] * lq.d * lq.d / v;
        target[i] = eta0 - spec.offset[i];
    }
    if w.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::InvalidState("starting values are not finite".into()));
    }
    match constraint {
        None => WeightedQr::new(&spec.x, &w)?.solve(&target),
        Some(c) => {
            let t = target - &c.fixed_eta;
            let free = WeightedQr::new(&c.x_free, &w)?.solve(&t)?;
            Ok(c.embed(&free, spec.p()))
        }
    }
}

/// `β⁰` from one weighted regression of `g(μ⁰)` on `X`.
pub fn starting_beta(spec: &ModelSpec) -> Result<DVector<f64>> {
    start_beta(spec, None)
}

/// Pearson-statistic estimate `Σ m(y − μ)²/V(μ) / (n − p)`.
pub fn moment_dispersion(spec: &ModelSpec, beta: &DVector<f64>) -> Result<f64> {
    let (n, p) = (spec.n(), spec.p());
    if n <= p {
        return Err(GlmError::DegreesOfFreedom { n, p });
    }
    let eta = &spec.x * beta + &spec.offset;
    let mut acc = 0.0;
    for i in 0..n {
        let mu = spec.link.inverse(eta[i]);
        let v = spec.family.variance(mu)?;
        acc += spec.m[i] * (spec.y[i] - mu).powi(2) / v;
    }
    Ok(acc / (n - p) as f64)
}

/// Solves `Σ qᵢ = Σ ρᵢ(φ)` for the ML dispersion at fixed β.
///
/// `Σρ` increases in φ, so the root is bracketed by doubling/halving from
/// the start and then refined by Newton steps `φ + φ² f/Σm²a″` that fall back
/// to bisection when they leave the bracket.
pub fn ml_dispersion(spec: &ModelSpec, beta: &DVector<f64>, phi_start: f64) -> Result<f64> {
    if spec.family.dispersion_known() {
        return Err(GlmError::DispersionKnown {
            family: spec.family.name(),
            what: "the dispersion estimate",
        });
    }
    let wq = super::working_quantities(spec, beta, 1.0)?;
    let total_q: f64 = wq.q.iter().sum();
    if !(total_q > 0.0) {
        return Err(GlmError::InvalidState(
            "zero deviance: the ML dispersion estimate is zero".into(),
        ));
    }
    let f = |phi: f64| -> Result<f64> {
        let mut rho = 0.0;
        for &m in spec.m.iter() {
            rho += spec.family.expected_deviance(m, phi)?;
        }
        Ok(total_q - rho)
    };
    let mut phi = if phi_start > 0.0 && phi_start.is_finite() {
        phi_start
    } else {
        total_q / spec.n() as f64
    };
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let fv = f(phi)?;
        if fv == 0.0 {
            return Ok(phi);
        }
        if fv > 0.0 {
            lo = lo.max(phi);
        } else {
            hi = hi.min(phi);
        }
        let (s2, _) = super::dispersion_sums(spec, phi)?;
        let mut next = phi + phi * phi * fv / s2;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi }
            } else {
                2.0 * lo.max(phi)
            };
        }
        if (next - phi).abs() <= 4.0 * f64::EPSILON * phi {
            return Ok(next);
        }
        phi = next;
    }
    Ok(phi)
}

fn score_norm(ev: &Evaluation, free: &[usize], scale: DispersionScale) -> f64 {
    score_norm_scaled(ev, free, scale, false)
}

/// With `standardized`, each component is divided by the square root of its
/// expected information, which removes the `1/φ` scaling of the scores.
fn score_norm_scaled(ev: &Evaluation, free: &[usize], scale: DispersionScale, standardized: bool) -> f64 {
    let sb = ev.adjusted_beta_score();
    let mut norm = free
        .iter()
        .map(|&j| if standardized { sb[j].abs() / ev.info_beta_diag[j].sqrt() } else { sb[j].abs() })
        .fold(0.0, f64::max);
    if let Some(sp) = ev.adjusted_phi_score() {
        let (v, info) = match scale {
            DispersionScale::Phi => (sp, ev.i_phiphi()),
            DispersionScale::LogPhi => (log_scale_score(ev), ev.phi * ev.phi * ev.i_phiphi()),
        };
        norm = norm.max(if standardized { v.abs() / info.sqrt() } else { v.abs() });
    }
    norm
}

/// `s_ζ + A_ζ` for `ζ = log φ`: `s_ζ = φ s_φ`, mean BR `A*_ζ = φA*_φ + ½`,
/// median BR `A†_ζ = φA†_φ` by its equivariance.
fn log_scale_score(ev: &Evaluation) -> f64 {
    let phi = ev.phi;
    let s = phi * ev.s_phi.expect("dispersion unknown");
    let a = phi * ev.a_phi().expect("dispersion unknown");
    match ev.method.phi_adjustment() {
        super::Adjustment::Mean => s + a + 0.5,
        _ => s + a,
    }
}

fn propose(
    spec: &ModelSpec,
    ev: &Evaluation,
    beta: &DVector<f64>,
    constraint: Option<&Constraint>,
    scale: DispersionScale,
) -> Result<(DVector<f64>, f64)> {
    let target = &ev.wq.z - &spec.offset + ev.variate_shift();
    let beta_new = match constraint {
        None => ev.qr.solve(&target)?,
        Some(c) => {
            let t = target - &c.fixed_eta;
            let free = WeightedQr::new(&c.x_free, &ev.wq.w)?.solve(&t)?;
            c.embed(&free, beta.len())
        }
    };
    let phi_new = match ev.adjusted_phi_score() {
        None => 1.0,
        Some(_) if ev.method == Method::Ml => ev.phi,
        Some(sp) => match scale {
            DispersionScale::Phi => ev.phi + sp / ev.i_phiphi(),
            DispersionScale::LogPhi => {
                let i_zz = ev.phi * ev.phi * ev.i_phiphi();
                ev.phi * (log_scale_score(ev) / i_zz).exp()
            }
        },
    };
    Ok((beta_new, phi_new))
}

fn vcov_from(ev: &Evaluation, known: bool) -> DMatrix<f64> {
    let p = ev.inv.ncols();
    let size = if known { p } else { p + 1 };
    let mut v = DMatrix::zeros(size, size);
    v.view_mut((0, 0), (p, p)).copy_from(&(&ev.inv * ev.phi));
    if !known {
        v[(p, p)] = 1.0 / ev.i_phiphi();
    }
    v
}

fn working_state(ev: &Evaluation) -> WorkingState {
    WorkingState {
        eta: ev.wq.eta.clone(),
        mu: ev.wq.mu.clone(),
        w: ev.wq.w.clone(),
        d: ev.wq.d.clone(),
        z: ev.wq.z.clone(),
        xi: ev.xi.clone(),
        u: ev.u.clone(),
        hat: ev.hat.clone(),
    }
}

/// Evaluates at `(β, φ)`; for ML with unknown dispersion φ is first
/// replaced by its profile solution at β.
fn evaluate_at(
    spec: &ModelSpec,
    method: Method,
    beta: &DVector<f64>,
    phi: f64,
) -> Result<(Evaluation, f64)> {
    if method == Method::Ml && !spec.family.dispersion_known() {
        // validate β before solving for φ
        super::working_quantities(spec, beta, phi)?;
        let phi = ml_dispersion(spec, beta, phi)?;
        Ok((Evaluation::new(spec, method, beta, phi)?, phi))
    } else {
        Ok((Evaluation::new(spec, method, beta, phi)?, phi))
    }
}

fn run(
    spec: &ModelSpec,
    method: Method,
    control: &FitControl,
    constraint: Option<&Constraint>,
) -> Result<FitResult> {
    control.validate()?;
    spec.validate()?;
    let known = spec.family.dispersion_known();
    let scale = control.dispersion_scale;
    let p = spec.p();
    let free: Vec<usize> = constraint.map_or((0..p).collect(), |c| c.free.clone());

    let mut beta = match &control.beta_start {
        Some(b) => {
            if b.len() != p {
                return Err(GlmError::Dimension(format!(
                    "beta_start has length {}, expected {p}",
                    b.len()
                )));
            }
            match constraint {
                Some(c) => c.embed(&b.select_rows(&c.free), p),
                None => b.clone(),
            }
        }
        None => start_beta(spec, constraint)?,
    };
    let mut phi = if known {
        1.0
    } else {
        match control.phi_start {
            Some(v) => v,
            None => moment_dispersion(spec, &beta).unwrap_or(1.0).max(1e-6),
        }
    };
    let (mut ev, phi0) = evaluate_at(spec, method, &beta, phi)?;
    phi = phi0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=control.max_iterations {
        iterations = it;
        let (proposal_beta, proposal_phi) = propose(spec, &ev, &beta, constraint, scale)?;
        let mut step_beta = proposal_beta - &beta;
        // dispersion step on the scale it is updated on
        let mut step_disp = match scale {
            DispersionScale::Phi => proposal_phi - phi,
            DispersionScale::LogPhi => (proposal_phi / phi).ln(),
        };
        let mut halvings = 0;
        let (next_ev, next_beta, next_phi) = loop {
            let cand_beta = &beta + &step_beta;
            let cand_phi = match scale {
                DispersionScale::Phi => phi + step_disp,
                DispersionScale::LogPhi => phi * step_disp.exp(),
            };
            let attempt = if known || cand_phi > 0.0 {
                evaluate_at(spec, method, &cand_beta, if known { 1.0 } else { cand_phi })
            } else {
                Err(GlmError::InvalidState("non-positive dispersion".into()))
            };
            match attempt {
                Ok((e, ph)) => break (e, cand_beta, ph),
                Err(e) if is_recoverable(&e) => {
                    halvings += 1;
                    if halvings > control.max_step_halvings {
                        return Err(GlmError::FitFailure { iteration: it, halvings: halvings - 1 });
                    }
                    step_beta *= 0.5;
                    step_disp *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let db = (&next_beta - &beta).amax();
        let dp = (next_phi - phi).abs();
        beta = next_beta;
        phi = next_phi;
        ev = next_ev;
        let tol = control.tolerance;
        let small_step = db <= tol * (1.0 + beta.amax()) && dp <= tol * (1.0 + phi);
        if small_step && score_norm_scaled(&ev, &free, scale, true) <= tol * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        method,
        beta,
        phi,
        dispersion_known: known,
        vcov: vcov_from(&ev, known),
        iterations,
        converged,
        adjusted_score_norm: score_norm(&ev, &free, scale),
        working: working_state(&ev),
    })
}

/// Fits by the requested method.
///
/// ML alternates IWLS for β with the exact profile solution for φ. The
/// bias-reducing methods update β and φ jointly by quasi-Fisher scoring on
/// the adjusted scores. `CorrectedMl` is the ML fit followed by one explicit
/// correction step; its convergence diagnostics are those of the ML stage.
pub fn fit(spec: &ModelSpec, method: Method, control: &FitControl) -> Result<FitResult> {
    if method == Method::CorrectedMl {
        let ml = run(spec, Method::Ml, control, None)?;
        let (beta, phi) = explicit_correction(spec, &ml)?;
        let ev = Evaluation::new(spec, Method::MeanBr, &beta, phi)?;
        return Ok(FitResult {
            method,
            beta,
            phi,
            dispersion_known: ml.dispersion_known,
            vcov: vcov_from(&ev, ml.dispersion_known),
            iterations: ml.iterations + 1,
            converged: ml.converged,
            adjusted_score_norm: ml.adjusted_score_norm,
            working: working_state(&ev),
        });
    }
    run(spec, method, control, None)
}

/// Fits with the coefficients in `fixed` held at the given values, solving
/// the λ-components of the method's full-model adjusted score equations.
pub fn fit_constrained(
    spec: &ModelSpec,
    method: Method,
    control: &FitControl,
    fixed: &[(usize, f64)],
) -> Result<FitResult> {
    if method == Method::CorrectedMl {
        return Err(GlmError::InvalidArgument(
            "constrained fits are defined for ml, mean_br, median_br and mixed_br".into(),
        ));
    }
    let c = Constraint::new(spec, fixed)?;
    run(spec, method, control, Some(&c))
}

/// One IWLS step from an ML fit with the mean-BR working variate, and the
/// closed-form dispersion correction `φ̂{1 + φ̂S₃/S₂² + φ̂²(p−2)/S₂}`.
pub fn explicit_correction(spec: &ModelSpec, ml_fit: &FitResult) -> Result<(DVector<f64>, f64)> {
    if ml_fit.method != Method::Ml || !ml_fit.converged {
        return Err(GlmError::InvalidArgument(
            "explicit correction needs a converged ML fit".into(),
        ));
    }
    let phi = ml_fit.phi;
    let ev = Evaluation::new(spec, Method::MeanBr, &ml_fit.beta, phi)?;
    let target = &ev.wq.z - &spec.offset + &ev.xi * phi;
    let beta = ev.qr.solve(&target)?;
    if spec.family.dispersion_known() {
        return Ok((beta, 1.0));
    }
    let (s2, s3) = (ev.s2, ev.s3);
    let p = spec.p() as f64;
    let phi_c = phi * (1.0 + phi * s3 / (s2 * s2) + phi * phi * (p - 2.0) / s2);
    Ok((beta, phi_c))
}

/// A single quasi-Fisher step on the method's adjusted scores from `(β, φ)`,
/// on the φ scale; for ML the φ step is the Fisher step `φ + s_φ/i_φφ`.
pub fn quasi_fisher_step(
    spec: &ModelSpec,
    method: Method,
    beta: &DVector<f64>,
    phi: f64,
) -> Result<(DVector<f64>, f64)> {
    let method = if method == Method::CorrectedMl { Method::MeanBr } else { method };
    let ev = Evaluation::new(spec, method, beta, phi)?;
    let (b, _) = propose(spec, &ev, beta, None, DispersionScale::Phi)?;
    let phi_new = match ev.adjusted_phi_score() {
        None => 1.0,
        Some(sp) => phi + sp / ev.i_phiphi(),
    };
    Ok((b, phi_new))
}
