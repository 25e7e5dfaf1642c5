//! Subcommand bodies. Each builds one record, prints it as a table or JSON
//! and returns the exit code.

use crate::input::{load_problem, parse_family, read_table, Columns, Problem};
use crate::record::{num, print_json, render_table};
use crate::{CiArgs, ControlArgs, DataArgs, DatasetArgs, DatasetFormat, Failure, FitArgs, Format, MultinomialArgs};
use crate::{SeparationArgs, SimulateArgs};
use adjscore_core::datasets;
use adjscore_core::engine::{fit as fit_model, DispersionScale, FitControl, FitResult, Method};
use adjscore_core::inference::{adjusted_score_statistic, theorem1_check, wald_interval, Theorem1Record};
use adjscore_core::multinomial::{fit_multinomial, MultinomialProblem};
use adjscore_core::separation::{detect_separation, SeparationStatus};
use adjscore_core::sim::{run_study_with, Estimator, MethodEstimator, MomentDispersionEstimator, SimulationReport, StudyDesign};
use adjscore_core::{DMatrix, DVector, Family, GlmError};
use serde::Serialize;

fn columns(d: &DataArgs) -> Columns {
    Columns {
        response: d.response.clone(),
        weights: d.weights.clone(),
        covariates: d.covariates.clone(),
        no_intercept: d.no_intercept,
    }
}

fn load(d: &DataArgs) -> Result<Problem, Failure> {
    load_problem(&d.data, &columns(d), d.family.as_deref(), d.link.as_deref())
}

fn control(c: &ControlArgs) -> Result<FitControl, Failure> {
    let mut control = FitControl::default();
    if let Some(t) = c.tolerance {
        control.tolerance = t;
    }
    if let Some(m) = c.max_iterations {
        control.max_iterations = m;
    }
    if let Some(h) = c.max_step_halvings {
        control.max_step_halvings = h;
    }
    control.phi_start = c.phi_start;
    if let Some(s) = &c.dispersion_scale {
        control.dispersion_scale = match s.as_str() {
            "phi" => DispersionScale::Phi,
            "log_phi" => DispersionScale::LogPhi,
            _ => return Err(Failure::input(format!("dispersion-scale: expected phi or log_phi, got '{s}'"))),
        };
    }
    control.validate().map_err(|e| Failure::input(format!("control: {e}")))?;
    Ok(control)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, Failure> {
    let methods = names
        .iter()
        .map(|s| {
            s.parse::<Method>().map_err(|_| {
                let all: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Failure::input(format!("method: unknown method '{s}'; expected one of {}", all.join(", ")))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(Failure::input("method: at least one method is required"));
    }
    Ok(methods)
}

fn check_level(level: f64) -> Result<(), Failure> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Failure::input(format!("level: must be in (0, 1), got {level}")))
    }
}

#[derive(Serialize)]
struct ScoreTestEntry {
    coefficients: Vec<String>,
    values: Vec<f64>,
    statistic: Option<f64>,
    dof: usize,
    p_value: Option<f64>,
    constrained_converged: bool,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitEntry {
    method: &'static str,
    converged: bool,
    iterations: usize,
    adjusted_score_norm: Option<f64>,
    beta: Vec<f64>,
    beta_se: Vec<f64>,
    beta_lower: Vec<f64>,
    beta_upper: Vec<f64>,
    phi: Option<f64>,
    phi_se: Option<f64>,
    phi_lower: Option<f64>,
    phi_upper: Option<f64>,
    dispersion_known: bool,
    vcov: Vec<Vec<f64>>,
    score_test: Option<ScoreTestEntry>,
    error: Option<String>,
}

impl FitEntry {
    fn failed(method: Method, dispersion_known: bool, error: String) -> Self {
        FitEntry {
            method: method.name(),
            converged: false,
            iterations: 0,
            adjusted_score_norm: None,
            beta: vec![],
            beta_se: vec![],
            beta_lower: vec![],
            beta_upper: vec![],
            phi: None,
            phi_se: None,
            phi_lower: None,
            phi_upper: None,
            dispersion_known,
            vcov: vec![],
            score_test: None,
            error: Some(error),
        }
    }
}

#[derive(Serialize)]
struct FitRecord {
    command: &'static str,
    data: String,
    family: &'static str,
    link: &'static str,
    n: usize,
    p: usize,
    coefficient_names: Vec<String>,
    level: f64,
    fits: Vec<FitEntry>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_tests(tests: &[String], names: &[String]) -> Result<Vec<(usize, f64)>, Failure> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for t in tests {
        let (name, value) = t
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("test: expected NAME=VALUE, got '{t}'")))?;
        let j = names.iter().position(|n| n == name.trim()).ok_or_else(|| {
            Failure::input(format!("test: unknown coefficient '{name}'; coefficients are {}", names.join(", ")))
        })?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("test: cannot parse '{value}' as a number")))?;
        if out.iter().any(|&(k, _)| k == j) {
            return Err(Failure::input(format!("test: coefficient '{name}' given twice")));
        }
        out.push((j, v));
    }
    if !out.is_empty() && out.len() >= names.len() {
        return Err(Failure::input("test: at least one coefficient must stay free"));
    }
    Ok(out)
}

fn fit_entry(problem: &Problem, method: Method, control: &FitControl, level: f64, tests: &[(usize, f64)]) -> FitEntry {
    let known = problem.spec.family.dispersion_known();
    let f: FitResult = match fit_model(&problem.spec, method, control) {
        Ok(f) => f,
        Err(e) => return FitEntry::failed(method, known, e.to_string()),
    };
    let p = f.beta.len();
    let interval = |j: usize| wald_interval(&f, j, level).ok();
    let beta_iv: Vec<_> = (0..p).map(interval).collect();
    let phi_iv = if known { None } else { interval(p) };
    let score_test = (!tests.is_empty()).then(|| {
        let idx: Vec<usize> = tests.iter().map(|t| t.0).collect();
        let values: Vec<f64> = tests.iter().map(|t| t.1).collect();
        let coefficients = idx.iter().map(|&j| problem.coefficient_names[j].clone()).collect();
        match adjusted_score_statistic(&problem.spec, &idx, &values, method, control) {
            Ok(t) => ScoreTestEntry {
                coefficients,
                values,
                statistic: Some(t.statistic),
                dof: t.dof,
                p_value: Some(t.p_value),
                constrained_converged: t.constrained.converged,
                error: None,
            },
            Err(e) => ScoreTestEntry {
                coefficients,
                values,
                statistic: None,
                dof: idx.len(),
                p_value: None,
                constrained_converged: false,
                error: Some(e.to_string()),
            },
        }
    });
    FitEntry {
        method: method.name(),
        converged: f.converged,
        iterations: f.iterations,
        adjusted_score_norm: Some(f.adjusted_score_norm),
        beta: f.beta.iter().copied().collect(),
        beta_se: f.beta_se().iter().copied().collect(),
        beta_lower: beta_iv.iter().map(|i| i.as_ref().map_or(f64::NAN, |i| i.lower)).collect(),
        beta_upper: beta_iv.iter().map(|i| i.as_ref().map_or(f64::NAN, |i| i.upper)).collect(),
        phi: Some(f.phi),
        phi_se: f.phi_se(),
        phi_lower: phi_iv.as_ref().map(|i| i.lower),
        phi_upper: phi_iv.as_ref().map(|i| i.upper),
        dispersion_known: known,
        vcov: rows_of(&f.vcov),
        score_test,
        error: None,
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print_fit_table(r: &FitRecord) {
    outln!("data: {}  family: {}  link: {}  n: {}  p: {}", r.data, r.family, r.link, r.n, r.p);
    let pct = format!("{}", 100.0 * r.level);
    for e in &r.fits {
        outln!();
        if let Some(err) = &e.error {
            outln!("method: {}  failed: {err}", e.method);
            continue;
        }
        outln!("method: {}  converged: {}  iterations: {}", e.method, yes_no(e.converged), e.iterations);
        let lo = format!("lower {pct}%");
        let hi = format!("upper {pct}%");
        let mut rows: Vec<Vec<String>> = r
            .coefficient_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                vec![name.clone(), num(e.beta[j]), num(e.beta_se[j]), num(e.beta_lower[j]), num(e.beta_upper[j])]
            })
            .collect();
        if !e.dispersion_known {
            let o = |v: Option<f64>| v.map_or("-".to_string(), num);
            rows.push(vec!["phi".into(), o(e.phi), o(e.phi_se), o(e.phi_lower), o(e.phi_upper)]);
        }
        out!("{}", render_table(&["coefficient", "estimate", "std_error", &lo, &hi], &rows));
        if let Some(t) = &e.score_test {
            let held: Vec<String> = t.coefficients.iter().zip(&t.values).map(|(c, v)| format!("{c}={v}")).collect();
            match (&t.error, t.statistic, t.p_value) {
                (None, Some(s), Some(p)) => outln!(
                    "adjusted score test ({}): statistic {}  df {}  p-value {}{}",
                    held.join(", "),
                    num(s),
                    t.dof,
                    num(p),
                    if t.constrained_converged { "" } else { "  (constrained fit did not converge)" }
                ),
                (err, _, _) => outln!("adjusted score test ({}): failed: {}", held.join(", "), err.as_deref().unwrap_or("")),
            }
        }
    }
}

pub fn fit(a: &FitArgs) -> Result<u8, Failure> {
    let methods = parse_methods(&a.method)?;
    check_level(a.level)?;
    let control = control(&a.control)?;
    let problem = load(&a.data)?;
    let tests = parse_tests(&a.test, &problem.coefficient_names)?;
    let fits: Vec<FitEntry> = methods.iter().map(|&m| fit_entry(&problem, m, &control, a.level, &tests)).collect();
    let all_converged = fits.iter().all(|f| f.converged);
    let record = FitRecord {
        command: "fit",
        data: problem.source.clone(),
        family: problem.spec.family.name(),
        link: problem.spec.link.name(),
        n: problem.spec.n(),
        p: problem.spec.p(),
        coefficient_names: problem.coefficient_names.clone(),
        level: a.level,
        fits,
    };
    match a.format {
        Format::Json => print_json(&record),
        Format::Table => print_fit_table(&record),
    }
    for f in record.fits.iter().filter(|f| !f.converged) {
        eprintln!("warning: {} fit did not converge", f.method);
    }
    Ok(if all_converged { 0 } else { 2 })
}

#[derive(Serialize)]
struct SimulateRecord {
    command: &'static str,
    data: String,
    family: &'static str,
    link: &'static str,
    coefficient_names: Vec<String>,
    true_beta: Vec<f64>,
    true_phi: Option<f64>,
    report: SimulationReport,
}

pub fn simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    let seed = a.seed.ok_or_else(|| Failure::input("seed: a seed is required"))?;
    check_level(a.level)?;
    if a.replicates == 0 {
        return Err(Failure::input("replicates: must be at least 1"));
    }
    if a.method.is_empty() {
        return Err(Failure::input("method: at least one estimator is required"));
    }
    let mut boxed: Vec<Box<dyn Estimator>> = Vec::new();
    let mut methods = Vec::new();
    for name in &a.method {
        if name == "ml_moment_phi" {
            boxed.push(Box::new(MomentDispersionEstimator::default()));
        } else {
            let m = parse_methods(std::slice::from_ref(name))?[0];
            methods.push(m);
            boxed.push(Box::new(MethodEstimator::new(m)));
        }
    }
    let problem = load(&a.data)?;
    let spec = problem.spec.clone();
    let known = spec.family.dispersion_known();
    let ml = if a.beta.is_empty() || (a.phi.is_none() && !known) {
        let f = fit_model(&spec, Method::Ml, &FitControl::default())
            .map_err(|e| Failure { code: 2, message: format!("ML fit for the true parameters failed: {e}") })?;
        if !f.converged {
            return Err(Failure { code: 2, message: "ML fit for the true parameters did not converge".into() });
        }
        Some(f)
    } else {
        None
    };
    let true_beta = if a.beta.is_empty() {
        ml.as_ref().expect("fitted above").beta.clone()
    } else if a.beta.len() != spec.p() {
        return Err(Failure::input(format!("beta: expected {} values, got {}", spec.p(), a.beta.len())));
    } else {
        DVector::from_vec(a.beta.clone())
    };
    if known && a.phi.is_some() {
        return Err(Failure::input(format!("phi: the {} family has known dispersion", spec.family)));
    }
    let true_phi = if known { 1.0 } else { a.phi.unwrap_or_else(|| ml.as_ref().expect("fitted above").phi) };
    let design = StudyDesign { spec, true_beta, true_phi, replicates: a.replicates, seed, methods, ci_level: a.level };
    let refs: Vec<&dyn Estimator> = boxed.iter().map(|b| b.as_ref()).collect();
    let report = run_study_with(&design, &refs).map_err(|e| match e {
        GlmError::StudyFailure { .. } => Failure { code: 2, message: e.to_string() },
        other => Failure::input(format!("simulate: {other}")),
    })?;
    let mut names = problem.coefficient_names.clone();
    if !known {
        names.push("phi".into());
    }
    let record = SimulateRecord {
        command: "simulate",
        data: problem.source.clone(),
        family: design.spec.family.name(),
        link: design.spec.link.name(),
        coefficient_names: problem.coefficient_names.clone(),
        true_beta: design.true_beta.iter().copied().collect(),
        true_phi: (!known).then_some(design.true_phi),
        report,
    };
    match a.format {
        Format::Json => print_json(&record),
        Format::Table => {
            let r = &record.report;
            outln!(
                "data: {}  family: {}  link: {}  replicates: {}  seed: {}  level: {}",
                record.data, record.family, record.link, r.replicates, r.seed, r.ci_level
            );
            for e in &r.estimators {
                outln!();
                outln!("estimator: {}  used: {}  failures: {}", e.estimator, e.used, e.failures);
                let rows: Vec<Vec<String>> = e
                    .parameters
                    .iter()
                    .zip(&names)
                    .map(|(p, name)| {
                        vec![
                            name.clone(),
                            num(p.truth),
                            num(p.bias),
                            num(p.rmse),
                            num(p.bias_ratio),
                            num(p.mae),
                            format!("{:.2}", p.pu),
                            format!("{:.2}", p.coverage),
                        ]
                    })
                    .collect();
                out!(
                    "{}",
                    render_table(&["parameter", "truth", "bias", "rmse", "bias^2/var", "mae", "pu%", "coverage%"], &rows)
                );
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct SeparationRecord {
    command: &'static str,
    data: String,
    status: SeparationStatus,
    coefficient_names: Vec<String>,
    direction: Vec<f64>,
    /// 1-based data rows.
    certifying_rows: Vec<usize>,
}

pub fn check_separation(a: &SeparationArgs) -> Result<u8, Failure> {
    let family = a.data.family.as_deref().map(parse_family).transpose()?.unwrap_or(Family::Binomial);
    if family != Family::Binomial {
        return Err(Failure::input(format!(
            "family: separation detection is defined for the binomial family only, got {family}"
        )));
    }
    let mut d = a.data.clone();
    d.family = Some("binomial".into());
    let problem = load(&d)?;
    let s = &problem.spec;
    let r = detect_separation(&s.x, &s.y, &s.m).map_err(|e| Failure::input(format!("check-separation: {e}")))?;
    let record = SeparationRecord {
        command: "check_separation",
        data: problem.source.clone(),
        status: r.status,
        coefficient_names: problem.coefficient_names.clone(),
        direction: r.direction.iter().copied().collect(),
        certifying_rows: r.certifying_rows.iter().map(|i| i + 1).collect(),
    };
    match a.format {
        Format::Json => print_json(&record),
        Format::Table => {
            let status = match r.status {
                SeparationStatus::None => "none",
                SeparationStatus::Quasi => "quasi",
                SeparationStatus::Complete => "complete",
            };
            outln!("data: {}  status: {status}", record.data);
            if r.status != SeparationStatus::None {
                let rows: Vec<Vec<String>> = record
                    .coefficient_names
                    .iter()
                    .zip(&record.direction)
                    .map(|(n, v)| vec![n.clone(), num(*v)])
                    .collect();
                out!("{}", render_table(&["coefficient", "direction"], &rows));
                let rows: Vec<String> = record.certifying_rows.iter().map(|i| i.to_string()).collect();
                outln!("certifying rows: {}", rows.join(", "));
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct SignChange {
    nu: usize,
    function: &'static str,
    alpha_lo: f64,
    alpha_hi: f64,
}

#[derive(Serialize)]
struct CiRecord {
    command: &'static str,
    rows: Vec<Theorem1Record>,
    sign_changes: Vec<SignChange>,
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::input(format!("alpha-grid: expected start:stop:step, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let (start, stop, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !(stop >= start) {
        return Err(Failure::input("alpha-grid: need step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(Failure::input("alpha-grid: more than a million points"));
    }
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

pub fn ci_compare(a: &CiArgs) -> Result<u8, Failure> {
    let mut alphas = a.alpha.clone();
    if let Some(g) = &a.alpha_grid {
        alphas.extend(parse_grid(g)?);
    }
    if alphas.is_empty() {
        return Err(Failure::input("alpha: give --alpha or --alpha-grid"));
    }
    if let Some(bad) = alphas.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Failure::input(format!("alpha: values must be in (0, 1), got {bad}")));
    }
    if let Some(&bad) = a.nu.iter().find(|&&v| v == 0) {
        return Err(Failure::input(format!("nu: must be at least 1, got {bad}")));
    }
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut rows = Vec::new();
    let mut sign_changes = Vec::new();
    for &nu in &a.nu {
        let recs: Vec<Theorem1Record> = alphas
            .iter()
            .map(|&al| theorem1_check(nu, al).map_err(|e| Failure::input(format!("ci-compare: {e}"))))
            .collect::<Result<_, _>>()?;
        for w in recs.windows(2) {
            for (function, a0, a1) in [("g", w[0].g, w[1].g), ("h", w[0].h, w[1].h)] {
                if (a0 < 0.0) != (a1 < 0.0) {
                    sign_changes.push(SignChange { nu, function, alpha_lo: w[0].alpha, alpha_hi: w[1].alpha });
                }
            }
        }
        rows.extend(recs);
    }
    let record = CiRecord { command: "ci_compare", rows, sign_changes };
    match a.format {
        Format::Json => print_json(&record),
        Format::Table => {
            let t = |b: bool| if b { "true" } else { "false" }.to_string();
            let rows: Vec<Vec<String>> = record
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.nu.to_string(),
                        format!("{}", r.alpha),
                        num(r.g),
                        num(r.h),
                        t(r.hat_in_star),
                        t(r.star_in_exact),
                        t(r.star_in_dagger),
                        t(r.dagger_in_exact),
                        t(r.dagger_closer),
                    ]
                })
                .collect();
            out!(
                "{}",
                render_table(
                    &["nu", "alpha", "g", "h", "hat_in_star", "star_in_exact", "star_in_dagger", "dagger_in_exact", "dagger_closer"],
                    &rows
                )
            );
            for s in &record.sign_changes {
                outln!("nu {}: {} changes sign in ({}, {})", s.nu, s.function, s.alpha_lo, s.alpha_hi);
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct ClottingRecordRow {
    conc: f64,
    lot: String,
    time: f64,
}

#[derive(Serialize)]
struct DatasetRecord {
    command: &'static str,
    name: String,
    columns: [&'static str; 3],
    rows: Vec<ClottingRecordRow>,
}

#[derive(Serialize)]
struct DatasetList {
    command: &'static str,
    available: Vec<&'static str>,
}

pub fn datasets(a: &DatasetArgs) -> Result<u8, Failure> {
    let Some(name) = &a.name else {
        let list = DatasetList { command: "datasets", available: datasets::DATASET_NAMES.to_vec() };
        match a.format {
            DatasetFormat::Json => print_json(&list),
            _ => list.available.iter().for_each(|n| outln!("{n}")),
        }
        return Ok(0);
    };
    if name != "clotting" {
        return Err(Failure::input(format!(
            "name: unknown dataset '{name}'; available: {}",
            datasets::DATASET_NAMES.join(", ")
        )));
    }
    let rows: Vec<ClottingRecordRow> = datasets::clotting_rows()
        .into_iter()
        .map(|r| ClottingRecordRow { conc: r.conc, lot: format!("lot{}", r.lot), time: r.time })
        .collect();
    let record = DatasetRecord { command: "datasets", name: name.clone(), columns: ["conc", "lot", "time"], rows };
    match a.format {
        DatasetFormat::Json => print_json(&record),
        DatasetFormat::Csv => {
            outln!("{}", record.columns.join(","));
            for r in &record.rows {
                outln!("{},{},{}", r.conc, r.lot, r.time);
            }
        }
        DatasetFormat::Table => {
            let rows: Vec<Vec<String>> =
                record.rows.iter().map(|r| vec![format!("{}", r.conc), r.lot.clone(), format!("{}", r.time)]).collect();
            out!("{}", render_table(&record.columns, &rows));
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct CategoryCoefficients {
    category: String,
    estimates: Vec<f64>,
    std_errors: Vec<f64>,
}

#[derive(Serialize)]
struct MultinomialEntry {
    method: &'static str,
    converged: bool,
    iterations: usize,
    coefficients: Vec<CategoryCoefficients>,
    error: Option<String>,
}

#[derive(Serialize)]
struct MultinomialRecord {
    command: &'static str,
    data: String,
    categories: Vec<String>,
    baseline: String,
    coefficient_names: Vec<String>,
    fits: Vec<MultinomialEntry>,
}

pub fn multinomial(a: &MultinomialArgs) -> Result<u8, Failure> {
    let methods = parse_methods(&a.method)?;
    if methods.contains(&Method::CorrectedMl) {
        return Err(Failure::input("method: multinomial fits support ml, mean_br, median_br and mixed_br"));
    }
    let control = control(&a.control)?;
    let path = std::path::Path::new(&a.data);
    if !path.exists() {
        return Err(Failure::input(format!("data: file '{}' not found", a.data)));
    }
    let table = read_table(path)?;
    if a.categories.len() < 2 {
        return Err(Failure::input("categories: at least two count columns are required"));
    }
    let cat_idx: Vec<usize> =
        a.categories.iter().map(|c| table.column_index(c, "categories")).collect::<Result<_, _>>()?;
    let cov_idx: Vec<usize> = if a.covariates.is_empty() {
        (0..table.columns.len()).filter(|j| !cat_idx.contains(j)).collect()
    } else {
        a.covariates.iter().map(|c| table.column_index(c, "covariates")).collect::<Result<_, _>>()?
    };
    let baseline = match &a.baseline {
        None => 0,
        Some(b) => a.categories.iter().position(|c| c == b).ok_or_else(|| {
            Failure::input(format!("baseline: '{b}' is not one of the categories {}", a.categories.join(", ")))
        })?,
    };
    let mut names = Vec::new();
    if !a.no_intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(cov_idx.iter().map(|&j| table.columns[j].clone()));
    if names.is_empty() {
        return Err(Failure::input("covariates: the design has no columns"));
    }
    let n = table.rows.len();
    let off = usize::from(!a.no_intercept);
    let counts = DMatrix::from_fn(n, cat_idx.len(), |i, c| table.rows[i][cat_idx[c]]);
    for (i, row) in counts.row_iter().enumerate() {
        if let Some(c) = row.iter().position(|&v| v < 0.0) {
            return Err(Failure::input(format!(
                "categories: row {}, column '{}': counts must be nonnegative",
                i + 1,
                a.categories[c]
            )));
        }
    }
    let x = DMatrix::from_fn(n, names.len(), |i, j| if j < off { 1.0 } else { table.rows[i][cov_idx[j - off]] });
    let problem =
        MultinomialProblem::with_baseline(counts, x, baseline).map_err(|e| Failure::input(format!("data: {e}")))?;
    let p = names.len();
    let fits: Vec<MultinomialEntry> = methods
        .iter()
        .map(|&m| match fit_multinomial(&problem, m, &control) {
            Ok(f) => {
                let mut coefficients = Vec::new();
                for (r, cat) in (0..problem.k()).filter(|&c| c != baseline).enumerate() {
                    coefficients.push(CategoryCoefficients {
                        category: a.categories[cat].clone(),
                        estimates: f.category_coefficients(cat).iter().copied().collect(),
                        std_errors: (0..p).map(|l| f.vcov_gamma[(r * p + l, r * p + l)].max(0.0).sqrt()).collect(),
                    });
                }
                MultinomialEntry { method: m.name(), converged: f.converged, iterations: f.iterations, coefficients, error: None }
            }
            Err(e) => MultinomialEntry {
                method: m.name(),
                converged: false,
                iterations: 0,
                coefficients: vec![],
                error: Some(e.to_string()),
            },
        })
        .collect();
    let all_converged = fits.iter().all(|f| f.converged);
    let record = MultinomialRecord {
        command: "multinomial",
        data: a.data.clone(),
        categories: a.categories.clone(),
        baseline: a.categories[baseline].clone(),
        coefficient_names: names,
        fits,
    };
    match a.format {
        Format::Json => print_json(&record),
        Format::Table => {
            outln!("data: {}  categories: {}  baseline: {}", record.data, record.categories.join(", "), record.baseline);
            for e in &record.fits {
                outln!();
                if let Some(err) = &e.error {
                    outln!("method: {}  failed: {err}", e.method);
                    continue;
                }
                outln!("method: {}  converged: {}  iterations: {}", e.method, yes_no(e.converged), e.iterations);
                let mut rows = Vec::new();
                for c in &e.coefficients {
                    for (j, name) in record.coefficient_names.iter().enumerate() {
                        rows.push(vec![c.category.clone(), name.clone(), num(c.estimates[j]), num(c.std_errors[j])]);
                    }
                }
                out!("{}", render_table(&["category", "coefficient", "estimate", "std_error"], &rows));
            }
        }
    }
    for f in record.fits.iter().filter(|f| !f.converged) {
        eprintln!("warning: {} fit did not converge", f.method);
    }
    Ok(if all_converged { 0 } else { 2 })
}
