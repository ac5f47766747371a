//! One function per subcommand. Each returns the report CSV body and a JSON
//! summary; writing them to disk is left to the caller.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use qsvm_core::calibration::{random_test_functions, CalibrationCheck, CalibrationReport, ConditionalGrid};
use qsvm_core::distributions::ConditionalModel;
use qsvm_core::experiments::{
    lambda_grid, learning_rate_experiment_with, tv_svm_with, GridMode, LambdaGrid, RateConfig,
};
use qsvm_core::inner_risk::{self_cal_lower_bound, self_calibration_fn};
use qsvm_core::kernels::{fit_power_law, normalized_spectrum, uniform_inputs, KernelSpec};
use qsvm_core::quadrature::XQuadrature;
use qsvm_core::report::fmt_f64;
use qsvm_core::seed::derive_seed;
use qsvm_core::solver::{kkt_residual, objective, predict_many, train, SvmModel};
use qsvm_core::{Dataset, Error as CoreError, Tau};

use crate::config::{CalibrationSection, Command, RunConfig, TvSvmSection};
use crate::error::CliError;

pub struct Outcome {
    pub report: Vec<u8>,
    pub summary: Value,
    pub model: Option<SvmModel>,
    /// Set when a check found a violation; the run exits with status 1.
    pub failure: Option<String>,
}

pub struct Overrides {
    pub strict_grid: bool,
}

pub fn run(command: Command, cfg: &RunConfig, overrides: &Overrides) -> Result<Outcome, CliError> {
    match command {
        Command::CheckInnerRisk => check_inner_risk(cfg),
        Command::CheckCalibration => check_calibration(cfg, false),
        Command::CheckVariance => check_calibration(cfg, true),
        Command::Train => train_command(cfg),
        Command::TvSvm => tv_svm_command(cfg, overrides),
        Command::Rates => rates(cfg, overrides),
        Command::Spectrum => spectrum(cfg),
    }
}

fn model(cfg: &RunConfig) -> Result<ConditionalModel, CliError> {
    Ok(ConditionalModel::new(cfg.section(&cfg.model, "model")?.clone())?)
}

fn kernel(cfg: &RunConfig) -> Result<KernelSpec, CliError> {
    let k = *cfg.section(&cfg.kernel, "kernel")?;
    k.validate()?;
    Ok(k)
}

fn x_header(dim: usize) -> String {
    (1..=dim).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",")
}

fn x_fields(x: &[f64]) -> String {
    x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

fn check_inner_risk(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model(cfg)?;
    let sec = cfg.inner_risk.clone().unwrap_or_default();
    if sec.eps_points < 2 {
        return Err(CliError::Usage("inner_risk.eps_points must be at least 2".into()));
    }
    let points = model.sample_joint(sec.points, derive_seed(cfg.seed, &["check-inner-risk", "points"]))?;
    let eps: Vec<f64> = (0..sec.eps_points).map(|k| 2.0 * k as f64 / (sec.eps_points - 1) as f64).collect();

    let mut out = Vec::new();
    writeln!(out, "point,{},tau,q,gamma,eps,delta,bound,slack", x_header(model.dim())).expect("in-memory write");
    let (mut checked, mut skipped, mut rows) = (0usize, 0usize, 0usize);
    let mut worst: Option<(f64, String)> = None;
    for &t in &sec.taus {
        let tau = Tau::new(t)?;
        for (i, (x, _)) in points.iter().enumerate() {
            let cert = match model.type_q_params(x, tau) {
                Ok(c) => c,
                Err(CoreError::NotApplicable(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            checked += 1;
            for &e in &eps {
                let delta = self_calibration_fn(&model, x, tau, e)?;
                let bound = self_cal_lower_bound(&cert, e)?;
                let slack = delta - bound;
                let line = format!(
                    "{i},{},{},{},{},{},{},{},{}",
                    x_fields(x),
                    fmt_f64(t),
                    fmt_f64(cert.q),
                    fmt_f64(cert.gamma),
                    fmt_f64(e),
                    fmt_f64(delta),
                    fmt_f64(bound),
                    fmt_f64(slack)
                );
                if slack < -sec.tolerance && worst.as_ref().is_none_or(|(s, _)| slack < *s) {
                    worst = Some((slack, line.clone()));
                }
                writeln!(out, "{line}").expect("in-memory write");
                rows += 1;
            }
        }
    }
    let summary = json!({
        "command": "check-inner-risk",
        "rows": rows,
        "certified_points": checked,
        "skipped_points": skipped,
        "tolerance": sec.tolerance,
        "pass": worst.is_none(),
    });
    Ok(Outcome {
        report: out,
        summary,
        model: None,
        failure: worst.map(|(_, line)| format!("self-calibration bound violated at row: {line}")),
    })
}

fn check_calibration(cfg: &RunConfig, variance: bool) -> Result<Outcome, CliError> {
    let model = model(cfg)?;
    let sec: &CalibrationSection = cfg.section(&cfg.calibration, "calibration")?;
    let tau = Tau::new(sec.tau)?;
    let quad = XQuadrature::composite(model.dim(), sec.order, sec.cells)?;
    let check = CalibrationCheck::new(&model, tau, sec.p, quad)?;
    let label = if variance { "check-variance" } else { "check-calibration" };
    let fs = random_test_functions(sec.cells, sec.count, derive_seed(cfg.seed, &[label, "functions"]))?;
    let report = if variance {
        check.variance_bound(&fs, cfg.execution, sec.tolerance)
    } else {
        check.self_calibration(&fs, cfg.execution, sec.tolerance)
    };
    let mut out = Vec::new();
    report.write_csv(&mut out).expect("in-memory write");
    Ok(Outcome {
        report: out,
        summary: calibration_summary(label, &report),
        model: None,
        failure: calibration_failure(&report),
    })
}

fn calibration_summary(label: &str, report: &CalibrationReport) -> Value {
    json!({
        "command": label,
        "params": report.params,
        "tolerance": report.tolerance,
        "functions": report.records.len(),
        "violations": report.violations().count(),
        "min_slack": report.min_slack(),
        "pass": report.pass,
    })
}

fn calibration_failure(report: &CalibrationReport) -> Option<String> {
    let worst = report.violations().min_by(|a, b| a.slack.total_cmp(&b.slack))?;
    Some(format!(
        "{} of {} test functions violate the bound; worst index={} lhs={} rhs={} slack={}",
        report.violations().count(),
        report.records.len(),
        worst.index,
        fmt_f64(worst.lhs),
        fmt_f64(worst.rhs),
        fmt_f64(worst.slack)
    ))
}

/// Reads `x1..xd,y` rows with a header line.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    let bad = |message: String| CliError::Config { path: path.display().to_string(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(err) => io(err),
        other => bad(format!("{other:?}")),
    })?;
    let width = reader.headers().map_err(|e| bad(e.to_string()))?.len();
    if width < 2 {
        return Err(bad("data needs at least one x column and a y column".into()));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: column {} is not a number: {field:?}", line + 2, j + 1)))?;
            if j + 1 == width {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    Ok(Dataset::new(width - 1, xs, ys)?)
}

/// Training data and, when drawn from `[model]`, the model it came from.
fn dataset(cfg: &RunConfig, label: &str) -> Result<(Dataset, Option<ConditionalModel>), CliError> {
    let sec = cfg.section(&cfg.data, "data")?;
    match (&sec.path, sec.n) {
        (Some(path), None) => Ok((read_dataset(path)?, None)),
        (None, Some(n)) => {
            let model = model(cfg)?;
            let data = model.sample_joint(n, derive_seed(cfg.seed, &[label, "data"]))?;
            Ok((data, Some(model)))
        }
        _ => Err(CliError::Usage("[data] needs exactly one of `n` or `path`".into())),
    }
}

fn model_risk(model: &ConditionalModel, tau: Tau, svm: &SvmModel) -> Result<Value, CliError> {
    let grid = ConditionalGrid::new(model, tau, XQuadrature::composite(model.dim(), 32, 16)?)?;
    let f = |x: &[f64]| svm.predict_clipped(x);
    Ok(json!({
        "excess_risk": grid.excess_risk(&f),
        "l2_dist_norm": grid.dist_norm(&f, qsvm_core::distributions::LpExponent::Finite(2.0)),
    }))
}

fn train_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.train, "train")?;
    let tau = Tau::new(sec.tau)?;
    let spec = kernel(cfg)?;
    let (data, source) = dataset(cfg, "train")?;
    let opts = qsvm_core::solver::SolverOptions { seed: derive_seed(cfg.seed, &["train", "solver"]), ..cfg.solver };
    let (svm, diag) = train(&data, &spec, sec.lambda, tau, &opts)?;
    let preds = predict_many(&svm, data.xs_flat(), cfg.execution);

    let mut out = Vec::new();
    writeln!(out, "index,{},y,prediction,alpha", x_header(data.dim())).expect("in-memory write");
    for (i, (x, y)) in data.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{}", x_fields(x), fmt_f64(y), fmt_f64(preds[i]), fmt_f64(svm.alpha[i]))
            .expect("in-memory write");
    }
    let mut summary = json!({
        "command": "train",
        "n": data.len(),
        "lambda": sec.lambda,
        "tau": sec.tau,
        "diagnostics": diag,
        "objective": objective(&svm, &data)?,
        "kkt_residual": kkt_residual(&svm, &data, opts.band)?,
    });
    if let Some(m) = source {
        summary["population"] = model_risk(&m, tau, &svm)?;
    }
    Ok(Outcome { report: out, summary, model: Some(svm), failure: None })
}

fn grid_for(n: usize, mode: GridMode, explicit: Option<&[f64]>) -> Result<LambdaGrid, CliError> {
    Ok(match explicit {
        Some(values) => LambdaGrid::from_values(values.to_vec())?,
        None => lambda_grid(n, mode)?,
    })
}

fn tv_svm_command(cfg: &RunConfig, overrides: &Overrides) -> Result<Outcome, CliError> {
    let sec: &TvSvmSection = cfg.section(&cfg.tv_svm, "tv_svm")?;
    let tau = Tau::new(sec.tau)?;
    let spec = kernel(cfg)?;
    let (data, source) = dataset(cfg, "tv-svm")?;
    let mode = if overrides.strict_grid { GridMode::StrictNet } else { sec.grid };
    let explicit = if overrides.strict_grid { None } else { sec.lambdas.as_deref() };
    let grid = grid_for(data.len(), mode, explicit)?;
    let opts = qsvm_core::solver::SolverOptions { seed: derive_seed(cfg.seed, &["tv-svm", "solver"]), ..cfg.solver };
    let fit = tv_svm_with(&data, &spec, &grid, tau, &opts, cfg.execution)?;

    let mut out = Vec::new();
    writeln!(out, "lambda,validation_risk,selected").expect("in-memory write");
    for &(lambda, risk) in &fit.validation {
        writeln!(out, "{},{},{}", fmt_f64(lambda), fmt_f64(risk), lambda == fit.lambda).expect("in-memory write");
    }
    let mut summary = json!({
        "command": "tv-svm",
        "n": data.len(),
        "tau": sec.tau,
        "grid_size": grid.len(),
        "lambda": fit.lambda,
        "diagnostics": fit.diagnostics,
        "unconverged": fit.unconverged,
    });
    if let Some(m) = source {
        summary["population"] = model_risk(&m, tau, &fit.model)?;
    }
    Ok(Outcome { report: out, summary, model: Some(fit.model), failure: None })
}

fn rates(cfg: &RunConfig, overrides: &Overrides) -> Result<Outcome, CliError> {
    let sec = cfg.section(&cfg.rates, "rates")?;
    let mut rc = RateConfig::new(model(cfg)?, kernel(cfg)?, Tau::new(sec.tau)?, sec.sample_sizes.clone());
    rc.repetitions = sec.repetitions;
    rc.seed = cfg.seed;
    rc.beta = sec.beta;
    rc.p = sec.p;
    rc.q = sec.q;
    rc.rho = sec.rho;
    rc.grid = if overrides.strict_grid { GridMode::StrictNet } else { sec.grid };
    rc.solver = sec.solver;
    rc.quadrature_order = sec.quadrature_order;
    rc.quadrature_panels = sec.quadrature_panels;
    let report = learning_rate_experiment_with(&rc, cfg.execution)?;

    let mut out = Vec::new();
    report.write_csv(&mut out).expect("in-memory write");
    let summary = json!({
        "command": "rates",
        "summary": report.summary,
        "excess_slope": report.excess_slope,
        "dist_slope": report.dist_slope,
        "r": report.r,
        "theta": report.theta,
        "rho": report.rho,
        "rho_estimate": report.rho_estimate,
        "theoretical_gamma": report.theoretical_gamma,
        "theoretical_gamma_over_q": report.theoretical_gamma_over_q,
        "unconverged": report.rows.iter().filter(|r| !r.converged).count(),
    });
    Ok(Outcome { report: out, summary, model: None, failure: None })
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = kernel(cfg)?;
    let sec = cfg.spectrum.clone().unwrap_or_default();
    if sec.points == 0 || sec.dim == 0 {
        return Err(CliError::Usage("spectrum.points and spectrum.dim must be positive".into()));
    }
    let xs = uniform_inputs(sec.points, sec.dim, derive_seed(cfg.seed, &["spectrum", "points"]));
    let eigenvalues = normalized_spectrum(&spec, &xs, sec.dim)?;
    let mut estimate = fit_power_law(&eigenvalues)?;
    estimate.empirical = true;

    let mut out = Vec::new();
    writeln!(out, "index,eigenvalue,used_in_fit").expect("in-memory write");
    for (i, &ev) in eigenvalues.iter().enumerate() {
        let used = (estimate.first_index..=estimate.last_index).contains(&(i + 1));
        writeln!(out, "{},{},{used}", i + 1, fmt_f64(ev)).expect("in-memory write");
    }
    let summary = json!({
        "command": "spectrum",
        "points": sec.points,
        "dim": sec.dim,
        "estimate": estimate,
    });
    Ok(Outcome { report: out, summary, model: None, failure: None })
}
