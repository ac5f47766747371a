//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use qsvm_core::calibration::{random_test_functions, CalibrationCheck};
use qsvm_core::distributions::{ConditionalModel, Family, Location, LpExponent, NuSpec};
use qsvm_core::exec::Execution;
use qsvm_core::experiments::{learning_rate_experiment_with, GridMode, RateConfig, RhoSource};
use qsvm_core::inner_risk::{lower_pol_delta, self_cal_lower_bound, self_calibration_fn, InnerRisk};
use qsvm_core::kernels::{fit_power_law, spectrum_decay, uniform_inputs, KernelSpec};
use qsvm_core::law::Law;
use qsvm_core::quadrature::XQuadrature;
use qsvm_core::solver::{kkt_residual, objective, reference_train, train, SolverOptions, SvmModel};
use qsvm_core::{Dataset, Error, Tau};

const TAUS: [f64; 3] = [0.1, 0.5, 0.9];

type Check = Result<(bool, String), String>;

fn tau(v: f64) -> Tau {
    Tau::new(v).expect("valid tau")
}

fn sine() -> Location {
    Location::Sine { amplitude: 0.5 }
}

fn rbf() -> KernelSpec {
    KernelSpec::gaussian(0.5).expect("valid bandwidth")
}

fn model(family: Family) -> ConditionalModel {
    ConditionalModel::from_family(family, sine()).expect("valid family")
}

fn bounded() -> Family {
    Family::BoundedDensityMixture {
        mixture_weight: 0.2,
        half_width: 0.4,
        nu: Some(NuSpec::Atoms { locations: vec![0.3], weights: vec![1.0] }),
    }
}

fn bounded_smooth() -> Family {
    Family::BoundedDensityMixture {
        mixture_weight: 0.2,
        half_width: 0.4,
        nu: Some(NuSpec::Uniform { lo: -0.5, hi: 0.5 }),
    }
}

fn polynomial(mixture_weight: f64, cusp_level: f64) -> Family {
    Family::PolynomialDensity {
        mixture_weight,
        exponent: 2.0,
        floor: 24.0,
        cusp_level,
        nu: Some(NuSpec::Uniform { lo: -0.4, hi: 0.4 }),
    }
}

fn dirac() -> Family {
    Family::DiracAtomMixture { mixture_weight: 0.1, atom: 0.0, nu: Some(NuSpec::Uniform { lo: -0.3, hi: 0.3 }) }
}

fn two_atom(a: f64, b: f64) -> Family {
    Family::TwoAtom {
        lower: -0.3,
        upper: 0.3,
        lower_weight: a,
        upper_weight: b,
        nu: Some(NuSpec::Uniform { lo: 0.35, hi: 0.45 }),
    }
}

/// The four families used for the closed-form agreement check.
fn agreement_families() -> Vec<(&'static str, ConditionalModel)> {
    vec![
        ("bounded", model(bounded())),
        ("polynomial", model(polynomial(0.15, 0.5))),
        ("dirac", model(dirac())),
        ("two-atom", model(two_atom(0.4, 0.4))),
    ]
}

/// One model per family whose certificate holds at every x for level `t`.
fn certified_families(t: f64) -> Vec<(&'static str, ConditionalModel)> {
    let pure_two_atom = if t > 0.5 { two_atom(0.05, 0.95) } else { two_atom(0.45, 0.45) };
    vec![
        ("bounded", model(bounded_smooth())),
        ("polynomial", model(polynomial(0.0, t))),
        ("dirac", model(dirac())),
        ("two-atom", model(pure_two_atom)),
    ]
}

fn pinball(t: f64, y: f64, pred: f64) -> f64 {
    if y < pred {
        (1.0 - t) * (pred - y)
    } else {
        t * (y - pred)
    }
}

/// Inner risk by atoms plus 3-point Gauss–Legendre on each smooth segment.
fn quadrature_inner_risk(law: &Law, t: f64, pred: f64) -> f64 {
    let mut risk: f64 = law.atoms().iter().map(|a| a.mass * pinball(t, a.loc, pred)).sum();
    let mut cuts = law.breakpoints();
    cuts.push(pred);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let s = (0.6f64).sqrt();
    let rule = [(-s, 5.0 / 9.0), (0.0, 8.0 / 9.0), (s, 5.0 / 9.0)];
    for w in cuts.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (node, weight) in rule {
            let y = mid + half * node;
            risk += half * weight * law.density(y) * pinball(t, y, pred);
        }
    }
    risk
}

fn eps_grid() -> Vec<f64> {
    (0..101).map(|k| 2.0 * k as f64 / 100.0).collect()
}

fn points(m: &ConditionalModel, seed: u64) -> Dataset {
    m.sample_joint(20, seed).expect("sampling")
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let grid: Vec<f64> = (0..50).map(|k| -1.0 + 2.0 * k as f64 / 49.0).collect();
    let mut worst: f64 = 0.0;
    let mut not_minimal = 0usize;
    for (i, (_, m)) in agreement_families().iter().enumerate() {
        for (x, _) in points(m, 100 + i as u64).iter() {
            for &t in &TAUS {
                let law = m.conditional_law(x);
                let ir = InnerRisk::new(law.clone(), tau(t));
                let c_star = quadrature_inner_risk(&law, t, law.lower_quantile(t));
                worst = worst.max((ir.profile().c_star - c_star).abs());
                for &pred in &grid {
                    let oracle = quadrature_inner_risk(&law, t, pred);
                    if oracle < c_star - 1e-12 {
                        not_minimal += 1;
                    }
                    worst = worst.max((ir.excess(pred) - (oracle - c_star)).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Ok((
        worst <= 1e-8 && not_minimal == 0 && elapsed < Duration::from_secs(10),
        format!("max deviation {worst:.2e}, quantile not minimal {not_minimal} times, {:.2}s", elapsed.as_secs_f64()),
    ))
}

fn criterion_2() -> Check {
    let mut worst = f64::INFINITY;
    for alpha in [0.25, 1.0, 2.0] {
        for q in [1.0, 1.5, 2.0, 3.0] {
            for eps in eps_grid() {
                let d = lower_pol_delta(alpha, q, eps).map_err(|e| e.to_string())?;
                worst = worst.min(d - (alpha / 2.0f64).powf(q - 1.0) * eps.powf(q));
            }
        }
    }
    Ok((worst >= -1e-12, format!("min slack {worst:.3e}")))
}

fn criterion_3() -> Check {
    let mut worst = f64::INFINITY;
    let (mut checked, mut skipped) = (0usize, 0usize);
    for &t in &TAUS {
        let mut models = certified_families(t);
        models.extend(agreement_families());
        for (i, (_, m)) in models.iter().enumerate() {
            for (x, _) in points(m, 200 + i as u64).iter() {
                let cert = match m.type_q_params(x, tau(t)) {
                    Ok(c) => c,
                    Err(Error::NotApplicable(_)) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e.to_string()),
                };
                checked += 1;
                for eps in eps_grid() {
                    let delta = self_calibration_fn(m, x, tau(t), eps).map_err(|e| e.to_string())?;
                    let bound = self_cal_lower_bound(&cert, eps).map_err(|e| e.to_string())?;
                    worst = worst.min(delta - bound);
                }
            }
        }
    }
    Ok((
        worst >= -1e-8 && checked > 0,
        format!("min slack {worst:.3e} over {checked} certified (x, tau), {skipped} without certificate"),
    ))
}

fn calibration_sweep(variance: bool) -> Check {
    let start = Instant::now();
    let fs = random_test_functions(8, 1000, 31).map_err(|e| e.to_string())?;
    let (mut violations, mut runs) = (0usize, 0usize);
    let mut worst = f64::INFINITY;
    for &t in &TAUS {
        for (name, m) in certified_families(t) {
            for p in [LpExponent::Finite(1.0), LpExponent::Finite(4.0), LpExponent::Infinite] {
                let quad = XQuadrature::composite(1, 32, 8).map_err(|e| e.to_string())?;
                let check =
                    CalibrationCheck::new(&m, tau(t), p, quad).map_err(|e| format!("{name} tau={t} p={p}: {e}"))?;
                let report = if variance {
                    check.variance_bound(&fs, Execution::default(), 1e-8)
                } else {
                    check.self_calibration(&fs, Execution::default(), 1e-8)
                };
                violations += report.violations().count();
                worst = worst.min(report.min_slack());
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Ok((
        violations == 0 && runs == 36 && elapsed < Duration::from_secs(120),
        format!(
            "{violations} violations over {runs} sweeps of 1000 functions, min slack {worst:.3e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    ))
}

/// Every convergent training run is checked against the KKT bound.
#[derive(Default)]
struct KktLog {
    runs: usize,
    worst: f64,
}

impl KktLog {
    fn record(&mut self, m: &SvmModel, data: &Dataset, converged: bool, band: f64) -> Result<(), String> {
        if converged {
            self.runs += 1;
            self.worst = self.worst.max(kkt_residual(m, data, band).map_err(|e| e.to_string())?);
        }
        Ok(())
    }
}

fn criterion_6(kkt: &mut KktLog) -> Check {
    let opts = SolverOptions { tol: 1e-12, ..Default::default() };
    let one = Dataset::new(1, vec![0.3], vec![0.9]).map_err(|e| e.to_string())?;
    let mut analytic: f64 = 0.0;
    for (lambda, expected) in [(1.0, 0.25), (0.25, 0.9)] {
        let (m, d) = train(&one, &rbf(), lambda, tau(0.5), &opts).map_err(|e| e.to_string())?;
        analytic = analytic.max((m.alpha[0] - expected).abs()).max((m.predict(&[0.3]) - expected).abs());
        kkt.record(&m, &one, d.converged, opts.band)?;
    }

    let noise = ConditionalModel::uniform_noise(0.5, sine()).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..20u64 {
        let data = noise.sample_joint(30, 1_000 + i).map_err(|e| e.to_string())?;
        let t = TAUS[i as usize % 3];
        let (m, d) = train(&data, &rbf(), 0.05, tau(t), &opts).map_err(|e| e.to_string())?;
        kkt.record(&m, &data, d.converged, opts.band)?;
        let reference = reference_train(&data, &rbf(), 0.05, tau(t), 20_000).map_err(|e| e.to_string())?;
        let ours = objective(&m, &data).map_err(|e| e.to_string())?;
        let theirs = objective(&reference, &data).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max(ours - theirs);
    }
    Ok((
        analytic <= 1e-10 && worst_gap <= 1e-3,
        format!("(a) analytic error {analytic:.1e}; (c) max objective minus oracle {worst_gap:.2e}"),
    ))
}

fn kkt_line(kkt: &KktLog) -> Check {
    Ok((
        kkt.runs > 0 && kkt.worst <= 1e-6,
        format!("(b) max kkt residual {:.2e} over {} convergent runs", kkt.worst, kkt.runs),
    ))
}

/// Fractions of residuals above and below `f`, and the band-tie count.
struct QuantileStats {
    above: f64,
    below: f64,
    ties: usize,
    n: usize,
}

fn quantile_runs(kkt: &mut KktLog) -> Result<Vec<QuantileStats>, String> {
    let noise = ConditionalModel::uniform_noise(0.5, sine()).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let mut out = Vec::new();
    for seed in 0..5u64 {
        let data = noise.sample_joint(500, 7_000 + seed).map_err(|e| e.to_string())?;
        let (m, d) = train(&data, &rbf(), 1e-3, tau(0.25), &opts).map_err(|e| e.to_string())?;
        if !d.converged {
            return Err(format!("seed {seed} did not converge"));
        }
        kkt.record(&m, &data, d.converged, opts.band)?;
        let (mut above, mut below, mut ties) = (0usize, 0usize, 0usize);
        for (x, y) in data.iter() {
            let r = y - m.predict(x);
            if r.abs() <= opts.band {
                ties += 1;
            } else if r > 0.0 {
                above += 1;
            } else {
                below += 1;
            }
        }
        let n = data.len();
        out.push(QuantileStats { above: above as f64 / n as f64, below: below as f64 / n as f64, ties, n });
    }
    Ok(out)
}

fn quantile_check(stats: &[QuantileStats], pick: impl Fn(&QuantileStats) -> f64) -> Check {
    let t = 0.25;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in stats {
        let frac = pick(s);
        let slack = s.ties as f64 / s.n as f64 + 0.01;
        ok &= (frac - t).abs() <= slack;
        parts.push(format!("{frac:.3}(s={})", s.ties));
    }
    Ok((ok, format!("fractions {} against 0.25", parts.join(" "))))
}

fn criteria_8_9() -> (Check, Check) {
    let start = Instant::now();
    let run = || -> Result<qsvm_core::experiments::RateReport, String> {
        let noise = ConditionalModel::uniform_noise(0.5, sine()).map_err(|e| e.to_string())?;
        let mut cfg = RateConfig::new(noise, rbf(), tau(0.5), vec![128, 256, 512, 1024, 2048]);
        cfg.repetitions = 20;
        cfg.seed = 1;
        cfg.p = LpExponent::Infinite;
        cfg.q = 2.0;
        cfg.grid = GridMode::Geometric;
        cfg.rho = RhoSource::Estimated { points: 500 };
        learning_rate_experiment_with(&cfg, Execution::default()).map_err(|e| e.to_string())
    };
    let report = match run() {
        Ok(r) => r,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let elapsed = start.elapsed();
    let means: Vec<f64> = report.summary.iter().map(|s| s.mean_excess_risk).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let unconverged = report.rows.iter().filter(|r| !r.converged).count();
    let slope = report.excess_slope.unwrap_or(f64::NAN);
    let dist = report.dist_slope.unwrap_or(f64::NAN);
    let means_text: Vec<String> = means.iter().map(|m| format!("{m:.3e}")).collect();
    (
        Ok((
            slope <= -0.4 && decreasing && elapsed < Duration::from_secs(900),
            format!(
                "excess slope {slope:.3}, means [{}], strictly decreasing {decreasing}, {unconverged} unconverged, {:.0}s",
                means_text.join(", "),
                elapsed.as_secs_f64()
            ),
        )),
        Ok((dist <= -0.2, format!("distance slope {dist:.3} (theory gamma/q {:.3})", report.theoretical_gamma_over_q))),
    )
}

fn criterion_10() -> Check {
    let exact: Vec<f64> = (1..=200).map(|i| (i as f64).powi(-4)).collect();
    let fit = fit_power_law(&exact).map_err(|e| e.to_string())?;
    let xs = uniform_inputs(500, 1, 42);
    let gaussian = spectrum_decay(&rbf(), &xs, 1).map_err(|e| e.to_string())?;
    Ok((
        (fit.rho_hat - 0.25).abs() <= 1e-6 && gaussian.rho_hat <= 0.5,
        format!("power law rho {:.9}, Gaussian rho {:.4}", fit.rho_hat, gaussian.rho_hat),
    ))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn criterion_11() -> Check {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let mut text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        if stem == "rates" {
            // Same pipeline at a size that runs in seconds.
            text = text
                .replace("sample_sizes = [128, 256, 512, 1024, 2048]", "sample_sizes = [64, 96, 128]")
                .replace("repetitions = 20", "repetitions = 2");
        }
        let cfg = tmp.path().join(format!("{stem}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let mut bodies = Vec::new();
        for run in ["a", "b"] {
            let out = tmp.path().join(format!("{stem}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_qsvm"))
                .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Ok((false, format!("{stem} exited with {status}")));
            }
            bodies.push(std::fs::read(out.join("report.csv")).map_err(|e| e.to_string())?);
        }
        if bodies[0] != bodies[1] {
            return Ok((false, format!("{stem} report differs between runs")));
        }
        names.push(stem);
    }
    Ok((names.len() >= 7, format!("identical reports for {}", names.join(", "))))
}

fn line(id: &str, result: Check) -> bool {
    let (pass, detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {id} [{}] {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() -> ExitCode {
    let mut kkt = KktLog::default();
    let mut all = true;
    all &= line("1", criterion_1());
    all &= line("2", criterion_2());
    all &= line("3", criterion_3());
    all &= line("4", calibration_sweep(false));
    all &= line("5", calibration_sweep(true));
    let c6 = criterion_6(&mut kkt);
    match quantile_runs(&mut kkt) {
        Ok(stats) => {
            all &= line("6", c6.and_then(|(ok, d)| kkt_line(&kkt).map(|(k, kd)| (ok && k, format!("{d}; {kd}")))));
            all &= line("7", quantile_check(&stats, |s| s.above));
            all &= line("7b", quantile_check(&stats, |s| s.below));
        }
        Err(e) => {
            all &= line("6", c6);
            all &= line("7", Err(e.clone()));
            all &= line("7b", Err(e));
        }
    }
    let (c8, c9) = criteria_8_9();
    all &= line("8", c8);
    all &= line("9", c9);
    all &= line("10", criterion_10());
    all &= line("11", criterion_11());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
