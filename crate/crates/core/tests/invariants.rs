//! Cross-module properties.

use proptest::prelude::*;

use qsvm_core::calibration::{quantile_selection, random_test_functions, ConditionalGrid};
use qsvm_core::distributions::{ConditionalModel, Family, Location, LpExponent, NuSpec};
use qsvm_core::exec::Execution;
use qsvm_core::inner_risk::{excess_inner_risk, inner_risk, min_inner_risk, self_calibration_fn};
use qsvm_core::kernels::KernelSpec;
use qsvm_core::quadrature::XQuadrature;
use qsvm_core::report::fmt_f64;
use qsvm_core::solver::{dual_box, kkt_residual, train, SolverOptions};
use qsvm_core::{clip, pinball_loss, Tau};

fn family(kind: u8, a: f64, b: f64) -> Family {
    match kind % 4 {
        0 => Family::BoundedDensityMixture {
            mixture_weight: 0.5 * a,
            half_width: 0.1 + 0.3 * b,
            nu: Some(NuSpec::Uniform { lo: -0.4, hi: 0.4 }),
        },
        1 => Family::PolynomialDensity {
            mixture_weight: 0.3 * a,
            exponent: 1.0 + b,
            floor: 30.0,
            cusp_level: 0.2 + 0.6 * b,
            nu: Some(NuSpec::Atoms { locations: vec![-0.2, 0.1], weights: vec![0.5, 0.5] }),
        },
        2 => Family::DiracAtomMixture {
            mixture_weight: 0.9 * a,
            atom: 0.4 * b - 0.2,
            nu: Some(NuSpec::Uniform { lo: -0.4, hi: 0.4 }),
        },
        _ => Family::TwoAtom {
            lower: -0.3,
            upper: 0.2,
            lower_weight: 0.1 + 0.4 * a,
            upper_weight: 0.1 + 0.4 * b,
            nu: Some(NuSpec::Uniform { lo: 0.25, hi: 0.45 }),
        },
    }
}

fn arb_model() -> impl Strategy<Value = ConditionalModel> {
    (0u8..4, 0.0..1.0f64, 0.0..1.0f64, 0.0..0.5f64).prop_map(|(k, a, b, amp)| {
        ConditionalModel::from_family(family(k, a, b), Location::Sine { amplitude: amp }).unwrap()
    })
}

fn arb_tau() -> impl Strategy<Value = Tau> {
    (0.02..0.98f64).prop_map(|t| Tau::new(t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pinball_is_nonnegative_and_zero_only_at_y(t in arb_tau(), y in -1.0..1.0f64, p in -1.5..1.5f64) {
        let l = pinball_loss(t, y, p);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, y == p);
        prop_assert!(pinball_loss(t, y, clip(p)) <= l + 1e-15);
    }

    #[test]
    fn excess_is_nonnegative_and_vanishes_on_quantiles(m in arb_model(), t in arb_tau(), x in -1.0..1.0f64, p in -1.0..1.0f64) {
        let x = [x];
        let e = excess_inner_risk(&m, &x, t, p);
        prop_assert!(e >= 0.0);
        let q = m.quantile_set(&x, t);
        prop_assert_eq!(excess_inner_risk(&m, &x, t, q.t_min), 0.0);
        prop_assert_eq!(excess_inner_risk(&m, &x, t, q.t_max), 0.0);
        let direct = inner_risk(&m, &x, t, p) - min_inner_risk(&m, &x, t).c_star;
        prop_assert!((e - direct).abs() < 1e-12);
    }

    #[test]
    fn self_calibration_is_monotone(m in arb_model(), t in arb_tau(), x in -1.0..1.0f64, e1 in 0.0..2.0f64, e2 in 0.0..2.0f64) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let x = [x];
        prop_assert!(self_calibration_fn(&m, &x, t, lo).unwrap() <= self_calibration_fn(&m, &x, t, hi).unwrap() + 1e-15);
    }

    #[test]
    fn population_quantities_are_consistent(m in arb_model(), t in arb_tau(), seed in any::<u64>()) {
        let grid = ConditionalGrid::new(&m, t, XQuadrature::composite(1, 8, 4).unwrap()).unwrap();
        let star = quantile_selection(&m, t);
        prop_assert_eq!(grid.excess_risk(&star), 0.0);
        prop_assert_eq!(grid.dist_norm(&star, LpExponent::Infinite), 0.0);
        for f in random_test_functions(4, 5, seed).unwrap() {
            let excess = grid.excess_risk(&f);
            prop_assert!(excess >= 0.0);
            // Pinball loss is 1-Lipschitz, so the variance term is at most the squared distance.
            prop_assert!(grid.variance_term(&f) <= grid.squared_distance(&f) + 1e-14);
            prop_assert!(grid.dist_norm(&f, LpExponent::Finite(1.0)) <= grid.dist_norm(&f, LpExponent::Infinite) + 1e-14);
        }
    }

    #[test]
    fn trained_models_are_feasible(seed in 0u64..1000, t in arb_tau(), log_lambda in -6.0..0.0f64) {
        let m = ConditionalModel::uniform_noise(0.5, Location::Sine { amplitude: 0.5 }).unwrap();
        let data = m.sample_joint(25, seed).unwrap();
        let lambda = 10f64.powf(log_lambda);
        let opts = SolverOptions::default();
        let (svm, diag) = train(&data, &KernelSpec::gaussian(0.5).unwrap(), lambda, t, &opts).unwrap();
        let (lo, hi) = dual_box(t, lambda, data.len());
        prop_assert!(svm.alpha.iter().all(|&a| a >= lo && a <= hi));
        prop_assert!(diag.duality_gap() >= -1e-9);
        if diag.converged {
            prop_assert!(kkt_residual(&svm, &data, opts.band).unwrap() <= 1e-6);
        }
        prop_assert!(data.iter().all(|(x, _)| svm.predict_clipped(x).abs() <= 1.0));
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

#[test]
fn sampling_and_test_functions_are_deterministic() {
    let m = ConditionalModel::uniform_noise(0.5, Location::Zero).unwrap();
    assert_eq!(m.sample_joint(50, 9).unwrap(), m.sample_joint(50, 9).unwrap());
    assert_ne!(m.sample_joint(50, 9).unwrap(), m.sample_joint(50, 10).unwrap());
    assert_eq!(random_test_functions(8, 10, 3).unwrap(), random_test_functions(8, 10, 3).unwrap());
}

#[test]
fn execution_modes_agree() {
    let v: Vec<usize> = (0..100).collect();
    let seq = Execution::Sequential.map_slice(&v, |x| x * x);
    let par = Execution::Parallel.map_slice(&v, |x| x * x);
    assert_eq!(seq, par);
}
