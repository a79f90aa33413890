use cbolab_core::objectives::{builtin_objective, check_growth_conditions, fit_growth_constants, GrowthConstants, Objective};
use cbolab_core::sampling::BoxSampler;
use proptest::prelude::*;

#[test]
fn builtin_values() {
    assert_eq!(builtin_objective("quadratic", 2).unwrap().eval(&[0.0, 0.0]), 0.0);
    assert_eq!(builtin_objective("rastrigin", 1).unwrap().eval(&[0.0]), 0.0);
    assert_eq!(builtin_objective("quadratic", 3).unwrap().eval(&[1.0, 1.0, 1.0]), 3.0);
    assert_eq!(builtin_objective("ackley", 5).unwrap().eval(&[0.0; 5]), 0.0);
    assert!(matches!(builtin_objective("sphere", 2), Err(cbolab_core::CboError::Config(_))));
}

#[test]
fn rastrigin_matches_its_formula() {
    let f = builtin_objective("rastrigin", 3).unwrap();
    let v = [0.5, -1.25, 2.0];
    let direct: f64 = 30.0 + v.iter().map(|x| x * x - 10.0 * (2.0 * std::f64::consts::PI * x).cos()).sum::<f64>();
    assert!((f.eval(&v) - direct).abs() < 1e-12);
}

#[test]
fn known_minimizers_are_minimal_on_a_grid() {
    for name in ["quadratic", "rastrigin", "ackley"] {
        let f = builtin_objective(name, 2).unwrap();
        let fstar = f.eval(f.known_minimizer().unwrap());
        for p in BoxSampler::cube(2, 5.0, 4000, 3).points() {
            assert!(f.eval(&p) >= fstar, "{name} at {p:?}");
        }
    }
}

#[test]
fn quadratic_satisfies_unit_growth_constants() {
    let f = builtin_objective("quadratic", 2).unwrap();
    let report = check_growth_conditions(&f, &BoxSampler::cube(2, 10.0, 5000, 1), &GrowthConstants::new(1.0, 1.0, 1.0, 0.0)).unwrap();
    assert!(report.all_satisfied(), "{report:?}");
    assert!(report.lipschitz_ratio_max <= 1.0 + 1e-12);
    assert!(report.gradient_ratio_max.is_some() && report.laplacian_ratio_max.is_some());
}

#[test]
fn rastrigin_satisfies_prescanned_constants() {
    let f = builtin_objective("rastrigin", 2).unwrap();
    let constants = fit_growth_constants(&f, &BoxSampler::cube(2, 8.0, 10_000, 17), 2.0, 0.25).unwrap();
    let report = check_growth_conditions(&f, &BoxSampler::cube(2, 8.0, 10_000, 29), &constants).unwrap();
    assert!(report.all_satisfied(), "{report:?} against {constants:?}");
}

#[test]
fn linear_growth_violates_the_lower_quadratic_bound() {
    let f = Objective::new("norm", 2, 0.0, |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt()).unwrap();
    let report = check_growth_conditions(&f, &BoxSampler::cube(2, 20.0, 2000, 5), &GrowthConstants::new(1e3, 1e3, 1.0, 1.0)).unwrap();
    assert!(!report.lower_satisfied);
    assert!(report.lower_quadratic_ratio_min < 0.1);
    assert_eq!(report.gradient_ratio_max, None);
}

#[test]
fn growth_check_rejects_bad_samplers() {
    let f = builtin_objective("quadratic", 2).unwrap();
    let c = GrowthConstants::new(1.0, 1.0, 1.0, 0.0);
    assert!(check_growth_conditions(&f, &BoxSampler::cube(2, 0.0, 10, 1), &c).is_err());
    assert!(check_growth_conditions(&f, &BoxSampler::cube(2, 1.0, 1, 1), &c).is_err());
    assert!(check_growth_conditions(&f, &BoxSampler::cube(3, 1.0, 10, 1), &c).is_err());
}

proptest! {
    #[test]
    fn lipschitz_ratio_ignores_constant_offsets(shift in -1e3..1e3f64, seed in 0u64..1000) {
        let base = builtin_objective("rastrigin", 2).unwrap();
        let b2 = base.clone();
        let moved = Objective::new("shifted", 2, shift, move |v: &[f64]| b2.eval(v) + shift).unwrap();
        let sampler = BoxSampler::cube(2, 4.0, 300, seed);
        let c = GrowthConstants::new(1e9, 1e9, 0.0, 0.0);
        let a = check_growth_conditions(&base, &sampler, &c).unwrap();
        let b = check_growth_conditions(&moved, &sampler, &c).unwrap();
        prop_assert!((a.lipschitz_ratio_max - b.lipschitz_ratio_max).abs() <= 1e-9 * a.lipschitz_ratio_max.max(1.0));
    }

    #[test]
    fn quadratic_lipschitz_ratio_never_exceeds_one(half in 0.1..100.0f64, seed in 0u64..1000, dim in 1usize..5) {
        let f = builtin_objective("quadratic", dim).unwrap();
        let r = check_growth_conditions(&f, &BoxSampler::cube(dim, half, 200, seed), &GrowthConstants::new(1.0, 1.0, 1.0, 0.0)).unwrap();
        prop_assert!(r.lipschitz_ratio_max <= 1.0 + 1e-9, "{}", r.lipschitz_ratio_max);
    }
}
