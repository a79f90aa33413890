mod common;

use std::sync::Arc;

use cbolab_core::cutoffs::{CboCoefficients, FnCoefficients};
use cbolab_core::objectives::builtin_objective;
use cbolab_core::pde::*;
use cbolab_core::CboError;
use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn constant_gradient_solver(dim: usize, l: f64, k: usize, g: f64) -> SpectralSolver {
    let field = FnCoefficients::new(dim, move |_: &[f64], _: f64| g, |_: &[f64], _: f64, out: &mut [f64]| out.iter_mut().for_each(|x| *x = 0.0));
    let problem = PdeProblem::general(EquationForm::Gradient, Arc::new(field), None, 1.0);
    SpectralSolver::new(problem, dim, l, k, 4 * k).unwrap()
}

fn frozen_cbo_solver(dim: usize, l: f64, k: usize, center: Vec<f64>, horizon: f64) -> SpectralSolver {
    let problem = PdeProblem::cbo(ConsensusSource::fixed(center), None, horizon);
    SpectralSolver::new(problem, dim, l, k, 4 * k).unwrap()
}

fn plane_wave(dim: usize, l: f64, k: usize, mode: i64, amp: f64) -> SpectralField {
    let mut f = SpectralField::zeros(dim, l, k, 4 * k).unwrap();
    let mut kv = vec![0; dim];
    kv[0] = mode;
    f.set_coeff(&kv, c(0.5 * amp, 0.0));
    kv[0] = -mode;
    f.set_coeff(&kv, c(0.5 * amp, 0.0));
    f
}

#[test]
fn projection_of_constant_is_the_zero_mode() {
    for dim in [1, 2] {
        let mut s = constant_gradient_solver(dim, 6.0, 8, 1.0);
        let f = s.project_initial(&|_| 0.7).unwrap();
        let zero = vec![0; dim];
        assert!((f.coeff(&zero) - c(0.7, 0.0)).norm() < 1e-14);
        let others = f.coeffs().iter().enumerate().filter(|(i, _)| *i != f.index(&zero).unwrap());
        assert!(others.map(|(_, z)| z.norm()).fold(0.0, f64::max) < 1e-14);
    }
}

#[test]
fn projection_of_cosine_is_one_conjugate_pair() {
    let l = 5.0;
    let mut s = constant_gradient_solver(1, l, 8, 1.0);
    let f = s.project_initial(&|v| (std::f64::consts::PI * 3.0 * v[0] / l).cos()).unwrap();
    for k in -8..=8i64 {
        let expect = if k.abs() == 3 { 0.5 } else { 0.0 };
        assert!((f.coeff(&[k]) - c(expect, 0.0)).norm() < 1e-14, "k = {k}");
    }
}

#[test]
fn gaussian_projection_reproduces_the_sampler() {
    let l = 8.0;
    let sampler = |v: &[f64]| (-(v[0] - 1.0).powi(2) / 0.5 - (v[1] + 0.5).powi(2) / 0.8).exp();
    let mut s = constant_gradient_solver(2, l, 48, 1.0);
    let f = s.project_initial(&sampler).unwrap();
    let values = s.grid_values(&f).unwrap();
    let nodes = grid_nodes(&f);
    let err = nodes.chunks_exact(2).zip(&values).map(|(v, x)| (x - sampler(v)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "reconstruction error {err}");
    assert!(f.conjugate_symmetry_error() < 1e-15);
}

#[test]
fn projection_applies_the_support_taper() {
    let spec = cbolab_core::CutoffSpec::new(2.0, 3.0).unwrap();
    let problem = PdeProblem::cbo(ConsensusSource::fixed(vec![0.0]), Some(spec.clone()), 1.0);
    let mut s = SpectralSolver::new(problem, 1, 8.0, 64, 256).unwrap();
    let f = s.project_initial(&|_| 1.0).unwrap();
    let values = s.grid_values(&f).unwrap();
    for (j, x) in values.iter().enumerate() {
        let v = f.grid_point(j);
        if v.abs() > 4.0 {
            assert!(x.abs() < 2e-2, "taper inactive at {v}: {x}");
        }
        if v.abs() < 3.0 {
            assert!((x - 1.0).abs() < 2e-2, "taper active at {v}: {x}");
        }
    }
    assert!(s.project_initial(&|_| f64::NAN).is_err());
}

#[test]
fn rhs_of_constant_field() {
    for dim in [1, 2] {
        let mut f = SpectralField::zeros(dim, 4.0, 6, 24).unwrap();
        f.set_coeff(&vec![0; dim], c(0.3, 0.0));
        let mut s = constant_gradient_solver(dim, 4.0, 6, 2.0);
        let (r, _) = s.rhs(&f, 0.0).unwrap();
        assert!(r.max_abs_diff(&f) < 1e-15);
        let mut s = frozen_cbo_solver(dim, 4.0, 6, vec![0.4; dim], 1.0);
        let (r, _) = s.rhs(&f, 0.0).unwrap();
        let mut expect = f.clone();
        expect.scale(3.0 * dim as f64);
        assert!(r.max_abs_diff(&expect) < 1e-14, "dim {dim}");
    }
}

#[test]
fn plane_wave_is_an_eigenfunction() {
    let (l, g) = (3.0, 0.7);
    for dim in [1, 2] {
        for mode in [1, 4, 7] {
            let f = plane_wave(dim, l, 8, mode, 1.0);
            let mut s = constant_gradient_solver(dim, l, 8, g);
            let (r, _) = s.rhs(&f, 0.0).unwrap();
            let kappa = std::f64::consts::PI * mode as f64 / l;
            let mut expect = f.clone();
            expect.scale(-g * kappa * kappa + 1.0);
            assert!(r.max_abs_diff(&expect) < 1e-13, "dim {dim} mode {mode}");
        }
    }
}

#[test]
fn manufactured_cancellation_keeps_the_field() {
    let l = 4.0;
    let f = {
        let mut f = plane_wave(1, l, 8, 3, 0.4);
        f.set_coeff(&[0], c(1.0, 0.0));
        f.set_coeff(&[2], c(0.1, -0.2));
        f.set_coeff(&[-2], c(0.1, 0.2));
        f
    };
    let values = grid_values(&f).unwrap();
    let grid: Vec<f64> = (0..f.grid()).map(|j| f.grid_point(j)).collect();
    let lookup = move |v: f64| {
        let j = grid.iter().position(|x| (x - v).abs() < 1e-12).expect("source queried off the grid");
        -values[j]
    };
    let field = FnCoefficients::new(1, |_: &[f64], _: f64| 0.0, |_: &[f64], _: f64, out: &mut [f64]| out[0] = 0.0)
        .with_source(move |v: &[f64], _: f64| lookup(v[0]));
    let problem = PdeProblem::general(EquationForm::Gradient, Arc::new(field), None, 1.0);
    let mut s = SpectralSolver::new(problem, 1, l, 8, 32).unwrap();
    let (next, _) = s.step(&f, 0.0, 0.05).unwrap();
    assert!(next.max_abs_diff(&f) < 1e-14);
}

#[test]
fn rk4_step_error_is_fifth_order() {
    let (l, g, mode) = (2.0, 0.3, 3);
    let kappa = std::f64::consts::PI * mode as f64 / l;
    let rate = -g * kappa * kappa + 1.0;
    let f = plane_wave(1, l, 4, mode, 1.0);
    let mut errs = vec![];
    for dt in [0.02, 0.01, 0.005] {
        let mut s = constant_gradient_solver(1, l, 4, g);
        let (next, _) = s.step(&f, 0.0, dt).unwrap();
        let exact = 0.5 * (rate * dt).exp();
        errs.push((next.coeff(&[mode]).re - exact).abs());
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 32.0).abs() < 3.0, "local error ratio {ratio}");
    }
}

#[test]
fn rk4_global_convergence_order() {
    let (l, g, mode, horizon) = (2.0, 0.3, 3, 0.4);
    let f = plane_wave(1, l, 4, mode, 1.0);
    let run = |steps: usize| {
        let mut s = constant_gradient_solver(1, l, 4, g);
        let dt = horizon / steps as f64;
        let mut x = f.clone();
        for i in 0..steps {
            x = s.step(&x, i as f64 * dt, dt).unwrap().0;
        }
        x.coeff(&[mode]).re
    };
    let reference = run(160);
    let e1 = (run(20) - reference).abs();
    let e2 = (run(40) - reference).abs();
    let ratio = e1 / e2;
    assert!(ratio > 13.0 && ratio < 19.0, "halving ratio {ratio}");
}

#[test]
fn step_refuses_to_exceed_the_stability_bound() {
    let f = plane_wave(1, 2.0, 8, 1, 1.0);
    let mut s = constant_gradient_solver(1, 2.0, 8, 1.0);
    let bound = s.dt_max(&f, 0.0).unwrap();
    let kmax = std::f64::consts::PI * 8.0 / 2.0;
    assert!((bound - DEFAULT_CFL / (kmax * kmax)).abs() < 1e-15);
    match s.step(&f, 0.0, 1.01 * bound) {
        Err(CboError::Unstable { dt, dt_max }) => assert!(dt > dt_max),
        other => panic!("expected an instability error, got {other:?}"),
    }
    assert!(s.step(&f, 0.0, 0.99 * bound).is_ok());
}

#[test]
fn cbo_1d_matches_finite_difference_oracle() {
    let (l, center, horizon) = (6.0, 0.3, 0.1);
    let sampler = |v: &[f64]| (-(v[0] - 1.0).powi(2) / (2.0 * 0.5 * 0.5)).exp();
    let mut s = frozen_cbo_solver(1, l, 128, vec![center], horizon);
    let f0 = s.project_initial(&sampler).unwrap();
    let summary = s.run(&f0, |_, _| {}).unwrap();
    let spectral = s.grid_values(&summary.final_field).unwrap();
    let n_fd = 2048;
    let ratio = n_fd / spectral.len();
    let init: Vec<f64> = (0..n_fd).map(|i| sampler(&[-l + 2.0 * l * i as f64 / n_fd as f64])).collect();
    let fd = fd_cbo_1d(&init, l, center, 1.0, std::f64::consts::SQRT_2, horizon);
    let err = spectral.iter().enumerate().map(|(j, x)| (x - fd[j * ratio]).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-4, "spectral vs finite differences: {err}");
}

#[test]
fn positivity_probe_examples() {
    let mut f = SpectralField::zeros(2, 4.0, 8, 32).unwrap();
    f.set_coeff(&[0, 0], c(0.25, 0.0));
    let p = positivity_probe(&f, &[0.0, 0.0], 0.5, 2.0).unwrap();
    assert!((p.min_value - 0.25).abs() < 1e-15);
    assert!(p.points > 0);
    assert!(positivity_probe(&f, &[0.0, 0.0], 2.0, 1.0).is_err());
    assert!(matches!(positivity_probe(&f, &[0.0, 0.0], 0.01, 0.02), Err(CboError::Domain(_))));

    let bump = |v: &[f64]| {
        let r2 = ((v[0] - 1.5).powi(2) + v[1].powi(2)) / 0.64;
        if r2 < 1.0 {
            (-8.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    };
    let mut s = frozen_cbo_solver(2, 4.0, 32, vec![0.0, 0.0], 1.0);
    let f = s.project_initial(&bump).unwrap();
    let p = positivity_probe(&f, &[0.0, 0.0], 0.25, 3.0).unwrap();
    assert!(p.min_value.abs() < 1e-6, "min {}", p.min_value);
}

#[test]
fn confinement_probe_examples() {
    let gauss = |v: &[f64]| (-(v[0] - 0.5).powi(2) * 2.0).exp();
    let mut s = frozen_cbo_solver(1, 8.0, 64, vec![0.5], 1.0);
    let mut f = s.project_initial(&gauss).unwrap();
    let m = f.mass();
    f.scale(1.0 / m);
    assert!((confinement_probe_1d(&f, 0.5).unwrap() - 0.5).abs() < 1e-10);
    let left = |v: &[f64]| (-(v[0] + 3.0).powi(2) * 4.0).exp();
    let f = s.project_initial(&left).unwrap();
    assert!(confinement_probe_1d(&f, 0.0).unwrap() < 1e-12);
    let two = SpectralField::zeros(2, 1.0, 2, 8).unwrap();
    assert!(confinement_probe_1d(&two, 0.0).is_err());
}

#[test]
fn energy_monitor_examples() {
    let (l, k, amp) = (3.0, 8, 0.6);
    let mut s = constant_gradient_solver(2, l, k, 1.0);
    let zero = SpectralField::zeros(2, l, k, 4 * k).unwrap();
    let wave = plane_wave(2, l, k, 2, amp);
    let series = energy_monitor(&mut s, &[(0.0, zero), (0.5, wave)]).unwrap();
    assert_eq!(series[0].l2, 0.0);
    assert_eq!(series[0].weighted_h1, 0.0);
    let expect = amp * amp * (2.0 * l).powi(2) / 2.0;
    assert!((series[1].l2 - expect).abs() < 1e-12 * expect);
    assert!(energy_monitor(&mut s, &[]).is_err());
}

#[test]
fn mass_examples() {
    let mut f = SpectralField::zeros(2, 2.5, 4, 16).unwrap();
    assert_eq!(mass(&f), 0.0);
    f.set_coeff(&[0, 0], c(0.2, 0.0));
    assert!((mass(&f) - 0.2 * 25.0).abs() < 1e-15);
}

#[test]
fn frozen_cbo_run_conserves_mass_and_energy_stays_bounded() {
    let sampler = |v: &[f64]| (-((v[0] - 1.0).powi(2) + (v[1] - 0.5).powi(2)) / 0.5).exp();
    let mut problem = PdeProblem::cbo(ConsensusSource::fixed(vec![0.0, 0.0]), None, 0.2);
    problem.sigma = 0.5;
    let mut s = SpectralSolver::new(problem, 2, 5.0, 16, 64).unwrap();
    let mut f0 = s.project_initial(&sampler).unwrap();
    let m = f0.mass();
    f0.scale(1.0 / m);
    let (dt, _) = s.planned_dt(&f0).unwrap();
    let mut history = vec![(0.0, f0.clone())];
    let summary = s
        .run(&f0, |rec, f| {
            if rec.step % 100 == 99 {
                history.push((rec.time + dt, f.clone()));
            }
        })
        .unwrap();
    assert!(summary.max_mass_drift(1.0) <= 1e-3, "mass drift {}", summary.max_mass_drift(1.0));
    let energy = energy_monitor(&mut s, &history).unwrap();
    let e0 = energy[0].l2;
    for e in &energy {
        assert!(e.l2.is_finite() && e.l2 <= e0 * (1.25 * 2.0 * e.time).exp() * (1.0 + 1e-9));
        assert!(e.weighted_h1.is_finite());
    }
}

#[test]
fn self_consistent_breakdown_propagates() {
    let obj = builtin_objective("quadratic", 1).unwrap();
    let problem = PdeProblem::cbo(ConsensusSource::SelfConsistent { objective: obj, alpha: 1.0 }, None, 1.0);
    let mut s = SpectralSolver::new(problem, 1, 4.0, 8, 32).unwrap();
    let mut f = SpectralField::zeros(1, 4.0, 8, 32).unwrap();
    f.set_coeff(&[0], c(-1.0, 0.0));
    assert!(matches!(s.rhs(&f, 0.0), Err(CboError::Breakdown(_))));
}

#[test]
fn solver_rejects_mismatched_configuration() {
    let obj = builtin_objective("quadratic", 2).unwrap();
    let problem = PdeProblem::cbo(ConsensusSource::SelfConsistent { objective: obj, alpha: 1.0 }, None, 1.0);
    assert!(SpectralSolver::new(problem.clone(), 1, 4.0, 8, 32).is_err());
    assert!(SpectralSolver::new(problem.clone(), 2, 4.0, 8, 31).is_err());
    let mut p = problem;
    p.dt = Some(-1.0);
    assert!(SpectralSolver::new(p, 2, 4.0, 8, 32).is_err());
    let wrong = PdeProblem::general(EquationForm::Gradient, Arc::new(CboCoefficients { center: vec![0.0] }), None, 1.0);
    assert!(SpectralSolver::new(wrong, 2, 4.0, 8, 32).is_err());
    assert!("cbo_form".parse::<EquationForm>().is_ok());
    assert!("weak_form".parse::<EquationForm>().is_err());
}

#[test]
fn spectral_convergence_of_gaussian_projection() {
    let l = 6.0;
    let sampler = |v: &[f64]| (-v[0] * v[0] / (2.0 * 0.6 * 0.6)).exp();
    let err = |k: usize| {
        let mut s = constant_gradient_solver(1, l, k, 1.0);
        let f = s.project_initial(&sampler).unwrap();
        let fine = 64 * k;
        let mut t = SpectralTransform::new(1, k, fine).unwrap();
        let mut out = vec![0.0; fine];
        t.to_grid(f.coeffs(), &mut out);
        (0..fine).map(|j| (out[j] - sampler(&[-l + 2.0 * l * j as f64 / fine as f64])).abs()).fold(0.0, f64::max)
    };
    let (e8, e16, e32) = (err(8), err(16), err(32));
    assert!(e8 / e16 > 16.0 && (e16 / e32 > 16.0 || e32 < 1e-13), "errors {e8} {e16} {e32}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frozen_rhs_is_linear(seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g1 = GaussianMixture::random(&mut rng, 2, 2, 1.5, (0.4, 0.8));
        let g2 = GaussianMixture::random(&mut rng, 2, 3, 1.5, (0.4, 0.8));
        let mut s = frozen_cbo_solver(2, 6.0, 16, vec![0.2, -0.1], 1.0);
        let f1 = s.project_initial(&|v| g1.eval(v)).unwrap();
        let f2 = s.project_initial(&|v| g2.eval(v)).unwrap();
        let mut mix = f1.clone();
        mix.scale(a);
        mix.axpy(b, &f2);
        let (r1, _) = s.rhs(&f1, 0.0).unwrap();
        let (r2, _) = s.rhs(&f2, 0.0).unwrap();
        let (rm, _) = s.rhs(&mix, 0.0).unwrap();
        let mut expect = r1.clone();
        expect.scale(a);
        expect.axpy(b, &r2);
        let scale = r1.coeffs().iter().chain(r2.coeffs()).map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(rm.max_abs_diff(&expect) <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn operations_preserve_conjugate_symmetry(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GaussianMixture::random(&mut rng, 2, 2, 1.0, (0.5, 0.9));
        let obj = builtin_objective("quadratic", 2).unwrap();
        let spec = cbolab_core::CutoffSpec::with_plateau(4.0, 4.0, 0.45).unwrap();
        let problem = PdeProblem::cbo(ConsensusSource::SelfConsistent { objective: obj, alpha: 2.0 }, Some(spec), 1.0);
        let mut s = SpectralSolver::new(problem, 2, 6.0, 12, 48).unwrap();
        let f = s.project_initial(&|v| g.eval(v)).unwrap();
        prop_assert!(f.conjugate_symmetry_error() < 1e-15);
        let (r, _) = s.rhs(&f, 0.0).unwrap();
        prop_assert!(r.conjugate_symmetry_error() <= 1e-13 * r.coeffs().iter().map(|z| z.norm()).fold(1.0, f64::max));
        let dt = 0.5 * s.dt_max(&f, 0.0).unwrap();
        let (n, _) = s.step(&f, 0.0, dt).unwrap();
        prop_assert!(n.conjugate_symmetry_error() <= 1e-14);
    }

    #[test]
    fn galerkin_matrix_oracle_agrees(seed in any::<u64>(), k in 1usize..=4, divergence in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = 2.5;
        let deg = 2 * k - 1;
        let g = TrigPoly::random(&mut rng, l, deg, 0.3).lifted(0.1);
        let j = TrigPoly::random(&mut rng, l, deg, 0.5);
        let src = TrigPoly::random(&mut rng, l, deg, 0.2);
        let form = if divergence { EquationForm::Divergence } else { EquationForm::Gradient };
        let weak = if divergence { WeakForm::Divergence } else { WeakForm::Gradient };
        let (gc, jc, sc) = (g.clone(), j.clone(), src.clone());
        let field = FnCoefficients::new(1, move |v: &[f64], _: f64| gc.eval(v[0]), move |v: &[f64], _: f64, out: &mut [f64]| out[0] = jc.eval(v[0]))
            .with_source(move |v: &[f64], _: f64| sc.eval(v[0]));
        let problem = PdeProblem::general(form, Arc::new(field), None, 1.0);
        let mut s = SpectralSolver::new(problem, 1, l, k, 4 * k).unwrap();
        let rho = TrigPoly::random(&mut rng, l, k, 1.0);
        let mut f = SpectralField::zeros(1, l, k, 4 * k).unwrap();
        f.coeffs_mut().copy_from_slice(&rho.coeffs);
        let (r, _) = s.rhs(&f, 0.0).unwrap();
        let oracle = galerkin_rhs_1d(weak, k, l, &g, &j, &src, f.coeffs());
        let err = r.coeffs().iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "max coefficient difference {}", err);
    }
}
