//! One runner per experiment kind. Each returns the tables, summary lines and
//! checks of a run; writing them out is left to the caller.

use std::error::Error;
use std::f64::consts::PI;

use cbolab_core::cutoffs::{
    stratified_radial_points, verify_assumption_g1, verify_lemma_g4, CboCoefficients, CheckOptions, CoefficientField,
    InequalityReport, PowerCoefficients,
};
use cbolab_core::diagnostics::{
    default_fit_start, fit_exponential_rate, mfa_scaling_fit, success_probability, valpha_rate_check, w2_to_dirac,
    SuccessSpec,
};
use cbolab_core::pde::{confinement_probe_1d, grid_nodes, grid_values, positivity_probe, ConsensusSource, RunSummary};
use cbolab_core::particle::{run_coupling, CouplingExperiment};
use cbolab_core::sampling::RadialSampler;
use cbolab_core::{
    builtin_objective, CboParams, CutoffSpec, DecaySeries, InitialGaussian, Objective, ParticleEnsemble, PdeProblem,
    SpectralField, SpectralSolver,
};

use crate::config::{CoefficientKind, Experiment, ExperimentConfig, InitialShape, W2Target};
use crate::report::{num, CsvTable, Report};

pub type RunResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

pub fn run(cfg: &ExperimentConfig) -> RunResult<Report> {
    match cfg.experiment {
        Experiment::Optimize => optimize(cfg),
        Experiment::DecayFit => decay_fit(cfg),
        Experiment::PdeRun => pde_run(cfg),
        Experiment::Positivity => positivity(cfg),
        Experiment::Confinement1d => confinement_1d(cfg),
        Experiment::MflScaling => mfl_scaling(cfg),
        Experiment::AssumptionsCheck => assumptions_check(cfg),
        Experiment::LemmaCheck => lemma_check(cfg),
        Experiment::SuccessProb => success_prob(cfg),
    }
}

fn objective(cfg: &ExperimentConfig) -> RunResult<Objective> {
    Ok(builtin_objective(&cfg.objective.name, cfg.objective.dim)?)
}

fn params(cfg: &ExperimentConfig) -> CboParams {
    CboParams::new(cfg.cbo.lambda, cfg.cbo.sigma, cfg.cbo.alpha, cfg.cbo.dt)
}

fn initial_gaussian(cfg: &ExperimentConfig) -> InitialGaussian {
    InitialGaussian { mean: cfg.cbo.init_mean.clone().unwrap_or_default(), std: cfg.cbo.init_std }
}

fn minimizer(obj: &Objective) -> RunResult<Vec<f64>> {
    obj.known_minimizer()
        .map(<[f64]>::to_vec)
        .ok_or_else(|| format!("objective `{}` has no known minimizer", obj.name()).into())
}

fn fmt_point(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn axis_header(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("{prefix}{k}")).collect()
}

struct Trajectory {
    table: CsvTable,
    series: DecaySeries,
    final_consensus: Vec<f64>,
}

/// Particle CBO run recording `W₂²` to the configured target before every step and after the last.
fn particle_trajectory(cfg: &ExperimentConfig, target: W2Target) -> RunResult<Trajectory> {
    let obj = objective(cfg)?;
    let dim = obj.dim();
    let fixed = match target {
        W2Target::Minimizer => Some(minimizer(&obj)?),
        W2Target::Consensus => None,
    };
    let mut ens = ParticleEnsemble::from_gaussian(cfg.cbo.particles, &initial_gaussian(cfg), params(cfg), cfg.seed, 0)?;
    let mut header = vec!["step".to_string(), "t".into(), "w2".into(), "f_v_alpha".into()];
    header.extend(axis_header("v_alpha_", dim));
    let mut table = CsvTable { name: "decay.csv".into(), header, rows: vec![] };
    let (mut times, mut values) = (vec![], vec![]);
    let mut consensus = vec![];
    for s in 0..=cfg.cbo.steps {
        let c = ens.consensus(&obj)?;
        let target_point = fixed.as_deref().unwrap_or(&c.point);
        let w2 = w2_to_dirac(ens.positions(), dim, target_point)?;
        let mut row = vec![s.to_string(), num(ens.time()), num(w2), num(obj.eval(&c.point))];
        row.extend(c.point.iter().map(|x| num(*x)));
        table.push(row);
        times.push(ens.time());
        values.push(w2);
        if s < cfg.cbo.steps {
            ens.advance(&c.point)?;
        }
        consensus = c.point;
    }
    Ok(Trajectory { table, series: DecaySeries::new("w2", times, values)?, final_consensus: consensus })
}

fn optimize(cfg: &ExperimentConfig) -> RunResult<Report> {
    let target = cfg.diagnostics.w2_target;
    let traj = particle_trajectory(cfg, target)?;
    let obj = objective(cfg)?;
    let w2 = *traj.series.values().last().expect("trajectory has at least one sample");
    let mut rep = Report::default();
    rep.line(format!("objective {} in dimension {}, {} particles, {} steps", obj.name(), obj.dim(), cfg.cbo.particles, cfg.cbo.steps));
    rep.line(format!("final consensus point {}", fmt_point(&traj.final_consensus)));
    rep.line(format!("f(v_alpha) = {:e}", obj.eval(&traj.final_consensus)));
    let target_name = match target {
        W2Target::Minimizer => "minimizer",
        W2Target::Consensus => "consensus point",
    };
    rep.line(format!("final W2^2 to the {target_name} = {w2:e}"));
    rep.check("final_w2", w2 <= cfg.diagnostics.w2_tol, format!("{w2:e} <= {:e}", cfg.diagnostics.w2_tol));
    rep.tables.push(traj.table);
    Ok(rep)
}

fn decay_fit(cfg: &ExperimentConfig) -> RunResult<Report> {
    let traj = particle_trajectory(cfg, cfg.diagnostics.w2_target)?;
    let d = &cfg.diagnostics;
    let start = d.fit_start.unwrap_or_else(|| default_fit_start(cfg.cbo.dt));
    let end = d.fit_end.unwrap_or(cfg.cbo.steps as f64 * cfg.cbo.dt);
    let fit = fit_exponential_rate(&traj.series, (start, end))?;
    let reference = 2.0 * cfg.cbo.lambda - cfg.objective.dim as f64 * cfg.cbo.sigma.powi(2);
    let mut rep = Report::default();
    rep.line(format!("fit window [{start}, {end}], {} samples", fit.samples));
    rep.line(format!("exponential rate {:.6} (r^2 {:.6})", fit.rate, fit.r_squared));
    rep.line(format!("2 lambda - d sigma^2 = {reference:.6}"));
    let [lo, hi] = d.rate_range;
    rep.check("rate_in_range", (lo..=hi).contains(&fit.rate), format!("{:.6} in [{lo}, {hi}]", fit.rate));
    rep.check("r_squared", fit.r_squared >= d.min_r_squared, format!("{:.6} >= {}", fit.r_squared, d.min_r_squared));
    let mut fit_table = CsvTable::new("fit.csv", &["rate", "r_squared", "samples", "window_start", "window_end"]);
    fit_table.push(vec![num(fit.rate), num(fit.r_squared), fit.samples.to_string(), num(start), num(end)]);
    rep.tables.push(traj.table);
    rep.tables.push(fit_table);
    Ok(rep)
}

fn pde_solver(cfg: &ExperimentConfig) -> RunResult<(SpectralSolver, SpectralField)> {
    let p = &cfg.pde;
    let dim = cfg.objective.dim;
    let consensus = match p.valpha_mode.as_str() {
        "frozen_path" => ConsensusSource::fixed(p.v_fixed.clone().unwrap_or_default()),
        _ => ConsensusSource::SelfConsistent { objective: objective(cfg)?, alpha: cfg.cbo.alpha },
    };
    let cutoff = if cfg.cutoff.enabled {
        Some(CutoffSpec::with_plateau(cfg.cutoff.r, cfg.cutoff.n, cfg.cutoff.plateau_scale)?)
    } else {
        None
    };
    let mut problem = PdeProblem::cbo(consensus, cutoff, p.horizon);
    problem.lambda = cfg.cbo.lambda;
    problem.sigma = cfg.cbo.sigma;
    problem.cfl = p.cfl;
    problem.dt = p.dt;
    let mut solver = SpectralSolver::new(problem, dim, p.half_width, p.modes, p.grid)?;
    let center = p.initial_center.clone().unwrap_or_default();
    let (radius, sharpness, shape) = (p.initial_radius, p.initial_sharpness, p.initial);
    let density = move |v: &[f64]| {
        let s2 = v.iter().zip(&center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>() / (radius * radius);
        match shape {
            InitialShape::Bump if s2 < 1.0 => (-sharpness / (1.0 - s2)).exp(),
            InitialShape::Bump => 0.0,
            InitialShape::Gaussian => (-0.5 * s2).exp() / (2.0 * PI * radius * radius).powf(0.5 * v.len() as f64),
        }
    };
    let mut initial = solver.project_initial(&density)?;
    let mass = initial.mass();
    if mass.is_nan() || mass <= 0.0 {
        return Err(format!("initial density has mass {mass}; check pde.initial_center and pde.initial_radius").into());
    }
    initial.scale(1.0 / mass);
    Ok((solver, initial))
}

fn mass_table(cfg: &ExperimentConfig, run: &RunSummary) -> CsvTable {
    let dim = cfg.objective.dim;
    let mut header = vec!["step".to_string(), "t".into(), "mass".into(), "dt_max".into()];
    header.extend(axis_header("v_alpha_", dim));
    let mut table = CsvTable { name: "mass.csv".into(), header, rows: vec![] };
    for r in &run.records {
        if r.step % cfg.pde.record_every != 0 && r.step != run.steps {
            continue;
        }
        let mut row = vec![r.step.to_string(), num(r.time), num(r.mass), num(r.dt_max)];
        match &r.v_alpha {
            Some(v) => row.extend(v.iter().map(|x| num(*x))),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        table.push(row);
    }
    table
}

fn density_table(field: &SpectralField) -> RunResult<CsvTable> {
    let dim = field.dim();
    let mut header = axis_header("v", dim);
    header.push("rho".into());
    let mut table = CsvTable { name: "density.csv".into(), header, rows: vec![] };
    let values = grid_values(field)?;
    for (v, rho) in grid_nodes(field).chunks_exact(dim).zip(&values) {
        let mut row: Vec<String> = v.iter().map(|x| num(*x)).collect();
        row.push(num(*rho));
        table.push(row);
    }
    Ok(table)
}

fn coefficient_table(name: String, field: &SpectralField) -> CsvTable {
    let dim = field.dim();
    let mut header = axis_header("k", dim);
    header.extend(["re".to_string(), "im".to_string()]);
    let mut table = CsvTable { name, header, rows: vec![] };
    for (idx, c) in field.coeffs().iter().enumerate() {
        let mut row: Vec<String> = field.wavevector(idx).iter().map(|k| k.to_string()).collect();
        row.extend([num(c.re), num(c.im)]);
        table.push(row);
    }
    table
}

/// Runs the solver, calling `observe` after every step and collecting
/// coefficient snapshots every `pde.snapshot_every` steps plus the final state.
fn run_pde(
    cfg: &ExperimentConfig,
    solver: &mut SpectralSolver,
    initial: &SpectralField,
    mut observe: impl FnMut(&SpectralField),
) -> RunResult<(RunSummary, Vec<CsvTable>)> {
    let every = cfg.pde.snapshot_every;
    let mut snapshots = vec![];
    let run = solver.run(initial, |rec, field| {
        let done = rec.step + 1;
        if every > 0 && done % every == 0 {
            snapshots.push(coefficient_table(format!("coefficients_{done}.csv"), field));
        }
        observe(field);
    })?;
    snapshots.push(coefficient_table("coefficients.csv".into(), &run.final_field));
    Ok((run, snapshots))
}

/// Common body of the PDE experiments: summary lines and output tables.
fn pde_report(cfg: &ExperimentConfig, solver: &mut SpectralSolver, initial: &SpectralField, run: &RunSummary) -> RunResult<Report> {
    let mut rep = Report::default();
    let drift = run.max_mass_drift(1.0);
    rep.line(format!(
        "d = {}, K = {}, M = {}, L = {}, horizon {}",
        cfg.objective.dim, cfg.pde.modes, cfg.pde.grid, cfg.pde.half_width, cfg.pde.horizon
    ));
    rep.line(format!("{} steps of dt = {:e}", run.steps, run.dt));
    rep.line(format!("max |mass - 1| = {drift:e}"));
    if let Some(v) = &run.final_v_alpha {
        rep.line(format!("final v_alpha {}", fmt_point(v)));
    }
    let path = run.valpha_path();
    if path.len() >= 3 {
        let rates = valpha_rate_check(&path)?;
        rep.line(format!("v_alpha speed sup {:.6}, Holder-1/2 sup {:.6}", rates.speed_sup, rates.holder_sup));
    }
    let (l2_0, h1_0) = solver.energy(initial, 0.0)?;
    let (l2_t, h1_t) = solver.energy(&run.final_field, run.final_time)?;
    rep.line(format!("L2^2 {l2_0:e} -> {l2_t:e}, weighted H1 {h1_0:e} -> {h1_t:e}"));
    rep.tables.push(mass_table(cfg, run));
    if cfg.pde.write_density {
        rep.tables.push(density_table(&run.final_field)?);
    }
    Ok(rep)
}

fn pde_run(cfg: &ExperimentConfig) -> RunResult<Report> {
    let (mut solver, initial) = pde_solver(cfg)?;
    let (run, snapshots) = run_pde(cfg, &mut solver, &initial, |_| {})?;
    let mut rep = pde_report(cfg, &mut solver, &initial, &run)?;
    rep.tables.extend(snapshots);
    let drift = run.max_mass_drift(1.0);
    rep.check("mass_conservation", drift <= cfg.diagnostics.mass_tol, format!("{drift:e} <= {:e}", cfg.diagnostics.mass_tol));
    Ok(rep)
}

fn positivity(cfg: &ExperimentConfig) -> RunResult<Report> {
    let (mut solver, initial) = pde_solver(cfg)?;
    let (run, snapshots) = run_pde(cfg, &mut solver, &initial, |_| {})?;
    let mut rep = pde_report(cfg, &mut solver, &initial, &run)?;
    rep.tables.extend(snapshots);
    let d = &cfg.diagnostics;
    let center = match &run.final_v_alpha {
        Some(v) => v.clone(),
        None => cfg.pde.v_fixed.clone().unwrap_or_default(),
    };
    let [inner, outer] = d.annulus;
    let probe = positivity_probe(&run.final_field, &center, inner, outer)?;
    let positive = probe.min_value > d.positivity_floor;
    if positive {
        rep.line("min density on annulus > 0");
    } else {
        rep.line("min density on annulus is not positive");
    }
    rep.line(format!(
        "annulus {inner} <= |v - v_alpha| <= {outer}: min {:e} at {} over {} nodes",
        probe.min_value,
        fmt_point(&probe.argmin),
        probe.points
    ));
    rep.check("positivity", positive, format!("{:e} > {:e}", probe.min_value, d.positivity_floor));
    let drift = run.max_mass_drift(1.0);
    let mut header = vec!["t".to_string(), "r_inner".into(), "r_outer".into(), "min_value".into()];
    header.extend(axis_header("argmin_", center.len()));
    header.extend(["nodes".to_string(), "max_mass_drift".into()]);
    let mut probe_table = CsvTable { name: "probe.csv".into(), header, rows: vec![] };
    let mut row = vec![num(run.final_time), num(inner), num(outer), num(probe.min_value)];
    row.extend(probe.argmin.iter().map(|x| num(*x)));
    row.extend([probe.points.to_string(), num(drift)]);
    probe_table.push(row);
    rep.tables.push(probe_table);
    rep.check("mass_conservation", drift <= d.mass_tol, format!("{drift:e} <= {:e}", d.mass_tol));
    Ok(rep)
}

fn confinement_1d(cfg: &ExperimentConfig) -> RunResult<Report> {
    if cfg.objective.dim != 1 {
        return Err(format!("confinement-1d needs objective.dim = 1, got {}", cfg.objective.dim).into());
    }
    if cfg.pde.valpha_mode != "frozen_path" {
        return Err("confinement-1d needs pde.valpha_mode = \"frozen_path\"".into());
    }
    let v_star = cfg.pde.v_fixed.as_ref().map_or(0.0, |v| v[0]);
    let (mut solver, initial) = pde_solver(cfg)?;
    let start = confinement_probe_1d(&initial, v_star)?;
    let mut masses = vec![start];
    let mut probe_err = None;
    let (run, snapshots) = run_pde(cfg, &mut solver, &initial, |field| match confinement_probe_1d(field, v_star) {
        Ok(m) => masses.push(m),
        Err(e) => probe_err = Some(e),
    })?;
    if let Some(e) = probe_err {
        return Err(e.into());
    }
    let mut table = CsvTable::new("confinement.csv", &["step", "t", "mass_right"]);
    for (s, m) in masses.iter().enumerate() {
        table.push(vec![s.to_string(), num(s as f64 * run.dt), num(*m)]);
    }
    let worst = masses.iter().copied().fold(0.0, f64::max);
    let mut rep = pde_report(cfg, &mut solver, &initial, &run)?;
    rep.line(format!("v* = {v_star}, max mass right of v* over the run {worst:e}"));
    let tol = cfg.diagnostics.confinement_tol;
    rep.check("confinement", worst <= tol, format!("{worst:e} <= {tol:e}"));
    rep.tables.push(table);
    rep.tables.extend(snapshots);
    Ok(rep)
}

fn mfl_scaling(cfg: &ExperimentConfig) -> RunResult<Report> {
    let obj = objective(cfg)?;
    let d = &cfg.diagnostics;
    let exp = CouplingExperiment {
        sizes: d.sizes.clone(),
        reference_size: d.reference_size,
        horizon: d.horizon,
        replicates: d.replicates,
        seed: cfg.seed,
        initial: initial_gaussian(cfg),
    };
    let rows = run_coupling(&exp, &obj, &params(cfg))?;
    let fit = mfa_scaling_fit(&rows)?;
    let mut table = CsvTable::new("scaling.csv", &["n", "error", "runs"]);
    for r in &rows {
        table.push(vec![r.n.to_string(), num(r.error), r.runs.to_string()]);
    }
    let mut rep = Report::default();
    rep.line(format!("reference size {}, horizon {}, {} replicates", d.reference_size, d.horizon, d.replicates));
    for r in &rows {
        rep.line(format!("N = {:>6}: sup_t E|coupling gap|^2 = {:e} over {} runs", r.n, r.error, r.runs));
    }
    rep.line(format!("log-log slope {:.6} (intercept {:.6}, r^2 {:.6})", fit.slope, fit.intercept, fit.r_squared));
    let [lo, hi] = d.slope_range;
    rep.check("slope_in_range", (lo..=hi).contains(&fit.slope), format!("{:.6} in [{lo}, {hi}]", fit.slope));
    rep.tables.push(table);
    Ok(rep)
}

fn coefficient_field(cfg: &ExperimentConfig) -> Box<dyn CoefficientField> {
    let d = &cfg.diagnostics;
    let center = d.center.clone().unwrap_or_default();
    match d.coefficients {
        CoefficientKind::Cbo => Box::new(CboCoefficients { center }),
        CoefficientKind::Power => Box::new(PowerCoefficients { center, g_power: d.g_power, j_power: d.j_power }),
    }
}

fn inequality_rows(table: &mut CsvTable, samples: usize, report: &InequalityReport) {
    for e in &report.entries {
        table.push(vec![
            e.quantity.clone(),
            samples.to_string(),
            num(e.sup),
            num(e.bound),
            e.violations.to_string(),
            e.satisfied.to_string(),
        ]);
    }
}

const INEQUALITY_HEADER: [&str; 6] = ["quantity", "samples", "sup", "bound", "violations", "satisfied"];

fn assumptions_check(cfg: &ExperimentConfig) -> RunResult<Report> {
    let d = &cfg.diagnostics;
    let field = coefficient_field(cfg);
    let points = RadialSampler { dim: cfg.objective.dim, r_max: d.sample_radius, count: d.samples, seed: cfg.seed }.points();
    let opts = CheckOptions { max_order: d.max_order, bound: d.ratio_bound, ..CheckOptions::default() };
    let report = verify_assumption_g1(field.as_ref(), &points, &opts);
    let mut table = CsvTable::new("assumptions.csv", &INEQUALITY_HEADER);
    inequality_rows(&mut table, d.samples, &report);
    let mut rep = Report::default();
    rep.line(format!("{} samples in the ball of radius {}", d.samples, d.sample_radius));
    for e in &report.entries {
        rep.line(format!("{:<40} sup {:e}, {} violations", e.quantity, e.sup, e.violations));
        rep.check(&e.quantity, e.satisfied, format!("sup {:e} <= {:e}", e.sup, e.bound));
    }
    rep.tables.push(table);
    Ok(rep)
}

fn lemma_check(cfg: &ExperimentConfig) -> RunResult<Report> {
    let d = &cfg.diagnostics;
    let dim = cfg.objective.dim;
    let spec = CutoffSpec::with_plateau(cfg.cutoff.r, cfg.cutoff.n, cfg.cutoff.plateau_scale)?;
    let field = coefficient_field(cfg);
    let opts = CheckOptions { max_order: d.max_order, bound: d.ratio_bound, ..CheckOptions::default() };
    let mut table = CsvTable::new("lemma.csv", &INEQUALITY_HEADER);
    let mut reports = vec![];
    for count in [d.samples, 2 * d.samples] {
        let points = stratified_radial_points(dim, &spec, count, cfg.seed);
        let report = verify_lemma_g4(&field.as_ref(), &spec, &points, &opts)?;
        inequality_rows(&mut table, count, &report);
        reports.push(report);
    }
    let mut rep = Report::default();
    rep.line(format!("R = {}, n = {}, plateau scale {}", spec.r, spec.n, spec.plateau_scale));
    for (a, b) in reports[0].entries.iter().zip(&reports[1].entries) {
        let change = (b.sup - a.sup).abs() / a.sup.abs().max(f64::MIN_POSITIVE);
        rep.line(format!("{:<40} sup {:e} -> {:e} ({:.3}% change)", a.quantity, a.sup, b.sup, 100.0 * change));
        let ok = a.satisfied && b.satisfied && change <= d.refine_tol;
        rep.check(&a.quantity, ok, format!("change {change:.4} <= {}, {} violations", d.refine_tol, a.violations + b.violations));
    }
    rep.tables.push(table);
    Ok(rep)
}

fn success_prob(cfg: &ExperimentConfig) -> RunResult<Report> {
    let obj = objective(cfg)?;
    let v_star = minimizer(&obj)?;
    let spec = SuccessSpec {
        objective: obj,
        particles: cfg.cbo.particles,
        params: params(cfg),
        initial: initial_gaussian(cfg),
        steps: cfg.cbo.steps,
        v_star,
        seed: cfg.seed,
    };
    let d = &cfg.diagnostics;
    let report = success_probability(&spec, d.runs, d.epsilon)?;
    let mut table = CsvTable::new("success.csv", &["run", "final_error", "hit", "diverged"]);
    for (r, e) in report.final_errors.iter().enumerate() {
        let diverged = report.diverged.contains(&r);
        table.push(vec![r.to_string(), num(*e), (!diverged && *e <= d.epsilon).to_string(), diverged.to_string()]);
    }
    let mut rep = Report::default();
    rep.line(format!("{} runs, epsilon {}", report.runs, report.epsilon));
    rep.line(format!("success fraction {:.4} ({} hits, {} diverged)", report.fraction, report.hits, report.diverged.len()));
    rep.tables.push(table);
    Ok(rep)
}
