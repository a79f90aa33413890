use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use super::field::SpectralField;
use super::transform::SpectralTransform;
use crate::consensus::GibbsGrid;
use crate::cutoffs::{blend, CoefficientField, CutoffSpec};
use crate::error::{CboError, Result};
use crate::objectives::Objective;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Which strong form the right-hand side assembles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquationForm {
    /// `div(G∇ρ) + ⟨J,∇ρ⟩ + ρ + g`
    Gradient,
    /// `div(G∇ρ - Jρ) + ρ + g`
    Divergence,
    /// `(σ²/2) div(G∇ρ) + (λ+σ²)⟨J,∇ρ⟩ + (λ+σ²) d ρ`, the expanded form of
    /// `λ div(Jρ) + (σ²/2) Δ(Gρ)` for `G = ‖J‖²`, `J = v - v_α`.
    Cbo,
}

impl FromStr for EquationForm {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient_form" | "gradient" => Ok(Self::Gradient),
            "divergence_form" | "divergence" => Ok(Self::Divergence),
            "cbo_form" | "cbo" => Ok(Self::Cbo),
            other => Err(CboError::Config(format!(
                "unknown equation form `{other}` (expected gradient_form, divergence_form or cbo_form)"
            ))),
        }
    }
}

impl fmt::Display for EquationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient_form",
            Self::Divergence => "divergence_form",
            Self::Cbo => "cbo_form",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValphaMode {
    FrozenPath,
    SelfConsistent,
}

impl FromStr for ValphaMode {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen_path" | "frozen" => Ok(Self::FrozenPath),
            "self_consistent" => Ok(Self::SelfConsistent),
            other => Err(CboError::Config(format!(
                "unknown valpha mode `{other}` (expected frozen_path or self_consistent)"
            ))),
        }
    }
}

pub type PathFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Where the consensus point of the CBO coefficients comes from.
#[derive(Clone)]
pub enum ConsensusSource {
    Frozen(PathFn),
    SelfConsistent { objective: Objective, alpha: f64 },
}

impl ConsensusSource {
    pub fn fixed(point: Vec<f64>) -> Self {
        Self::Frozen(Arc::new(move |_| point.clone()))
    }

    pub fn mode(&self) -> ValphaMode {
        match self {
            Self::Frozen(_) => ValphaMode::FrozenPath,
            Self::SelfConsistent { .. } => ValphaMode::SelfConsistent,
        }
    }
}

#[derive(Clone)]
pub enum CoefficientSource {
    /// `G = ‖v - v_α‖²`, `J = v - v_α`, `g = 0`.
    Cbo(ConsensusSource),
    Field(Arc<dyn CoefficientField>),
}

#[derive(Clone)]
pub struct PdeProblem {
    pub form: EquationForm,
    pub coefficients: CoefficientSource,
    pub cutoff: Option<CutoffSpec>,
    pub lambda: f64,
    pub sigma: f64,
    /// Stability constant in `dt_max = cfl / (D max G_i ‖κ_max‖²)`.
    pub cfl: f64,
    pub horizon: f64,
    /// Fixed step; `None` picks `0.9 dt_max` at `t = 0` rounded to divide the horizon.
    pub dt: Option<f64>,
}

pub const DEFAULT_CFL: f64 = 2.5;
pub const AUTO_DT_SAFETY: f64 = 0.9;

impl PdeProblem {
    pub fn cbo(consensus: ConsensusSource, cutoff: Option<CutoffSpec>, horizon: f64) -> Self {
        Self {
            form: EquationForm::Cbo,
            coefficients: CoefficientSource::Cbo(consensus),
            cutoff,
            lambda: 1.0,
            sigma: std::f64::consts::SQRT_2,
            cfl: DEFAULT_CFL,
            horizon,
            dt: None,
        }
    }

    pub fn general(form: EquationForm, field: Arc<dyn CoefficientField>, cutoff: Option<CutoffSpec>, horizon: f64) -> Self {
        Self {
            form,
            coefficients: CoefficientSource::Field(field),
            cutoff,
            lambda: 1.0,
            sigma: std::f64::consts::SQRT_2,
            cfl: DEFAULT_CFL,
            horizon,
            dt: None,
        }
    }

    /// Diffusion prefactor `D` and drift/growth prefactor `c` of the form.
    pub fn prefactors(&self) -> (f64, f64) {
        match self.form {
            EquationForm::Cbo => (0.5 * self.sigma * self.sigma, self.lambda + self.sigma * self.sigma),
            _ => (1.0, 1.0),
        }
    }

    pub fn valpha_mode(&self) -> Option<ValphaMode> {
        match &self.coefficients {
            CoefficientSource::Cbo(c) => Some(c.mode()),
            CoefficientSource::Field(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageInfo {
    pub v_alpha: Option<Vec<f64>>,
    pub g_max: f64,
    pub clamped_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub v_alpha: Option<Vec<f64>>,
    pub dt_max: f64,
    pub clamped_fraction: f64,
}

/// One recorded step of [`SpectralSolver::run`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    /// Consensus point at the start of the step.
    pub v_alpha: Option<Vec<f64>>,
    pub dt_max: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dt: f64,
    pub steps: usize,
    pub records: Vec<StepRecord>,
    pub final_field: SpectralField,
    pub final_time: f64,
    pub final_v_alpha: Option<Vec<f64>>,
}

impl RunSummary {
    pub fn valpha_path(&self) -> Vec<(f64, Vec<f64>)> {
        self.records.iter().filter_map(|r| r.v_alpha.clone().map(|v| (r.time, v))).collect()
    }

    pub fn max_mass_drift(&self, reference: f64) -> f64 {
        self.records.iter().map(|r| (r.mass - reference).abs()).fold(0.0, f64::max)
    }
}

/// Pseudospectral Galerkin solver: spectral derivatives, pointwise products
/// with the (truncated) coefficients on the `M^d` grid, and classical RK4.
pub struct SpectralSolver {
    problem: PdeProblem,
    template: SpectralField,
    transform: SpectralTransform,
    nodes: Vec<f64>,
    shell: Vec<f64>,
    plateau: Vec<f64>,
    taper: Vec<f64>,
    unit: Vec<f64>,
    gibbs: Option<GibbsGrid>,
    kappa: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
    rho: Vec<f64>,
    g: Vec<f64>,
    j: Vec<Vec<f64>>,
    src: Vec<f64>,
    flux: Vec<Vec<f64>>,
    tsum: Vec<f64>,
    cbuf: Vec<Complex64>,
    ca: Vec<Complex64>,
    cb: Vec<Complex64>,
    cc: Vec<Complex64>,
}

struct NodeCache<'a> {
    nodes: &'a [f64],
    unit: &'a [f64],
    shell: &'a [f64],
    plateau: &'a [f64],
}

fn fill_cbo<const D: usize>(cache: &NodeCache<'_>, va: &[f64], r_shell: f64, g: &mut [f64], j: &mut [Vec<f64>]) {
    let n = g.len();
    let mut c = [0.0; D];
    c.copy_from_slice(va);
    let j: &mut [Vec<f64>; D] = j.try_into().expect("one drift component per axis");
    let mut j = j.each_mut().map(|v| &mut v[..n]);
    let nodes = cache.nodes[..n * D].chunks_exact(D);
    let unit = cache.unit[..n * D].chunks_exact(D);
    for (idx, ((((gi, v), u), &s), &h)) in g.iter_mut().zip(nodes).zip(unit).zip(&cache.shell[..n]).zip(&cache.plateau[..n]).enumerate() {
        if h == 0.0 {
            *gi = 0.0;
            for ja in j.iter_mut() {
                ja[idx] = 0.0;
            }
            continue;
        }
        let mut jb = [0.0; D];
        let mut gb = 0.0;
        for a in 0..D {
            jb[a] = v[a] - c[a];
            gb += jb[a] * jb[a];
        }
        if s == 0.0 {
            *gi = h * h * gb;
            for a in 0..D {
                j[a][idx] = h * jb[a];
            }
            continue;
        }
        let g_radial: f64 = (0..D).map(|a| (r_shell * u[a] - c[a]).powi(2)).sum();
        let mut jo = [0.0; D];
        *gi = blend(gb, &jb, g_radial, s, h, &mut jo);
        for a in 0..D {
            j[a][idx] = jo[a];
        }
    }
}

/// Flux `P` and scalar term `T` of the right-hand side on the grid.
#[allow(clippy::too_many_arguments)]
fn products<const D: usize>(
    form: EquationForm,
    diff: f64,
    drift: f64,
    g: &[f64],
    grad: &[Vec<f64>],
    j: &[Vec<f64>],
    rho: &[f64],
    src: &[f64],
    flux: &mut [Vec<f64>],
    tsum: &mut [f64],
) {
    let n = g.len();
    let grad: [&[f64]; D] = std::array::from_fn(|a| &grad[a][..n]);
    let j: [&[f64]; D] = std::array::from_fn(|a| &j[a][..n]);
    let mut flux: Vec<&mut [f64]> = flux.iter_mut().map(|f| &mut f[..n]).collect();
    let (rho, src, tsum) = (&rho[..n], &src[..n], &mut tsum[..n]);
    match form {
        EquationForm::Divergence => {
            for a in 0..D {
                for (((f, &gi), &d), (&ji, &r)) in flux[a].iter_mut().zip(g).zip(grad[a]).zip(j[a].iter().zip(rho)) {
                    *f = gi * d - ji * r;
                }
            }
            tsum.copy_from_slice(src);
        }
        _ => {
            for a in 0..D {
                for ((f, &gi), &d) in flux[a].iter_mut().zip(g).zip(grad[a]) {
                    *f = diff * gi * d;
                }
            }
            for idx in 0..n {
                let mut jd = 0.0;
                for a in 0..D {
                    jd += j[a][idx] * grad[a][idx];
                }
                tsum[idx] = drift * jd + src[idx];
            }
        }
    }
}

impl SpectralSolver {
    pub fn new(problem: PdeProblem, dim: usize, half_width: f64, modes: usize, grid: usize) -> Result<Self> {
        let template = SpectralField::zeros(dim, half_width, modes, grid)?;
        if !(problem.cfl > 0.0) || !(problem.horizon >= 0.0) {
            return Err(CboError::Config("cfl must be positive and the horizon nonnegative".into()));
        }
        if problem.form == EquationForm::Cbo && !(problem.lambda >= 0.0 && problem.sigma >= 0.0) {
            return Err(CboError::Config("lambda and sigma must be nonnegative".into()));
        }
        if let Some(dt) = problem.dt {
            if !(dt > 0.0) {
                return Err(CboError::Config(format!("dt must be positive, got {dt}")));
            }
        }
        match &problem.coefficients {
            CoefficientSource::Field(f) if f.dim() != dim => {
                return Err(CboError::Config(format!("coefficient field has dimension {}, solver {dim}", f.dim())));
            }
            CoefficientSource::Cbo(ConsensusSource::SelfConsistent { objective, alpha }) => {
                if objective.dim() != dim {
                    return Err(CboError::Config("objective dimension does not match the solver".into()));
                }
                if !(*alpha >= 0.0) {
                    return Err(CboError::Config("alpha must be nonnegative".into()));
                }
            }
            _ => {}
        }
        let transform = SpectralTransform::for_field(&template)?;
        let n = grid.pow(dim as u32);
        let mut nodes = vec![0.0; n * dim];
        for idx in 0..n {
            let mut rem = idx;
            for a in (0..dim).rev() {
                nodes[idx * dim + a] = template.grid_point(rem % grid);
                rem /= grid;
            }
        }
        let radii: Vec<f64> = nodes.chunks_exact(dim).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let (shell, plateau, taper) = match &problem.cutoff {
            Some(spec) => (
                radii.iter().map(|&r| spec.shell_at_radius(r)).collect(),
                radii.iter().map(|&r| spec.plateau_at_radius(r)).collect(),
                radii.iter().map(|&r| spec.taper_at_radius(r)).collect(),
            ),
            None => (vec![0.0; n], vec![1.0; n], vec![1.0; n]),
        };
        if shell.iter().zip(&radii).any(|(&s, &r)| s > 0.0 && r == 0.0) {
            return Err(CboError::RadialSingularity);
        }
        let unit: Vec<f64> = nodes
            .chunks_exact(dim)
            .zip(&radii)
            .flat_map(|(v, &r)| v.iter().map(move |x| if r > 0.0 { x / r } else { 0.0 }).collect::<Vec<_>>())
            .collect();
        let gibbs = match &problem.coefficients {
            CoefficientSource::Cbo(ConsensusSource::SelfConsistent { objective, alpha }) => {
                Some(GibbsGrid::new(nodes.clone(), dim, objective.eval_rows(&nodes), *alpha)?)
            }
            _ => None,
        };
        let nc = template.coeffs().len();
        let kappa = (0..dim)
            .map(|a| (0..nc).map(|i| template.wavenumber(template.wavevector(i)[a])).collect())
            .collect();
        Ok(Self {
            problem,
            transform,
            nodes,
            shell,
            plateau,
            taper,
            unit,
            gibbs,
            kappa,
            grad: vec![vec![0.0; n]; dim],
            rho: vec![0.0; n],
            g: vec![0.0; n],
            j: vec![vec![0.0; n]; dim],
            src: vec![0.0; n],
            flux: vec![vec![0.0; n]; dim],
            tsum: vec![0.0; n],
            cbuf: vec![ZERO; n],
            ca: vec![ZERO; nc],
            cb: vec![ZERO; nc],
            cc: vec![ZERO; nc],
            template,
        })
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn template(&self) -> &SpectralField {
        &self.template
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn transform(&mut self) -> &mut SpectralTransform {
        &mut self.transform
    }

    fn dim(&self) -> usize {
        self.template.dim()
    }

    fn check_shape(&self, field: &SpectralField) -> Result<()> {
        if field.dim() != self.template.dim()
            || field.modes() != self.template.modes()
            || field.grid() != self.template.grid()
            || field.half_width() != self.template.half_width()
        {
            return Err(CboError::Config("field shape does not match the solver".into()));
        }
        Ok(())
    }

    /// Projection of `ϱ(v)(1 - S(‖v‖ - n))` onto the truncated basis.
    pub fn project_initial(&mut self, sampler: &dyn Fn(&[f64]) -> f64) -> Result<SpectralField> {
        let dim = self.dim();
        let values: Vec<f64> = self
            .nodes
            .chunks_exact(dim)
            .zip(&self.taper)
            .map(|(v, &w)| if w == 0.0 { 0.0 } else { w * sampler(v) })
            .collect();
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(CboError::Domain(format!("initial density is not finite at grid node {i}")));
        }
        let mut field = self.template.same_shape();
        self.transform.from_grid(&values, field.coeffs_mut());
        Ok(field)
    }

    pub fn grid_values(&mut self, field: &SpectralField) -> Result<Vec<f64>> {
        self.check_shape(field)?;
        let mut out = vec![0.0; self.nodes.len() / self.dim()];
        self.transform.to_grid(field.coeffs(), &mut out);
        Ok(out)
    }

    fn consensus_at(&self, t: f64, rho: &[f64]) -> Result<(Vec<f64>, f64)> {
        match &self.problem.coefficients {
            CoefficientSource::Cbo(ConsensusSource::Frozen(path)) => {
                let v = path(t);
                if v.len() != self.dim() || v.iter().any(|x| !x.is_finite()) {
                    return Err(CboError::Domain(format!("consensus path is invalid at t = {t}")));
                }
                Ok((v, 0.0))
            }
            CoefficientSource::Cbo(ConsensusSource::SelfConsistent { .. }) => {
                let c = self.gibbs.as_ref().expect("self-consistent solver owns a Gibbs grid").consensus(rho)?;
                Ok((c.point, c.clamped_fraction))
            }
            CoefficientSource::Field(_) => unreachable!(),
        }
    }

    fn needs_rho(&self) -> bool {
        self.problem.form == EquationForm::Divergence
            || matches!(self.problem.coefficients, CoefficientSource::Cbo(ConsensusSource::SelfConsistent { .. }))
    }

    /// Fills `g`, `j`, `src` on the grid at time `t`; `rho` must hold grid
    /// values when the consensus is self-consistent.
    fn fill_coefficients(&mut self, t: f64) -> Result<StageInfo> {
        let dim = self.dim();
        let n = self.g.len();
        let r_shell = self.problem.cutoff.as_ref().map_or(0.0, |c| c.r);
        let mut info = StageInfo::default();
        let mut jb = [0.0f64; 2];
        let mut jo = [0.0f64; 2];
        match self.problem.coefficients.clone() {
            CoefficientSource::Cbo(_) => {
                let (va, clamped) = self.consensus_at(t, &self.rho)?;
                let cache = NodeCache { nodes: &self.nodes, unit: &self.unit, shell: &self.shell, plateau: &self.plateau };
                if dim == 1 {
                    fill_cbo::<1>(&cache, &va, r_shell, &mut self.g, &mut self.j);
                } else {
                    fill_cbo::<2>(&cache, &va, r_shell, &mut self.g, &mut self.j);
                }
                self.src.iter_mut().for_each(|x| *x = 0.0);
                info.v_alpha = Some(va);
                info.clamped_fraction = clamped;
            }
            CoefficientSource::Field(field) => {
                let mut proj = [0.0f64; 2];
                for idx in 0..n {
                    let v = &self.nodes[idx * dim..(idx + 1) * dim];
                    let w = self.taper[idx];
                    self.src[idx] = if w == 0.0 { 0.0 } else { w * field.source(v, t) };
                    let h = self.plateau[idx];
                    if h == 0.0 {
                        self.g[idx] = 0.0;
                        for a in 0..dim {
                            self.j[a][idx] = 0.0;
                        }
                        continue;
                    }
                    let s = self.shell[idx];
                    let g = if s < 1.0 {
                        field.j(v, t, &mut jb[..dim]);
                        field.g(v, t)
                    } else {
                        jb[..dim].iter_mut().for_each(|x| *x = 0.0);
                        0.0
                    };
                    let g_radial = if s > 0.0 {
                        let u = &self.unit[idx * dim..(idx + 1) * dim];
                        for a in 0..dim {
                            proj[a] = r_shell * u[a];
                        }
                        field.g(&proj[..dim], t)
                    } else {
                        0.0
                    };
                    self.g[idx] = blend(g, &jb[..dim], g_radial, s, h, &mut jo[..dim]);
                    for a in 0..dim {
                        self.j[a][idx] = jo[a];
                    }
                }
            }
        }
        info.g_max = self.g.iter().copied().fold(0.0, f64::max);
        if !info.g_max.is_finite() {
            return Err(CboError::Breakdown(format!("diffusion coefficient is not finite at t = {t}")));
        }
        Ok(info)
    }

    /// `dt_max = cfl / (D max_grid G_i ‖κ_max‖²)`.
    pub fn stability_bound(&self, g_max: f64) -> f64 {
        let (diff, _) = self.problem.prefactors();
        let denom = diff * g_max * self.template.max_wavenumber_sq();
        if denom > 0.0 {
            self.problem.cfl / denom
        } else {
            f64::INFINITY
        }
    }

    /// Time derivative of the coefficients of `field` at time `t`.
    pub fn rhs(&mut self, field: &SpectralField, t: f64) -> Result<(SpectralField, StageInfo)> {
        self.check_shape(field)?;
        let mut out = field.same_shape();
        let info = self.rhs_into(field.coeffs(), t, out.coeffs_mut())?;
        Ok((out, info))
    }

    fn rhs_into(&mut self, c: &[Complex64], t: f64, out: &mut [Complex64]) -> Result<StageInfo> {
        let dim = self.dim();
        let nc = c.len();
        let i = Complex64::i();
        for k in 0..nc {
            self.ca[k] = i * self.kappa[0][k] * c[k];
        }
        if dim == 1 {
            let (g0, rest) = self.grad.split_at_mut(1);
            let _ = rest;
            self.transform.to_grid_pair(&self.ca, c, &mut g0[0], &mut self.rho, &mut self.cbuf);
        } else {
            for k in 0..nc {
                self.cb[k] = i * self.kappa[1][k] * c[k];
            }
            let (g0, g1) = self.grad.split_at_mut(1);
            self.transform.to_grid_pair(&self.ca, &self.cb, &mut g0[0], &mut g1[0], &mut self.cbuf);
            if self.needs_rho() {
                self.transform.to_grid(c, &mut self.rho);
            }
        }
        let info = self.fill_coefficients(t)?;
        let (diff, drift) = self.problem.prefactors();
        let form = self.problem.form;
        if dim == 1 {
            products::<1>(form, diff, drift, &self.g, &self.grad, &self.j, &self.rho, &self.src, &mut self.flux, &mut self.tsum);
        } else {
            products::<2>(form, diff, drift, &self.g, &self.grad, &self.j, &self.rho, &self.src, &mut self.flux, &mut self.tsum);
        }
        let growth = match form {
            EquationForm::Cbo => drift * dim as f64,
            _ => 1.0,
        };
        if dim == 1 {
            self.transform.from_grid_pair(&self.flux[0], &self.tsum, &mut self.ca, &mut self.cc, &mut self.cbuf);
            for k in 0..nc {
                out[k] = i * self.kappa[0][k] * self.ca[k] + self.cc[k] + growth * c[k];
            }
        } else {
            self.transform.from_grid_pair(&self.flux[0], &self.flux[1], &mut self.ca, &mut self.cb, &mut self.cbuf);
            let has_t = self.tsum.iter().any(|&x| x != 0.0);
            if has_t {
                self.transform.from_grid(&self.tsum, &mut self.cc);
            } else {
                self.cc.iter_mut().for_each(|z| *z = ZERO);
            }
            for k in 0..nc {
                out[k] = i * (self.kappa[0][k] * self.ca[k] + self.kappa[1][k] * self.cb[k]) + self.cc[k] + growth * c[k];
            }
        }
        Ok(info)
    }

    /// Stability bound for a step starting from `field` at `t`.
    pub fn dt_max(&mut self, field: &SpectralField, t: f64) -> Result<f64> {
        let (_, info) = self.rhs(field, t)?;
        Ok(self.stability_bound(info.g_max))
    }

    /// Classical RK4 step; refuses to run when `dt` exceeds the stability bound
    /// computed from the first-stage coefficients.
    pub fn step(&mut self, field: &SpectralField, t: f64, dt: f64) -> Result<(SpectralField, StepInfo)> {
        self.check_shape(field)?;
        let (k1, info) = self.rhs(field, t)?;
        let dt_max = self.stability_bound(info.g_max);
        if dt > dt_max {
            return Err(CboError::Unstable { dt, dt_max });
        }
        let mut y = field.clone();
        y.axpy(0.5 * dt, &k1);
        let (k2, _) = self.rhs(&y, t + 0.5 * dt)?;
        let mut y = field.clone();
        y.axpy(0.5 * dt, &k2);
        let (k3, _) = self.rhs(&y, t + 0.5 * dt)?;
        let mut y = field.clone();
        y.axpy(dt, &k3);
        let (k4, _) = self.rhs(&y, t + dt)?;
        let mut next = field.clone();
        next.axpy(dt / 6.0, &k1);
        next.axpy(dt / 3.0, &k2);
        next.axpy(dt / 3.0, &k3);
        next.axpy(dt / 6.0, &k4);
        if !next.is_finite() {
            return Err(CboError::Breakdown(format!("field became non-finite at t = {}", t + dt)));
        }
        Ok((next, StepInfo { v_alpha: info.v_alpha, dt_max, clamped_fraction: info.clamped_fraction }))
    }

    /// Step size used by [`run`](Self::run): the fixed `dt` of the problem, or
    /// `0.9 dt_max(0)` shrunk so that it divides the horizon.
    pub fn planned_dt(&mut self, initial: &SpectralField) -> Result<(f64, usize)> {
        let horizon = self.problem.horizon;
        let target = match self.problem.dt {
            Some(dt) => dt,
            None => AUTO_DT_SAFETY * self.dt_max(initial, 0.0)?,
        };
        if horizon == 0.0 {
            return Ok((target, 0));
        }
        let steps = (horizon / target - 1e-9).ceil().max(1.0) as usize;
        Ok((horizon / steps as f64, steps))
    }

    /// Integrates to the horizon, calling `observe` with each step record and
    /// the field at the end of that step.
    pub fn run(
        &mut self,
        initial: &SpectralField,
        mut observe: impl FnMut(&StepRecord, &SpectralField),
    ) -> Result<RunSummary> {
        self.check_shape(initial)?;
        let (dt, steps) = self.planned_dt(initial)?;
        let mut field = initial.clone();
        let mut records = Vec::with_capacity(steps + 1);
        for s in 0..steps {
            let t = s as f64 * dt;
            let (next, info) = self.step(&field, t, dt)?;
            let rec = StepRecord { step: s, time: t, mass: field.mass(), v_alpha: info.v_alpha, dt_max: info.dt_max };
            field = next;
            observe(&rec, &field);
            records.push(rec);
        }
        let final_time = steps as f64 * dt;
        let (_, info) = self.rhs(&field, final_time)?;
        let dt_max = self.stability_bound(info.g_max);
        records.push(StepRecord { step: steps, time: final_time, mass: field.mass(), v_alpha: info.v_alpha.clone(), dt_max });
        Ok(RunSummary { dt, steps, records, final_field: field, final_time, final_v_alpha: info.v_alpha })
    }

    /// Coefficients `G_i` and `J_i` on the grid at time `t` for the given field.
    pub fn coefficient_grid(&mut self, field: &SpectralField, t: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, StageInfo)> {
        let _ = self.rhs(field, t)?;
        let info = {
            self.transform.to_grid(field.coeffs(), &mut self.rho);
            self.fill_coefficients(t)?
        };
        Ok((self.g.clone(), self.j.clone(), info))
    }

    /// `(∫ρ², ∫G_i‖∇ρ‖²)` by grid quadrature.
    pub fn energy(&mut self, field: &SpectralField, t: f64) -> Result<(f64, f64)> {
        let (g, _, _) = self.coefficient_grid(field, t)?;
        let cell = field.cell_volume();
        let dim = self.dim();
        let l2 = self.rho.iter().map(|x| x * x).sum::<f64>() * cell;
        let mut h1 = 0.0;
        for idx in 0..g.len() {
            let grad2: f64 = (0..dim).map(|a| self.grad[a][idx].powi(2)).sum();
            h1 += g[idx] * grad2;
        }
        Ok((l2, h1 * cell))
    }
}
