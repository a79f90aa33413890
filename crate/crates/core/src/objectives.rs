//! Objective functions with metadata, and sampled checks of the growth
//! conditions placed on the cost.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{CboError, Result};
use crate::sampling::BoxSampler;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Immutable cost function; cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    eval: ScalarFn,
    grad: Option<VectorFn>,
    laplacian: Option<ScalarFn>,
    known_minimizer: Option<Vec<f64>>,
    lower_bound: f64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_grad", &self.grad.is_some())
            .field("has_laplacian", &self.laplacian.is_some())
            .field("known_minimizer", &self.known_minimizer)
            .field("lower_bound", &self.lower_bound)
            .finish()
    }
}

impl Objective {
    pub fn new<F>(name: impl Into<String>, dim: usize, lower_bound: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(CboError::Config("objective dimension must be at least 1".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            grad: None,
            laplacian: None,
            known_minimizer: None,
            lower_bound,
        })
    }

    pub fn with_gradient<F>(mut self, grad: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_laplacian<F>(mut self, lap: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.laplacian = Some(Arc::new(lap));
        self
    }

    pub fn with_minimizer(mut self, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), self.dim);
        self.known_minimizer = Some(v);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn known_minimizer(&self) -> Option<&[f64]> {
        self.known_minimizer.as_deref()
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_laplacian(&self) -> bool {
        self.laplacian.is_some()
    }

    #[inline]
    pub fn eval(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        (self.eval)(v)
    }

    pub fn gradient(&self, v: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| {
            let mut out = vec![0.0; self.dim];
            g(v, &mut out);
            out
        })
    }

    pub fn laplacian(&self, v: &[f64]) -> Option<f64> {
        self.laplacian.as_ref().map(|l| l(v))
    }

    /// Values at each row of a flat `N x dim` position array.
    pub fn eval_rows(&self, positions: &[f64]) -> Vec<f64> {
        positions.chunks_exact(self.dim).map(|v| self.eval(v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinObjective {
    Quadratic,
    Rastrigin,
    Ackley,
}

impl FromStr for BuiltinObjective {
    type Err = CboError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic" => Ok(Self::Quadratic),
            "rastrigin" => Ok(Self::Rastrigin),
            "ackley" => Ok(Self::Ackley),
            other => Err(CboError::Config(format!(
                "unknown objective `{other}` (expected quadratic, rastrigin or ackley)"
            ))),
        }
    }
}

impl fmt::Display for BuiltinObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quadratic => "quadratic",
            Self::Rastrigin => "rastrigin",
            Self::Ackley => "ackley",
        })
    }
}

pub const RASTRIGIN_A: f64 = 10.0;

/// Builds a named benchmark; all three have their global minimum 0 at the origin.
pub fn builtin_objective(name: &str, dim: usize) -> Result<Objective> {
    builtin(name.parse()?, dim)
}

pub fn builtin(kind: BuiltinObjective, dim: usize) -> Result<Objective> {
    use std::f64::consts::{E, PI};
    let tau = 2.0 * PI;
    let obj = match kind {
        BuiltinObjective::Quadratic => Objective::new("quadratic", dim, 0.0, |v: &[f64]| {
            v.iter().map(|x| x * x).sum()
        })?
        .with_gradient(|v: &[f64], g: &mut [f64]| {
            for (gi, x) in g.iter_mut().zip(v) {
                *gi = 2.0 * x;
            }
        })
        .with_laplacian(move |_| 2.0 * dim as f64),
        BuiltinObjective::Rastrigin => Objective::new("rastrigin", dim, 0.0, move |v: &[f64]| {
            RASTRIGIN_A * v.len() as f64
                + v.iter().map(|x| x * x - RASTRIGIN_A * (tau * x).cos()).sum::<f64>()
        })?
        .with_gradient(move |v: &[f64], g: &mut [f64]| {
            for (gi, x) in g.iter_mut().zip(v) {
                *gi = 2.0 * x + RASTRIGIN_A * tau * (tau * x).sin();
            }
        })
        .with_laplacian(move |v: &[f64]| {
            v.iter().map(|x| 2.0 + RASTRIGIN_A * tau * tau * (tau * x).cos()).sum()
        }),
        BuiltinObjective::Ackley => Objective::new("ackley", dim, 0.0, move |v: &[f64]| {
            let n = v.len() as f64;
            let sq = v.iter().map(|x| x * x).sum::<f64>() / n;
            let cs = v.iter().map(|x| (tau * x).cos()).sum::<f64>() / n;
            (20.0 * (1.0 - (-0.2 * sq.sqrt()).exp()) + (E - cs.exp())).max(0.0)
        })?,
    };
    Ok(obj.with_minimizer(vec![0.0; dim]))
}

/// Thresholds for the growth inequalities; `grad_power`/`lap_power` are the
/// polynomial orders used for the derivative ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthConstants {
    pub lipschitz: f64,
    pub upper: f64,
    pub lower: f64,
    pub radius: f64,
    pub grad_power: f64,
    pub lap_power: f64,
}

impl GrowthConstants {
    pub fn new(lipschitz: f64, upper: f64, lower: f64, radius: f64) -> Self {
        Self { lipschitz, upper, lower, radius, grad_power: 1.0, lap_power: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub lipschitz_ratio_max: f64,
    pub upper_quadratic_ratio_max: f64,
    /// Infimum over samples with `‖v‖ ≥ M`; `+∞` when no sample qualifies.
    pub lower_quadratic_ratio_min: f64,
    pub gradient_ratio_max: Option<f64>,
    pub laplacian_ratio_max: Option<f64>,
    pub sample_count: usize,
    pub pair_count: usize,
    pub lipschitz_satisfied: bool,
    pub upper_satisfied: bool,
    pub lower_satisfied: bool,
}

impl GrowthReport {
    pub fn all_satisfied(&self) -> bool {
        self.lipschitz_satisfied && self.upper_satisfied && self.lower_satisfied
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Raw ratio scan. Pairs are formed between consecutive samples and between
/// each sample and a nearby companion, so both global and local slopes are probed.
fn scan(obj: &Objective, sampler: &BoxSampler, grad_power: f64, lap_power: f64) -> Result<RawScan> {
    if sampler.is_degenerate() || sampler.dim() != obj.dim() {
        return Err(CboError::Config("growth sampler box is degenerate or has the wrong dimension".into()));
    }
    if sampler.count < 2 {
        return Err(CboError::Config("growth sampler needs at least two points".into()));
    }
    let pts = sampler.points();
    let vals: Vec<f64> = pts.iter().map(|p| obj.eval(p)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(CboError::Domain(format!("objective is not finite at sample {i}")));
    }
    let fl = obj.lower_bound();
    let mut raw = RawScan { lipschitz: 0.0, upper: 0.0, lower: Vec::new(), grad: None, lap: None, pairs: 0 };
    let mut lip = |v: &[f64], fv: f64, u: &[f64], fu: f64| {
        let duv = norm(&v.iter().zip(u).map(|(a, b)| a - b).collect::<Vec<_>>());
        if duv == 0.0 {
            return;
        }
        let denom = (norm(v) + norm(u)) * duv;
        raw.pairs += 1;
        raw.lipschitz = f64::max(raw.lipschitz, (fv - fu).abs() / denom);
    };
    for i in 0..pts.len() {
        let j = (i + 1) % pts.len();
        lip(&pts[i], vals[i], &pts[j], vals[j]);
        let near: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| a + 1e-3 * (b - a)).collect();
        let fnear = obj.eval(&near);
        lip(&pts[i], vals[i], &near, fnear);
    }
    for (p, &fv) in pts.iter().zip(&vals) {
        let r2 = p.iter().map(|x| x * x).sum::<f64>();
        raw.upper = f64::max(raw.upper, (fv - fl) / (1.0 + r2));
        if r2 > 0.0 {
            raw.lower.push((r2.sqrt(), (fv - fl) / r2));
        }
        let r = r2.sqrt();
        if let Some(g) = obj.gradient(p) {
            let ratio = norm(&g) / (1.0 + r.powf(grad_power));
            raw.grad = Some(raw.grad.unwrap_or(0.0f64).max(ratio));
        }
        if let Some(l) = obj.laplacian(p) {
            let ratio = l.abs() / (1.0 + r.powf(lap_power));
            raw.lap = Some(raw.lap.unwrap_or(0.0f64).max(ratio));
        }
    }
    Ok(raw)
}

struct RawScan {
    lipschitz: f64,
    upper: f64,
    lower: Vec<(f64, f64)>,
    grad: Option<f64>,
    lap: Option<f64>,
    pairs: usize,
}

impl RawScan {
    fn lower_min(&self, radius: f64) -> f64 {
        self.lower.iter().filter(|(r, _)| *r >= radius).map(|(_, q)| *q).fold(f64::INFINITY, f64::min)
    }
}

/// Check mode: sampled ratios compared against asserted constants.
pub fn check_growth_conditions(
    obj: &Objective,
    sampler: &BoxSampler,
    constants: &GrowthConstants,
) -> Result<GrowthReport> {
    let raw = scan(obj, sampler, constants.grad_power, constants.lap_power)?;
    let lower_min = raw.lower_min(constants.radius);
    Ok(GrowthReport {
        lipschitz_ratio_max: raw.lipschitz,
        upper_quadratic_ratio_max: raw.upper,
        lower_quadratic_ratio_min: lower_min,
        gradient_ratio_max: raw.grad,
        laplacian_ratio_max: raw.lap,
        sample_count: sampler.count,
        pair_count: raw.pairs,
        lipschitz_satisfied: raw.lipschitz <= constants.lipschitz,
        upper_satisfied: raw.upper <= constants.upper,
        lower_satisfied: lower_min >= constants.lower,
    })
}

/// Report mode: constants fitted from the sampled extremes with a relative margin.
pub fn fit_growth_constants(
    obj: &Objective,
    sampler: &BoxSampler,
    radius: f64,
    margin: f64,
) -> Result<GrowthConstants> {
    let raw = scan(obj, sampler, 1.0, 1.0)?;
    let lower = raw.lower_min(radius);
    Ok(GrowthConstants {
        lipschitz: raw.lipschitz * (1.0 + margin),
        upper: raw.upper * (1.0 + margin),
        lower: if lower.is_finite() { lower / (1.0 + margin) } else { 0.0 },
        radius,
        grad_power: 1.0,
        lap_power: 1.0,
    })
}
