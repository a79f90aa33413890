//! Convergence and regularity measurements on particle and PDE trajectories.

use rayon::prelude::*;

use crate::error::{CboError, Result};
use crate::noise::derive_seed;
use crate::objectives::Objective;
use crate::particle::{CboParams, CouplingRow, InitialGaussian, ParticleEnsemble};

/// Exact `W₂²` between the empirical measure of `positions` and `δ_{v*}`.
pub fn w2_to_dirac(positions: &[f64], dim: usize, v_star: &[f64]) -> Result<f64> {
    if dim == 0 || v_star.len() != dim || !positions.len().is_multiple_of(dim) {
        return Err(CboError::Domain("positions and v* have inconsistent dimensions".into()));
    }
    let n = positions.len() / dim;
    if n == 0 {
        return Err(CboError::Domain("w2_to_dirac needs at least one particle".into()));
    }
    let total: f64 = positions
        .chunks_exact(dim)
        .map(|p| p.iter().zip(v_star).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecaySeries {
    pub label: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DecaySeries {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(CboError::Domain("times and values differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CboError::Domain("times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(CboError::Domain("decay series contains non-finite entries".into()));
        }
        Ok(Self { label: label.into(), times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`. A series with no
/// variance in `y` is fitted exactly and reports `r² = 1`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(CboError::Domain("least squares needs two or more paired samples".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(CboError::Domain("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n as f64 * my * my || syy == 0.0 {
        1.0
    } else {
        1.0 - sse / syy
    };
    Ok(LinearFit { slope, intercept, r_squared, samples: n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Negated least-squares slope of `log(value)` against `t` on `[t0, t1]`.
pub fn fit_exponential_rate(series: &DecaySeries, window: (f64, f64)) -> Result<RateFit> {
    let (t0, t1) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in series.times.iter().zip(&series.values) {
        if t < t0 || t > t1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(CboError::Domain(format!("nonpositive value {v} at t = {t}")));
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 4 {
        return Err(CboError::Domain(format!("window [{t0}, {t1}] holds {} samples, need 4", xs.len())));
    }
    let fit = least_squares(&xs, &ys)?;
    Ok(RateFit { rate: -fit.slope, r_squared: fit.r_squared, samples: fit.samples })
}

/// Default start of the fit window: five steps past the initial transient.
pub fn default_fit_start(dt: f64) -> f64 {
    5.0 * dt
}

/// Runs `steps` CBO steps and records `W₂²(ρ̂_t, δ_{v*})` before every step and after the last.
pub fn record_w2_decay(ens: &mut ParticleEnsemble, obj: &Objective, v_star: &[f64], steps: u64) -> Result<DecaySeries> {
    let dim = ens.dim();
    let mut times = Vec::with_capacity(steps as usize + 1);
    let mut values = Vec::with_capacity(steps as usize + 1);
    for s in 0..=steps {
        if s > 0 {
            ens.step(obj)?;
        }
        times.push(ens.time());
        values.push(w2_to_dirac(ens.positions(), dim, v_star)?);
    }
    DecaySeries::new("w2_to_dirac", times, values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValphaRates {
    /// `max ‖Δv_α‖ / Δt`
    pub speed_sup: f64,
    /// `max ‖Δv_α‖ / √Δt`
    pub holder_sup: f64,
}

pub fn valpha_rate_check(path: &[(f64, Vec<f64>)]) -> Result<ValphaRates> {
    if path.len() < 3 {
        return Err(CboError::Domain("valpha path needs at least three samples".into()));
    }
    let mut rates = ValphaRates { speed_sup: 0.0, holder_sup: 0.0 };
    for w in path.windows(2) {
        let dt = w[1].0 - w[0].0;
        if !(dt > 0.0) || w[0].1.len() != w[1].1.len() {
            return Err(CboError::Domain("valpha path times must increase and points share a dimension".into()));
        }
        let dv = w[0].1.iter().zip(&w[1].1).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        rates.speed_sup = rates.speed_sup.max(dv / dt);
        rates.holder_sup = rates.holder_sup.max(dv / dt.sqrt());
    }
    Ok(rates)
}

/// One optimization run of [`success_probability`].
#[derive(Clone, Debug)]
pub struct SuccessSpec {
    pub objective: Objective,
    pub particles: usize,
    pub params: CboParams,
    pub initial: InitialGaussian,
    pub steps: u64,
    pub v_star: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuccessReport {
    pub runs: usize,
    pub epsilon: f64,
    pub hits: usize,
    pub fraction: f64,
    /// `‖mean(V_K) - v*‖` per run; infinite for a diverged run.
    pub final_errors: Vec<f64>,
    pub diverged: Vec<usize>,
}

/// Run `r` uses seed `derive_seed(spec.seed, r)`.
pub fn success_probability(spec: &SuccessSpec, runs: usize, epsilon: f64) -> Result<SuccessReport> {
    if runs == 0 {
        return Err(CboError::Config("success_probability needs at least one run".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(CboError::Config(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    spec.params.validate()?;
    if spec.v_star.len() != spec.objective.dim() || spec.initial.mean.len() != spec.objective.dim() {
        return Err(CboError::Config("v*, initial mean and objective dimensions differ".into()));
    }
    let outcomes: Vec<Result<Option<f64>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(spec.seed, r as u64);
            let mut ens = ParticleEnsemble::from_gaussian(spec.particles, &spec.initial, spec.params, seed, 0)?;
            for _ in 0..spec.steps {
                match ens.step(&spec.objective) {
                    Ok(_) => {}
                    Err(CboError::Divergence { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            let mean = ens.mean();
            Ok(Some(mean.iter().zip(&spec.v_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()))
        })
        .collect();
    let mut final_errors = Vec::with_capacity(runs);
    let mut diverged = Vec::new();
    let mut hits = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o? {
            Some(err) => {
                if err <= epsilon {
                    hits += 1;
                }
                final_errors.push(err);
            }
            None => {
                diverged.push(r);
                final_errors.push(f64::INFINITY);
            }
        }
    }
    Ok(SuccessReport { runs, epsilon, hits, fraction: hits as f64 / runs as f64, final_errors, diverged })
}

/// Slope and intercept of `log(error)` against `log(N)`; zero-error rows are dropped.
pub fn mfa_scaling_fit(rows: &[CouplingRow]) -> Result<LinearFit> {
    let kept: Vec<&CouplingRow> = rows.iter().filter(|r| r.error > 0.0 && r.error.is_finite()).collect();
    let mut sizes: Vec<usize> = kept.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(CboError::Domain(format!("{} distinct sizes with positive error, need 3", sizes.len())));
    }
    let x: Vec<f64> = kept.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = kept.iter().map(|r| r.error.ln()).collect();
    least_squares(&x, &y)
}
