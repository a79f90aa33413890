//! Interacting CBO particles, mono-particles driven by an external consensus
//! path, the sphere-constrained variant and the coupling experiment.

use rayon::prelude::*;

use crate::consensus::{consensus_point, ConsensusResult};
use crate::error::{CboError, Result};
use crate::noise::{derive_seed, NoiseStream};
use crate::objectives::Objective;

const INIT_TAG: u64 = 0x1A17;
const PARALLEL_PARTICLES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CboParams {
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub dt: f64,
}

impl CboParams {
    pub fn new(lambda: f64, sigma: f64, alpha: f64, dt: f64) -> Self {
        Self { lambda, sigma, alpha, dt }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.lambda) || !ok(self.sigma) || !ok(self.alpha) {
            return Err(CboError::Config(format!(
                "lambda, sigma and alpha must be finite and nonnegative (got {}, {}, {})",
                self.lambda, self.sigma, self.alpha
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CboError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Spherical Gaussian initial law.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialGaussian {
    pub mean: Vec<f64>,
    pub std: f64,
}

/// `N x d` particle state. Particle `i` owns noise stream `stream_offset + i`,
/// which lets a sub-ensemble replay exactly the draws of a larger one.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    params: CboParams,
    seed: u64,
    stream_offset: u64,
    step_index: u64,
    noise: NoiseStream,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, params: CboParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(CboError::Config(format!(
                "{} coordinates do not form particles of dimension {dim}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(CboError::Domain(format!("initial position of particle {} is not finite", i / dim)));
        }
        Ok(Self { dim, positions, params, seed, stream_offset: 0, step_index: 0, noise: NoiseStream::new(seed) })
    }

    /// Draws `n` particles from `init`; particle `i` uses initial-data stream
    /// `stream_offset + i`, so overlapping ensembles share their particles.
    pub fn from_gaussian(
        n: usize,
        init: &InitialGaussian,
        params: CboParams,
        seed: u64,
        stream_offset: u64,
    ) -> Result<Self> {
        let dim = init.mean.len();
        if n == 0 || dim == 0 {
            return Err(CboError::Config("ensemble needs at least one particle and dimension".into()));
        }
        let draws = NoiseStream::new(derive_seed(seed, INIT_TAG));
        let mut positions = vec![0.0; n * dim];
        for (i, p) in positions.chunks_exact_mut(dim).enumerate() {
            draws.gaussian(stream_offset + i as u64, 0, p);
            for (x, m) in p.iter_mut().zip(&init.mean) {
                *x = m + init.std * *x;
            }
        }
        let mut ens = Self::new(dim, positions, params, seed)?;
        ens.stream_offset = stream_offset;
        Ok(ens)
    }

    pub fn with_stream_offset(mut self, offset: u64) -> Self {
        self.stream_offset = offset;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn params(&self) -> &CboParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_offset(&self) -> u64 {
        self.stream_offset
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.params.dt
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.positions.chunks_exact(self.dim) {
            for (a, x) in m.iter_mut().zip(p) {
                *a += x;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.len() as f64);
        m
    }

    /// `(1/N) Σ ‖V_i - mean‖²`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.positions
            .chunks_exact(self.dim)
            .map(|p| p.iter().zip(&m).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum::<f64>()
            / self.len() as f64
    }

    pub fn values(&self, obj: &Objective) -> Result<Vec<f64>> {
        if obj.dim() != self.dim {
            return Err(CboError::Config(format!(
                "objective dimension {} does not match ensemble dimension {}",
                obj.dim(),
                self.dim
            )));
        }
        let dim = self.dim;
        Ok(if self.len() >= PARALLEL_PARTICLES {
            self.positions.par_chunks_exact(dim).map(|v| obj.eval(v)).collect()
        } else {
            obj.eval_rows(&self.positions)
        })
    }

    pub fn consensus(&self, obj: &Objective) -> Result<ConsensusResult> {
        let values = self.values(obj)?;
        consensus_point(&self.positions, self.dim, &values, self.params.alpha)
    }

    /// One interacting CBO step; returns the consensus that drove it.
    pub fn step(&mut self, obj: &Objective) -> Result<ConsensusResult> {
        let c = self.consensus(obj)?;
        self.advance(&c.point)?;
        Ok(c)
    }

    /// One mono-particle step driven by an external consensus path.
    pub fn mono_step(&mut self, path: &dyn ConsensusPath) -> Result<()> {
        let v = path.value_at(self.step_index, self.time()).ok_or_else(|| {
            CboError::Domain(format!("consensus path undefined at step {} (t = {})", self.step_index, self.time()))
        })?;
        if v.len() != self.dim {
            return Err(CboError::Domain("consensus path has the wrong dimension".into()));
        }
        self.advance(&v)
    }

    /// `V ← (1 - λΔt)V + λΔt v_α + √Δt σ ‖V - v_α‖ B`, with `B` addressed by
    /// (particle stream, step index).
    pub fn advance(&mut self, v_alpha: &[f64]) -> Result<()> {
        let CboParams { lambda, sigma, dt, .. } = self.params;
        let a = lambda * dt;
        let amp = sigma * dt.sqrt();
        let (dim, step, offset) = (self.dim, self.step_index, self.stream_offset);
        let noise = &self.noise;
        let update = |(i, v): (usize, &mut [f64])| {
            let dist = v.iter().zip(v_alpha).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
            if dist == 0.0 {
                return;
            }
            let mut b = [0.0f64; 16];
            let mut heap;
            let b: &mut [f64] = if dim <= 16 {
                &mut b[..dim]
            } else {
                heap = vec![0.0; dim];
                &mut heap
            };
            if amp > 0.0 {
                noise.gaussian(offset + i as u64, step, b);
            }
            for ((x, c), z) in v.iter_mut().zip(v_alpha).zip(b.iter()) {
                *x = (1.0 - a) * *x + a * c + amp * dist * z;
            }
        };
        if self.len() >= PARALLEL_PARTICLES {
            self.positions.par_chunks_exact_mut(dim).enumerate().for_each(update);
        } else {
            self.positions.chunks_exact_mut(dim).enumerate().for_each(update);
        }
        self.step_index += 1;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        match self.positions.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(CboError::Divergence { index: i / self.dim, step: self.step_index }),
            None => Ok(()),
        }
    }

    /// Projected step on the unit sphere: drift and noise pass through
    /// `P(v) = I - v vᵀ`, then each particle is renormalized.
    pub fn sphere_step(&mut self, obj: &Objective) -> Result<ConsensusResult> {
        let dim = self.dim;
        for (i, p) in self.positions.chunks_exact(dim).enumerate() {
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-8 {
                return Err(CboError::Domain(format!("particle {i} is off the unit sphere (norm {n})")));
            }
        }
        let c = self.consensus(obj)?;
        let CboParams { lambda, sigma, dt, .. } = self.params;
        let amp = sigma * dt.sqrt();
        let (step, offset) = (self.step_index, self.stream_offset);
        let mut b = vec![0.0; dim];
        let mut diff = vec![0.0; dim];
        for (i, v) in self.positions.chunks_exact_mut(dim).enumerate() {
            for ((d, x), y) in diff.iter_mut().zip(v.iter()).zip(&c.point) {
                *d = x - y;
            }
            let dist = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
            if amp > 0.0 && dist > 0.0 {
                self.noise.gaussian(offset + i as u64, step, &mut b);
            } else {
                b.iter_mut().for_each(|z| *z = 0.0);
            }
            let vd: f64 = v.iter().zip(&diff).map(|(x, d)| x * d).sum();
            let vb: f64 = v.iter().zip(&b).map(|(x, z)| x * z).sum();
            let old: Vec<f64> = v.to_vec();
            for k in 0..dim {
                let pd = diff[k] - old[k] * vd;
                let pb = b[k] - old[k] * vb;
                v[k] = old[k] - lambda * dt * pd + amp * dist * pb;
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !n.is_finite() {
                return Err(CboError::Divergence { index: i, step: step + 1 });
            }
            if n == 0.0 {
                return Err(CboError::DegenerateProjection { index: i, step: step + 1 });
            }
            v.iter_mut().for_each(|x| *x /= n);
        }
        self.step_index += 1;
        Ok(c)
    }
}

/// Functional form of [`ParticleEnsemble::step`].
pub fn cbo_step(ens: &ParticleEnsemble, obj: &Objective) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.step(obj)?;
    Ok(next)
}

/// Functional form of [`ParticleEnsemble::mono_step`].
pub fn mono_step(ens: &ParticleEnsemble, path: &dyn ConsensusPath) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.mono_step(path)?;
    Ok(next)
}

/// Functional form of [`ParticleEnsemble::sphere_step`].
pub fn sphere_cbo_step(ens: &ParticleEnsemble, obj: &Objective) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.sphere_step(obj)?;
    Ok(next)
}

/// An externally prescribed consensus trajectory.
pub trait ConsensusPath: Send + Sync {
    fn value_at(&self, step: u64, t: f64) -> Option<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantPath(pub Vec<f64>);

impl ConsensusPath for ConstantPath {
    fn value_at(&self, _step: u64, _t: f64) -> Option<Vec<f64>> {
        Some(self.0.clone())
    }
}

/// Consensus values recorded once per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledPath {
    pub dt: f64,
    pub points: Vec<Vec<f64>>,
}

impl SampledPath {
    pub fn new(dt: f64) -> Self {
        Self { dt, points: Vec::new() }
    }

    pub fn push(&mut self, v: Vec<f64>) {
        self.points.push(v);
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points.len()).map(|k| k as f64 * self.dt).collect()
    }
}

impl ConsensusPath for SampledPath {
    fn value_at(&self, step: u64, _t: f64) -> Option<Vec<f64>> {
        self.points.get(step as usize).cloned()
    }
}

/// Runs `steps` interacting steps and returns the consensus path that drove them.
pub fn run_recording(ens: &mut ParticleEnsemble, obj: &Objective, steps: u64) -> Result<SampledPath> {
    let mut path = SampledPath::new(ens.params().dt);
    for _ in 0..steps {
        path.push(ens.step(obj)?.point);
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingExperiment {
    pub sizes: Vec<usize>,
    pub reference_size: usize,
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    pub initial: InitialGaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRow {
    pub n: usize,
    /// `sup_t` of the mean over particles, subsets and replicates of `‖V̄_i - V_i‖²`.
    pub error: f64,
    pub runs: usize,
}

/// Coupling between the interacting N-particle system and mono-particles
/// driven by the consensus path of an `N_ref` reference system. Each size is
/// realized on every disjoint block of the reference particles, so the two
/// systems share initial data and noise particle by particle.
pub fn run_coupling(exp: &CouplingExperiment, obj: &Objective, params: &CboParams) -> Result<Vec<CouplingRow>> {
    params.validate()?;
    let max_n = exp.sizes.iter().copied().max().unwrap_or(0);
    if exp.sizes.is_empty() || exp.sizes.contains(&0) {
        return Err(CboError::Config("coupling sizes must be nonempty and positive".into()));
    }
    if exp.reference_size < 4 * max_n {
        return Err(CboError::Config(format!(
            "reference size {} must be at least four times the largest size {max_n}",
            exp.reference_size
        )));
    }
    if exp.replicates == 0 || !(exp.horizon > 0.0) {
        return Err(CboError::Config("coupling needs a positive horizon and at least one replicate".into()));
    }
    let steps = (exp.horizon / params.dt).round().max(1.0) as u64;
    let mut sums = vec![vec![0.0; steps as usize]; exp.sizes.len()];
    let mut runs = vec![0usize; exp.sizes.len()];
    for r in 0..exp.replicates {
        let seed = derive_seed(exp.seed, r as u64 + 1);
        let mut reference = ParticleEnsemble::from_gaussian(exp.reference_size, &exp.initial, *params, seed, 0)?;
        let path = run_recording(&mut reference, obj, steps)?;
        for (level, &n) in exp.sizes.iter().enumerate() {
            let blocks = exp.reference_size / n;
            let per_block: Vec<Vec<f64>> = (0..blocks)
                .into_par_iter()
                .map(|s| coupled_block(n, s, &exp.initial, params, seed, obj, &path, steps))
                .collect::<Result<_>>()?;
            for series in &per_block {
                for (acc, e) in sums[level].iter_mut().zip(series) {
                    *acc += e;
                }
            }
            runs[level] += blocks;
        }
    }
    Ok(exp
        .sizes
        .iter()
        .zip(sums)
        .zip(runs)
        .map(|((&n, s), count)| CouplingRow {
            n,
            error: s.iter().map(|e| e / count as f64).fold(0.0, f64::max),
            runs: count,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn coupled_block(
    n: usize,
    block: usize,
    init: &InitialGaussian,
    params: &CboParams,
    seed: u64,
    obj: &Objective,
    path: &SampledPath,
    steps: u64,
) -> Result<Vec<f64>> {
    let offset = (block * n) as u64;
    let mut inter = ParticleEnsemble::from_gaussian(n, init, *params, seed, offset)?;
    let mut mono = inter.clone();
    let mut series = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        inter.step(obj)?;
        mono.mono_step(path)?;
        let sq: f64 = inter.positions().iter().zip(mono.positions()).map(|(a, b)| (a - b) * (a - b)).sum();
        series.push(sq / n as f64);
    }
    Ok(series)
}
