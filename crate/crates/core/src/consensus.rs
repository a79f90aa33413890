//! Gibbs-weighted consensus point, computed with log-sum-exp shifting and a
//! fixed-shape reduction tree.

use crate::error::{CboError, Result};
use crate::objectives::Objective;

const LEAF: usize = 256;
const PARALLEL_SPAN: usize = 1 << 14;
const STACK_WIDTH: usize = 8;

/// Sums `width` accumulators over `0..n` along a fixed binary tree. `leaf(i, acc)`
/// adds the contribution of item `i`. The tree shape depends only on `n`, so the
/// result is identical for any number of worker threads.
pub fn tree_reduce<F>(n: usize, width: usize, leaf: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    fn rec<F: Fn(usize, &mut [f64]) + Sync>(lo: usize, hi: usize, acc: &mut [f64], leaf: &F) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                leaf(i, acc);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let mut stack = [0.0; STACK_WIDTH];
        let mut heap = Vec::new();
        let right: &mut [f64] = if acc.len() <= STACK_WIDTH {
            &mut stack[..acc.len()]
        } else {
            heap.resize(acc.len(), 0.0);
            &mut heap
        };
        if hi - lo >= PARALLEL_SPAN {
            rayon::join(|| rec(lo, mid, acc, leaf), || rec(mid, hi, right, leaf));
        } else {
            rec(lo, mid, acc, leaf);
            rec(mid, hi, right, leaf);
        }
        for (x, y) in acc.iter_mut().zip(right.iter()) {
            *x += y;
        }
    }
    let mut acc = vec![0.0; width];
    rec(0, n, &mut acc, leaf);
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusResult {
    pub point: Vec<f64>,
    /// `log((1/N) Σ e^{-α f_i})`.
    pub log_normalizer: f64,
    /// `(Σw)² / (N Σw²)`.
    pub effective_sample_fraction: f64,
}

fn validate(positions: &[f64], dim: usize, values: &[f64], alpha: f64) -> Result<()> {
    if dim == 0 {
        return Err(CboError::Domain("dimension must be positive".into()));
    }
    if values.is_empty() {
        return Err(CboError::Domain("consensus of an empty ensemble".into()));
    }
    if positions.len() != values.len() * dim {
        return Err(CboError::Domain(format!(
            "{} coordinates do not match {} values in dimension {dim}",
            positions.len(),
            values.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CboError::Domain(format!("alpha must be finite and nonnegative, got {alpha}")));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CboError::Domain(format!("objective value of particle {i} is not finite")));
    }
    if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
        return Err(CboError::Domain(format!("position of particle {} is not finite", i / dim)));
    }
    Ok(())
}

/// `Σ V_i e^{-α(f_i - min f)} / Σ e^{-α(f_i - min f)}`, clamped coordinatewise
/// into the bounding box of the ensemble to absorb rounding.
pub fn consensus_point(positions: &[f64], dim: usize, values: &[f64], alpha: f64) -> Result<ConsensusResult> {
    validate(positions, dim, values, alpha)?;
    let n = values.len();
    let fmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let acc = tree_reduce(n, dim + 2, &|i, acc: &mut [f64]| {
        let w = (-alpha * (values[i] - fmin)).exp();
        acc[0] += w;
        acc[1] += w * w;
        for (a, x) in acc[2..].iter_mut().zip(&positions[i * dim..(i + 1) * dim]) {
            *a += w * x;
        }
    });
    let (sw, sw2) = (acc[0], acc[1]);
    let mut point: Vec<f64> = acc[2..].iter().map(|s| s / sw).collect();
    for (k, p) in point.iter_mut().enumerate() {
        let (lo, hi) = positions
            .iter()
            .skip(k)
            .step_by(dim)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        *p = p.clamp(lo, hi);
    }
    Ok(ConsensusResult {
        point,
        log_normalizer: -alpha * fmin + (sw / n as f64).ln(),
        effective_sample_fraction: sw * sw / (n as f64 * sw2),
    })
}

/// `f(v_α) - min_i f(V_i)`: how far the consensus sits above the best particle.
pub fn laplace_gap(positions: &[f64], dim: usize, values: &[f64], alpha: f64, obj: &Objective) -> Result<f64> {
    let c = consensus_point(positions, dim, values, alpha)?;
    let fmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(obj.eval(&c.point) - fmin)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityConsensus {
    pub point: Vec<f64>,
    pub log_normalizer: f64,
    /// Share of total absolute density that was negative and clamped to zero.
    pub clamped_fraction: f64,
}

/// Above this clamped share the weighted mean is considered meaningless.
pub const BREAKDOWN_FRACTION: f64 = 0.5;

/// Consensus of a density sampled at quadrature nodes with equal cell weights.
/// Negative density values are clamped to zero before weighting.
pub fn consensus_point_weighted(
    nodes: &[f64],
    dim: usize,
    density: &[f64],
    values: &[f64],
    alpha: f64,
) -> Result<DensityConsensus> {
    validate(nodes, dim, values, alpha)?;
    if density.len() != values.len() {
        return Err(CboError::Domain("density and value arrays differ in length".into()));
    }
    let n = values.len();
    let fmin = (0..n).filter(|&i| density[i] > 0.0).map(|i| values[i]).fold(f64::INFINITY, f64::min);
    finish_weighted(nodes, dim, density, alpha, fmin, &|i| (-alpha * (values[i] - fmin)).exp())
}

/// `weight(i)` must equal `e^{-α(f_i - fmin)}` up to a common positive factor
/// that is folded into the reported normalizer through `fmin`.
fn finish_weighted<W>(nodes: &[f64], dim: usize, density: &[f64], alpha: f64, fmin: f64, weight: &W) -> Result<DensityConsensus>
where
    W: Fn(usize) -> f64 + Sync,
{
    let acc = tree_reduce(density.len(), dim + 3, &|i, acc: &mut [f64]| {
        let r = density[i];
        let rp = r.max(0.0);
        acc[0] += rp - r;
        acc[1] += rp;
        let w = rp * weight(i);
        acc[2] += w;
        for (a, x) in acc[3..].iter_mut().zip(&nodes[i * dim..(i + 1) * dim]) {
            *a += w * x;
        }
    });
    let (neg, pos, sw) = (acc[0], acc[1], acc[2]);
    if !(pos > 0.0) {
        return Err(CboError::Breakdown("density has no positive mass".into()));
    }
    let clamped_fraction = neg / (neg + pos);
    if clamped_fraction > BREAKDOWN_FRACTION {
        return Err(CboError::Breakdown(format!(
            "{:.1}% of the density mass is negative",
            100.0 * clamped_fraction
        )));
    }
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(CboError::Breakdown("Gibbs weights vanished on the grid".into()));
    }
    Ok(DensityConsensus {
        point: acc[3..].iter().map(|s| s / sw).collect(),
        log_normalizer: -alpha * fmin + (sw / pos).ln(),
        clamped_fraction,
    })
}

/// Fixed quadrature nodes with their Gibbs weights precomputed, for repeated
/// [`consensus_point_weighted`] calls with changing densities.
#[derive(Clone, Debug)]
pub struct GibbsGrid {
    dim: usize,
    nodes: Vec<f64>,
    values: Vec<f64>,
    alpha: f64,
    fmin: f64,
    weights: Vec<f64>,
}

impl GibbsGrid {
    pub fn new(nodes: Vec<f64>, dim: usize, values: Vec<f64>, alpha: f64) -> Result<Self> {
        validate(&nodes, dim, &values, alpha)?;
        let fmin = values.iter().copied().fold(f64::INFINITY, f64::min);
        let weights = values.iter().map(|f| (-alpha * (f - fmin)).exp()).collect();
        Ok(Self { dim, nodes, values, alpha, fmin, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same result as [`consensus_point_weighted`] up to rounding.
    pub fn consensus(&self, density: &[f64]) -> Result<DensityConsensus> {
        if density.len() != self.values.len() {
            return Err(CboError::Domain("density and value arrays differ in length".into()));
        }
        let fpos = density
            .iter()
            .zip(&self.values)
            .map(|(&r, &f)| if r > 0.0 { f } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        if self.alpha * (fpos - self.fmin) > 600.0 {
            return consensus_point_weighted(&self.nodes, self.dim, density, &self.values, self.alpha);
        }
        finish_weighted(&self.nodes, self.dim, density, self.alpha, self.fmin, &|i| self.weights[i])
    }
}
