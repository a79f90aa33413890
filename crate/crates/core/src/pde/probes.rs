use super::field::SpectralField;
use super::solver::SpectralSolver;
use super::transform::SpectralTransform;
use crate::consensus::{consensus_point_weighted, DensityConsensus};
use crate::error::{CboError, Result};
use crate::objectives::Objective;

/// Grid values of a field on its own `M^d` quadrature grid.
pub fn grid_values(field: &SpectralField) -> Result<Vec<f64>> {
    let mut transform = SpectralTransform::for_field(field)?;
    let mut out = vec![0.0; transform.grid_len()];
    transform.to_grid(field.coeffs(), &mut out);
    Ok(out)
}

/// Grid node coordinates, row-major with the last axis fastest.
pub fn grid_nodes(field: &SpectralField) -> Vec<f64> {
    let dim = field.dim();
    let m = field.grid();
    let n = m.pow(dim as u32);
    let mut nodes = vec![0.0; n * dim];
    for idx in 0..n {
        let mut rem = idx;
        for a in (0..dim).rev() {
            nodes[idx * dim + a] = field.grid_point(rem % m);
            rem /= m;
        }
    }
    nodes
}

/// Consensus point of the density a field represents, by grid quadrature.
pub fn consensus_point_density(field: &SpectralField, objective: &Objective, alpha: f64) -> Result<DensityConsensus> {
    if objective.dim() != field.dim() {
        return Err(CboError::Config("objective dimension does not match the field".into()));
    }
    let nodes = grid_nodes(field);
    let values = objective.eval_rows(&nodes);
    let density = grid_values(field)?;
    consensus_point_weighted(&nodes, field.dim(), &density, &values, alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositivityProbe {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
}

/// Minimum of the raw grid density over `r_exclude ≤ ‖v - v_α‖ ≤ r_outer`.
pub fn positivity_probe(field: &SpectralField, v_alpha: &[f64], r_exclude: f64, r_outer: f64) -> Result<PositivityProbe> {
    let dim = field.dim();
    if v_alpha.len() != dim {
        return Err(CboError::Domain(format!("v_alpha has length {}, expected {dim}", v_alpha.len())));
    }
    if !(r_exclude >= 0.0 && r_exclude < r_outer) {
        return Err(CboError::Domain(format!("invalid annulus [{r_exclude}, {r_outer}]")));
    }
    let nodes = grid_nodes(field);
    let values = grid_values(field)?;
    let mut best: Option<(f64, usize)> = None;
    let mut points = 0;
    for (idx, v) in nodes.chunks_exact(dim).enumerate() {
        let r = v.iter().zip(v_alpha).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
        if r < r_exclude || r > r_outer {
            continue;
        }
        points += 1;
        if best.is_none_or(|(m, _)| values[idx] < m) {
            best = Some((values[idx], idx));
        }
    }
    let (min_value, idx) = best.ok_or_else(|| CboError::Domain("annulus contains no grid points".into()))?;
    Ok(PositivityProbe { min_value, argmin: nodes[idx * dim..(idx + 1) * dim].to_vec(), points })
}

/// Mass of `max(ρ, 0)` on `(v*, L]`; a node sitting exactly on `v*` counts half.
pub fn confinement_probe_1d(field: &SpectralField, v_star: f64) -> Result<f64> {
    if field.dim() != 1 {
        return Err(CboError::Domain("confinement probe needs a one-dimensional field".into()));
    }
    let l = field.half_width();
    if !(v_star > -l && v_star < l) {
        return Err(CboError::Domain(format!("v* = {v_star} is outside the box")));
    }
    let values = grid_values(field)?;
    let h = field.cell_volume();
    let tol = 1e-12 * h;
    let mut total = 0.0;
    for (j, rho) in values.iter().enumerate() {
        let v = field.grid_point(j);
        let w = if (v - v_star).abs() <= tol {
            0.5
        } else if v > v_star {
            1.0
        } else {
            continue;
        };
        total += w * rho.max(0.0);
    }
    Ok(total * h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub time: f64,
    pub l2: f64,
    pub weighted_h1: f64,
}

/// `∫ρ²` and `∫G_i‖∇ρ‖²` for each snapshot, with the coefficients of `solver`.
pub fn energy_monitor(solver: &mut SpectralSolver, history: &[(f64, SpectralField)]) -> Result<Vec<EnergySample>> {
    if history.is_empty() {
        return Err(CboError::Domain("energy history is empty".into()));
    }
    history
        .iter()
        .map(|(t, field)| {
            let (l2, weighted_h1) = solver.energy(field, *t)?;
            Ok(EnergySample { time: *t, l2, weighted_h1 })
        })
        .collect()
}
