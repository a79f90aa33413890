//! Fourier Galerkin solver for the linearized and self-consistent CBO
//! Fokker–Planck equations on a periodic box.

mod field;
mod probes;
mod solver;
mod transform;

pub use field::{mass, SpectralField};
pub use probes::{
    confinement_probe_1d, consensus_point_density, energy_monitor, grid_nodes, grid_values, positivity_probe,
    EnergySample, PositivityProbe,
};
pub use solver::{
    CoefficientSource, ConsensusSource, EquationForm, PathFn, PdeProblem, RunSummary, SpectralSolver, StageInfo,
    StepInfo, StepRecord, ValphaMode, AUTO_DT_SAFETY, DEFAULT_CFL,
};
pub use transform::SpectralTransform;
