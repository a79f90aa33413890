//! Consensus-based optimization: particle dynamics, consensus points, coefficient
//! cutoffs, a spectral solver for the mean-field Fokker–Planck equation and
//! convergence diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod consensus;
pub mod cutoffs;
pub mod diagnostics;
pub mod error;
pub mod noise;
pub mod objectives;
pub mod particle;
pub mod pde;
pub mod quadrature;
pub mod sampling;

pub use consensus::{consensus_point, consensus_point_weighted, ConsensusResult, DensityConsensus};
pub use cutoffs::{CoefficientField, CutoffSpec, Mollifier, TruncatedCoefficients};
pub use diagnostics::{DecaySeries, SuccessReport};
pub use error::{CboError, Result};
pub use objectives::{builtin_objective, BuiltinObjective, Objective};
pub use particle::{CboParams, InitialGaussian, ParticleEnsemble};
pub use pde::{EquationForm, PdeProblem, SpectralField, SpectralSolver, ValphaMode};
