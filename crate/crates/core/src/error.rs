use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CboError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("particle {index} left the finite range at step {step}")]
    Divergence { index: usize, step: u64 },
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("particle {index} collapsed to the origin at step {step} during sphere projection")]
    DegenerateProjection { index: usize, step: u64 },
    #[error("radial projection requested at the origin inside the cutoff shell")]
    RadialSingularity,
    #[error("time step {dt:.3e} exceeds the stability bound {dt_max:.3e}")]
    Unstable { dt: f64, dt_max: f64 },
}

pub type Result<T> = std::result::Result<T, CboError>;
