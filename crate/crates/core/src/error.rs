//! Error types shared across the solver stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty domain: outer radius {outer_radius} does not enclose the body (circumradius {circumradius})")]
    EmptyDomain { outer_radius: f64, circumradius: f64 },

    #[error("mesh generation failure: {0}")]
    MeshFailure(String),

    #[error("unsupported velocity degree {0}; the inf-sup stable pair implemented here is p_v = 2, p_p = 1")]
    UnsupportedDegree(usize),

    #[error("quadrature failure on cell {cell}: {detail}")]
    QuadratureFailure { cell: usize, detail: String },

    #[error("saddle-point solve failure: {0}")]
    SaddleSolveFailure(String),

    #[error("linear solve failure: {0}")]
    LinearSolveFailure(String),

    #[error("eigenvalue solve failure: {0}")]
    EigSolveFailure(String),

    #[error("Newton diverged after {iterations} iterations (last residual {last_residual:.3e})")]
    NewtonDiverged { iterations: usize, last_residual: f64 },

    #[error("continuation stalled at lambda = {last_good_lambda} (bisection depth {depth} exhausted)")]
    ContinuationStalled { last_good_lambda: f64, depth: usize },

    #[error("ill-conditioned extrapolation fit: {0}")]
    IllConditionedFit(String),

    #[error("state not converged: residual {residual:.3e} above tolerance {tol:.3e}")]
    NonConvergedState { residual: f64, tol: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("ODE tensor too large: N = {n} exceeds the cap {cap}")]
    TensorTooLarge { n: usize, cap: usize },

    #[error("time stepper diverged at t = {t} (dt reductions exhausted)")]
    StepperDiverged { t: f64 },

    #[error("invalid eigenvector: {0}")]
    InvalidEigenvector(String),

    #[error("finite-difference transversality inconclusive: stencils disagree by {disagreement:.1}%")]
    FdInconclusive { disagreement: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
