use thiserror::Error;

/// Errors raised by the solvers, checkers and simulators in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular delta transform: q * rho'rho = {q_rho_sq} equals 1")]
    SingularDelta { q_rho_sq: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("singular linear system (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("Riccati flow blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("negative discriminant {0} in closed-form solution")]
    NegativeDiscriminant(f64),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("principal eigenvector changed sign; discretization failed")]
    NonPositiveEigenvector,

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("tightness test inconclusive: {0}")]
    Inconclusive(String),

    #[error("outside the sufficient rho'rho region: {0}")]
    RegionViolation(String),

    #[error("step too coarse: halving the step changed the result by {relative_change:e} (relative)")]
    StepTooCoarse { relative_change: f64 },

    #[error("no break-even bracket in [{lo}, {hi}] months")]
    NoBracket { lo: f64, hi: f64 },

    #[error("{aborted} of {total} paths produced non-finite states")]
    NonFiniteState { aborted: usize, total: usize },

    #[error("degenerate sample: zero variance with n = {n}")]
    DegenerateSample { n: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
