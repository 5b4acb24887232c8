//! Error type shared by every stage of the pipeline.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading a scenario file and writing a
/// convergence report.
///
/// The CLI maps `Validation`, `Fredholm`, `UnderResolved`, `Budget`,
/// `PartialTable` and the solver failures to exit code 2 (a check failed on
/// well-formed input) and everything else to exit code 1 (unusable input).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The cell right-hand side has a nonzero mean, so the periodic Poisson
    /// problem (and with it the corrector problem) has no solution.
    #[error("Fredholm condition violated: right-hand side mean {defect:.3e} exceeds tolerance {tol:.3e}")]
    Fredholm { defect: f64, tol: f64 },

    /// Malformed scenario file, inconsistent keys, or values out of range.
    #[error("config error: {0}")]
    Config(String),

    /// A structural assumption on the coefficients failed during sampling.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Newton/Picard on a cell problem stalled before reaching tolerance.
    #[error("cell solver did not converge: {0}")]
    CellDiverged(String),

    /// The period map for the critical-regime cell problem did not contract.
    #[error("period map did not converge: {0}")]
    PeriodMap(String),

    /// A grid too coarse for the requested oscillation scale.
    #[error("under-resolved: {0}")]
    UnderResolved(String),

    /// Resolving the requested scales would exceed the configured budget.
    #[error("resolution budget exceeded: {0}")]
    Budget(String),

    /// A macro or DNS time step failed even after step halving.
    #[error("time step failed: {0}")]
    StepFailed(String),

    /// An inner linear solve (CG/BiCGStab/Thomas) stalled or broke down.
    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    /// An effective table with failed entries was used where a complete one
    /// is required.
    #[error("effective table is partial: {0}")]
    PartialTable(String),

    /// Malformed field file, table file, or report file.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format(_) | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
