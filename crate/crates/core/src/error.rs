use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("singular tridiagonal system at row {0}")]
    Singular(usize),
    #[error("Newton did not converge after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("Newton step left the positive cone and damping failed")]
    NegativeIterate,
    #[error("field must be strictly positive")]
    NonpositiveField,
    #[error("oracle root could not be bracketed: {0}")]
    RootBracketFailure(String),
    #[error("adaptive quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("spectrum too short: largest computed eigenvalue {largest} does not exceed cp = {cp}")]
    SpectrumTooShort { largest: f64, cp: f64 },
    #[error("requested mode index {requested} exceeds computed spectrum ({available})")]
    ModeOutOfRange { requested: usize, available: usize },
    #[error("time step failed: {0}")]
    StepFailure(String),
    #[error("positivity lost during step")]
    PositivityLoss,
    #[error("time step {dt} hits a pole of the implicit linear step (limit {limit})")]
    TimeStepTooLarge { dt: f64, limit: f64 },
    #[error("sup norm never dropped below the extinction threshold")]
    InsufficientDecay,
    #[error("trace does not cover the required window: {0}")]
    InsufficientTrace(String),
    #[error("finite-difference check disagrees with the production identity: {0}")]
    WindowTooCoarse(String),
    #[error("fit window contains {0} usable samples (need at least 10)")]
    EmptyWindow(usize),
    #[error("supersolution constant C = {0} is not positive")]
    NonpositiveC(f64),
    #[error("delay ODE exceeded cap {cap} at t = {t}")]
    BlowUp { t: f64, cap: f64 },
    #[error("cp collides with the spectrum; no spectral gap")]
    H2Violated,
    #[error("extinction-time matching failed: {0}")]
    MatchFailure(String),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
