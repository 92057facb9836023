use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("potential is not admissible: {0}")]
    NotAdmissible(String),
    #[error("no bound state (lowest eigenvalue {0:e})")]
    NoBoundState(f64),
    #[error("more than one bound state (second eigenvalue {0:e})")]
    MultipleBoundStates(f64),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("contraction diverged at omega = {omega} (omega_* estimate)")]
    ContractionDiverged { omega: f64 },
    #[error("ground-branch amplitude {0} is above z_*")]
    AmplitudeTooLarge(f64),
    #[error("unstable eigenvalue is not isolated: {0}")]
    EigenNotIsolated(String),
    #[error("quadratic form is negative: {0:e}")]
    NegativeQuadraticForm(f64),
    #[error("field is too far from the soliton orbit (d0 = {0})")]
    TooFarFromOrbit(f64),
    #[error("degenerate denominator in phase rate ({0:e})")]
    DegenerateDenominator(f64),
    #[error("sign functional is undefined here: {0}")]
    SignUndefined(String),
    #[error("time step rejected: {0}")]
    StepRejected(String),
    #[error("no ejection before t = {0}")]
    NoEjection(f64),
    #[error("bracket failure: both ends eject with sign {0}")]
    BracketFailure(i8),
    #[error("horizon exhausted with bracket [{lo}, {hi}]")]
    HorizonExhausted { lo: f64, hi: f64 },
    #[error("intersection iteration diverged (step {0:e})")]
    IterationDiverged(f64),
    #[error("bisection failed: {0}")]
    BisectionFailed(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
