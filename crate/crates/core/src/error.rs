use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // spectral lab
    #[error("spectral gap violated: {0}")]
    GapViolation(String),
    #[error("contour quadrature did not converge: change {change:.3e} at {nodes} nodes")]
    QuadratureDivergence { nodes: usize, change: f64 },
    #[error("resolvent is numerically singular at z = {re}+{im}i")]
    SingularResolvent { re: f64, im: f64 },

    // maps
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("degenerate Jacobian at {point:?}: |det Df| = {det:.3e}")]
    DegenerateJacobian { point: [f64; 2], det: f64 },
    #[error("map is not expanding: smallest singular value {value:.6} at {point:?} (required {required:.6})")]
    NotExpanding {
        point: [f64; 2],
        value: f64,
        required: f64,
    },
    #[error("inverse branch Newton failure at {point:?}: {reason}")]
    BranchNewtonFailure { point: [f64; 2], reason: String },
    #[error("invalid map: {0}")]
    InvalidMap(String),

    // transfer operator
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("SRB density became negative (min {0:.3e}); increase grid size")]
    NegativeDensity(f64),
    #[error("gap estimate unstable: ratios spread {spread:.3} over window")]
    GapEstimateUnstable { spread: f64 },

    // response / entropy
    #[error("series not converging after {terms} terms (last term {last:.3e})")]
    SeriesNotConverging { terms: usize, last: f64 },
    #[error("finite-difference step too large: Richardson disagreement {0:.3}")]
    StepTooLarge(f64),
    #[error("primal and dual derivative forms disagree: |{primal:.6e} - {dual:.6e}| > {allowed:.3e}")]
    FormsDisagree {
        primal: f64,
        dual: f64,
        allowed: f64,
    },
    #[error("mode frequency {freq:?} exceeds cutoff {cutoff}")]
    CutoffExceeded { freq: [i64; 2], cutoff: i64 },
    #[error("Riesz pairing check failed: residual {0:.3e}")]
    PairingCheckFailure(f64),
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // configuration
    #[error("{path}: {reason}")]
    Config { path: String, reason: String },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
