use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("missing parameter `{param}` for family `{family}`")]
    MissingParameter { family: String, param: String },

    #[error("parameter `{param}` = {value} out of range: {reason}")]
    OutOfRange {
        param: String,
        value: f64,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },

    #[error("quadrature failed on [{a}, {b}]: {reason}")]
    Quadrature { a: f64, b: f64, reason: String },

    #[error("degenerate spectrum: |discr| = {discr:e} below threshold")]
    DegenerateSpectrum { discr: f64 },

    #[error("pivot too small: |X12| = {value:e} <= {delta:e}")]
    Pivot { value: f64, delta: f64 },

    #[error("shift matrix X_{k} is not elliptic (discr = {discr:e})")]
    NotElliptic { k: usize, discr: f64 },

    #[error("operation requires Case I, found {found}")]
    NotCaseOne { found: String },

    #[error("lambda = {lambda} is not in a band of the periodic limit (tr = {trace})")]
    NotInBand { lambda: f64, trace: f64 },

    #[error("no minimal solution: eigenvalue moduli coincide at k = {k}")]
    NoMinimalSolution { k: usize },

    #[error("no elliptic tail: discr X_n < -delta fails near n = {n}")]
    NoEllipticTail { n: usize },

    #[error("phase jump of {jump} rad between n = {n} and n + 1")]
    PhaseJump { n: usize, jump: f64 },

    #[error("unresolved eigenvalue cluster near lambda = {lambda}")]
    UnresolvedCluster { lambda: f64 },

    #[error("overflow while propagating at t = {t}")]
    Overflow { t: f64 },

    #[error("family `{0}` does not support this operation")]
    WrongFamily(String),
}

pub type Result<T> = std::result::Result<T, Error>;
