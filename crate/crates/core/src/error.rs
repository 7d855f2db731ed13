use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no root set: polynomial is identically zero")]
    NoRootSet,

    #[error("root finder did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        /// Best approximations reached, flagged by whether each met the residual bound.
        partial: Vec<(Complex64, bool)>,
    },

    #[error("P and Q both vanish identically")]
    ZeroOperator,

    #[error("{0} is a common root of P and Q: reduce first")]
    ReduceFirst(Complex64),

    #[error("moving pole at z = {z}, t = {t}: t R'(z) + 1 = 0")]
    MovingPole { z: Complex64, t: f64 },

    #[error("{0} is a pole of R")]
    PoleOfR(Complex64),

    #[error("{0} is not a root of P")]
    NotARootOfP(Complex64),

    #[error("zero of order {0} > 1: elliptic sectors, no sink/source/center type")]
    HigherOrderZero(usize),

    #[error("{0} is not a root of Q")]
    NotARootOfQ(Complex64),

    #[error("operator is not in regularity class I")]
    NotClassI,

    #[error("trail equation vanishes identically: roots are the whole plane")]
    WholePlane,

    #[error("Julia set degenerate: max(deg Q, deg P) < 2")]
    DegenerateJulia,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("oracle `{name}` does not apply: {reason}")]
    OracleMismatch { name: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
