//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch in {operand}: expected {expected}, got {found}")]
    DimensionMismatch {
        operand: &'static str,
        expected: String,
        found: String,
    },

    #[error("{class} invariant violated ({violation}), residual {residual:.3e}")]
    ClassViolation {
        class: &'static str,
        violation: String,
        residual: f64,
    },

    #[error("matrix is defective or badly non-normal: reconstruction residual {residual:.3e}")]
    DefectiveMatrix { residual: f64 },

    #[error("eigendecomposition produced complex eigenvalues (max imaginary part {max_imag:.3e}); non-symmetric input is out of the supported classes")]
    ComplexSpectrum { max_imag: f64 },

    #[error("eigenvalue {value:.6e} at index {index} lies outside the mapping domain [{lo}, {hi}]")]
    OutsideDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("mapping is not bijective on [{lo}, {hi}]: f({x1}) = {y1} vs f({x2}) = {y2}")]
    NonBijective {
        lo: f64,
        hi: f64,
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
    },

    #[error("trajectory too short: need at least {needed} samples, got {got}")]
    ShortTrajectory { needed: usize, got: usize },

    #[error("rank deficiency in {context}: rank {rank} < required {needed}")]
    RankDeficient {
        context: &'static str,
        rank: usize,
        needed: usize,
    },

    #[error("ill-conditioned {context}: condition number {cond:.3e}")]
    IllConditioned { context: &'static str, cond: f64 },

    #[error("all singular values are zero: no signal to estimate an order from")]
    NoSignal,

    #[error("retry cap exhausted generating a connected graph; try a larger edge probability than {p}")]
    ConnectivityRetriesExhausted { p: f64 },

    #[error("solver did not converge after {iterations} iterations: objective {objective:.6e}, last step {last_step:.3e}")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        last_step: f64,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
