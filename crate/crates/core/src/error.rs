use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix of size {rows}x{cols} exceeds the dense size cap {cap}")]
    SizeCap { rows: usize, cols: usize, cap: usize },

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps")]
    EigNoConvergence { sweeps: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix has no strictly positive eigenvalue")]
    NoPositiveEigenvalue,

    #[error("dual objective is nondifferentiable at the origin when sigma > 0")]
    Nondifferentiable,

    #[error("iterate became non-finite at iteration {iteration} (step size {step:e} is likely too large)")]
    Divergence { iteration: usize, step: f64 },

    #[error("line search exceeded {0} backtracking steps")]
    LineSearch(usize),

    #[error("enumeration of {count} candidates exceeds the cap {cap}; {hint}")]
    EnumerationCap {
        count: u128,
        cap: u128,
        hint: &'static str,
    },

    #[error("submatrix is rank deficient")]
    RankDeficient,

    #[error("primal point is inconsistent with the measurements (residual {residual:e})")]
    Inconsistent { residual: f64 },

    #[error("projection onto the dual solution set failed (KKT residual {residual:e})")]
    Projection { residual: f64 },

    #[error("solvers disagree on the primal solution (max difference {difference:e})")]
    SolverDisagreement { difference: f64 },

    #[error("trace does not carry iterates")]
    MissingIterates,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
