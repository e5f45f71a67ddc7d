use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants are grouped into families that map onto process exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // -- input / parse family --
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("non-positive price {value} at row {row}, column {column}")]
    NonPositivePrice { row: usize, column: usize, value: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    // -- invalid specification family --
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("fixed power vector has length {found}, expected {expected}")]
    DeltaLengthMismatch { expected: usize, found: usize },
    #[error("correlation matrix is not positive definite")]
    NonPositiveDefiniteCorrelation,
    #[error("volatility path exploded at time index {index}")]
    ExplosivePath { index: usize },
    #[error("lag polynomial B(L) is not invertible (spectral radius {spectral_radius})")]
    NonInvertibleBPolynomial { spectral_radius: f64 },
    #[error("unsupported orders: {0}")]
    UnsupportedOrder(String),
    #[error("estimated top Lyapunov exponent {gamma_hat} (s.e. {std_error}) is not negative")]
    StationarityVeto { gamma_hat: f64, std_error: f64 },

    // -- optimization family --
    #[error("no start produced a finite objective")]
    AllStartsInvalid,
    #[error("not enough data: {n} observations for {params} parameters")]
    NotEnoughData { n: usize, params: usize },
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),

    // -- inference family --
    #[error("objective is invalid at the evaluation point (coordinate {coordinate:?})")]
    GradientAtInvalidPoint { coordinate: Option<usize> },
    #[error("Hessian condition number {condition:e} exceeds limit")]
    IllConditionedJ { condition: f64 },
    #[error("constraint matrix has rank {rank} < {rows}")]
    RankDeficientConstraints { rank: usize, rows: usize },
    #[error("constraint covariance C Sigma C' is singular")]
    SingularConstraintCovariance,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the error family: 2 parse, 3 invalid spec,
    /// 4 optimization, 5 inference.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Parse { .. } | NonPositivePrice { .. } | Config(_) | Io(_) => 2,
            InvalidSpec(_)
            | LengthMismatch { .. }
            | DeltaLengthMismatch { .. }
            | NonPositiveDefiniteCorrelation
            | ExplosivePath { .. }
            | NonInvertibleBPolynomial { .. }
            | UnsupportedOrder(_)
            | StationarityVeto { .. } => 3,
            AllStartsInvalid | NotEnoughData { .. } | InvalidOptions(_) => 4,
            GradientAtInvalidPoint { .. }
            | IllConditionedJ { .. }
            | RankDeficientConstraints { .. }
            | SingularConstraintCovariance
            | Dimension(_) => 5,
        }
    }
}
