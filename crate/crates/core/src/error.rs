use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate density")]
    DegenerateDensity,
    #[error("negative density at {0:?}")]
    NegativeDensity(Vec<f64>),
    #[error("discretization budget exceeded: {atoms} atoms > cap {cap}")]
    BudgetExceeded { atoms: usize, cap: usize },
    #[error("unbalanced: total masses {0} vs {1}")]
    Unbalanced(f64, f64),
    #[error("instance too large for exact W1: {atoms} atoms > cap {cap}")]
    TooLargeForW1 { atoms: usize, cap: usize },
    #[error("invalid flow on edge {0}")]
    InvalidFlow(usize),
    #[error("not a forest")]
    NotAForest,
    #[error("empty instance")]
    EmptyInstance,
    #[error("oracle cap: {0} terminals > 5")]
    OracleCap(usize),
    #[error("insufficient data: need at least 3 points, got {0}")]
    InsufficientData(usize),
    #[error("no density available")]
    NoDensity,
    #[error("alpha must exceed 1 − 1/d (alpha = {alpha}, d = {dim})")]
    AlphaOutOfRange { alpha: f64, dim: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// Short machine-readable code, used as the CLI error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegenerateDensity => "E_DEGENERATE_DENSITY",
            Error::NegativeDensity(_) => "E_NEGATIVE_DENSITY",
            Error::BudgetExceeded { .. } => "E_BUDGET",
            Error::Unbalanced(..) => "E_UNBALANCED",
            Error::TooLargeForW1 { .. } => "E_W1_CAP",
            Error::InvalidFlow(_) => "E_INVALID_FLOW",
            Error::NotAForest => "E_NOT_FOREST",
            Error::EmptyInstance => "E_EMPTY",
            Error::OracleCap(_) => "E_ORACLE_CAP",
            Error::InsufficientData(_) => "E_INSUFFICIENT_DATA",
            Error::NoDensity => "E_NO_DENSITY",
            Error::AlphaOutOfRange { .. } => "E_ALPHA",
            Error::Invalid(_) => "E_INVALID",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks `1 - 1/d < alpha <= 1` and `1 <= d <= 3`.
pub fn check_alpha(alpha: f64, dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Invalid(format!("dimension {dim} not in 1..=3")));
    }
    let lower = 1.0 - 1.0 / dim as f64;
    if !(alpha.is_finite() && alpha > lower && alpha <= 1.0) {
        return Err(Error::AlphaOutOfRange { alpha, dim });
    }
    Ok(())
}
