use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalibError>;

#[derive(Debug, Error)]
pub enum CalibError {
    /// A geometric quantity left its domain (e.g. the z-axis direction is undefined).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid laser length {0} mm (must be > 0)")]
    InvalidLaserLength(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unreachable: {0}")]
    Unreachable(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("non-finite residual while probing parameter `{0}`")]
    NonFinite(String),

    #[error("underdetermined: {equations} equations < {unknowns} unknowns")]
    Underdetermined { equations: usize, unknowns: usize },

    #[error("singular-system: scaled condition number {condition:.3e}, weak directions: [{}]", .directions.join("; "))]
    SingularSystem {
        condition: f64,
        directions: Vec<String>,
    },

    #[error("diverged: cost grew for {0} consecutive iterations")]
    Diverged(usize),

    #[error("bound-infeasible: {0}")]
    BoundInfeasible(String),

    #[error("already exact: uncalibrated mean error is zero")]
    AlreadyExact,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
