use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("drift is not stable: spectral abscissa {abscissa} >= 0")]
    UnstableDrift { abscissa: f64 },
    #[error("Kalman rank condition fails: rank {rank} < {dim}")]
    HypoellipticityFailure { rank: usize, dim: usize },
    #[error("quadrature did not converge: {context}")]
    NonConvergedQuadrature { context: String },
    #[error("divergent moment: {context}")]
    DivergentMoment { context: String },
    #[error("invalid Levy measure: {0}")]
    InvalidMeasure(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("interpolation point outside the grid: {0}")]
    InterpolationOutOfRange(String),
    #[error("cumulant table incomplete: need order {needed}, have {available}")]
    IncompleteTable { needed: usize, available: usize },
    #[error("covariance ordering violated: smallest eigenvalue {min_eigenvalue}")]
    OrderingViolated { min_eigenvalue: f64 },
    #[error("drift is not diagonalizable with real spectrum")]
    NotDiagonalizable,
    #[error("pre-map is singular")]
    SingularPreMap,
    #[error("cutoff too large: {count} lattice points")]
    CutoffTooLarge { count: usize },
    #[error("degree cutoff {k_max} below required degree {required}")]
    CutoffTooSmall { k_max: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
