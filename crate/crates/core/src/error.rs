use thiserror::Error;

/// Errors raised by the lattice operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node {node} has norm {norm:e}, below the projection threshold")]
    DegenerateNode { node: usize, norm: f64 },

    #[error("average direction on the inner sphere has norm {norm:e}; enlarge inner_radius")]
    AverageDegenerate { norm: f64 },

    #[error("field format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("ball of radius {radius} around {center:?} leaves the domain")]
    BallOutsideDomain { center: [f64; 3], radius: f64 },

    #[error("gauge solve missed tolerance: residual {residual:e} > {limit:e}")]
    SolverDiverged { residual: f64, limit: f64 },

    #[error("D(u) is not compactly supported: boundary/peak ratio {ratio:e}")]
    NonCompactSupport { ratio: f64 },

    #[error("defects could not be balanced against the boundary")]
    UnbalancedAfterBoundary,

    #[error("line search stalled at step {step:e} (epsilon {epsilon}, iteration {iter})")]
    LineSearchStalled { step: f64, epsilon: f64, iter: usize },

    #[error("perturbation integral {value} exceeds the unit normalization")]
    NormalizationViolated { value: f64 },

    #[error("invalid geometry: {0}")]
    GeometryInvalid(String),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateNode { .. }
                | Error::AverageDegenerate { .. }
                | Error::SolverDiverged { .. }
                | Error::NonCompactSupport { .. }
                | Error::UnbalancedAfterBoundary
                | Error::LineSearchStalled { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
