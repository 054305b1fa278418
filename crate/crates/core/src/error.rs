use thiserror::Error;

/// Errors raised by polytope construction, potential evaluation and the
/// curvature/Einstein kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The labeled polytope data violates simplicity, rationality,
    /// boundedness or irredundancy.
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    /// The operation needs integral labels (or another structural
    /// property) the input does not have.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A facet functional (or potential term) is nonpositive at the
    /// evaluation point.
    #[error("point outside the open domain: term {index} has value {value:e}")]
    OutsideDomain { index: usize, value: f64 },

    /// The Hessian of the potential is not positive definite.
    #[error("Hessian is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    /// The interior grid came out empty.
    #[error("empty grid: margin {margin} exceeds the largest feasible margin {max_margin}")]
    EmptyGrid { margin: f64, max_margin: f64 },

    /// A least-squares system or Hessian was (numerically) singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// The finite-difference step allowed by the distance to the boundary
    /// is too small to be meaningful.
    #[error("finite-difference step {step:e} at {point:?} is below the accepted minimum")]
    StepTooSmall { point: Vec<f64>, step: f64 },

    /// Scalar curvature vanishes where its reciprocal is needed.
    #[error("scalar curvature vanishes ({value:e}) at {point:?}; the conformal factor has a pole there")]
    ScalarCurvaturePole { point: Vec<f64>, value: f64 },

    /// Exact integer arithmetic would overflow.
    #[error("integer overflow in lattice computation")]
    Overflow,

    /// Malformed JSON input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
