use thiserror::Error;

/// Failures raised by the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension out of range: n = {n} (supported: 3 to 5)")]
    DimensionOutOfRange { n: usize },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("length mismatch: expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("{what} must be positive, found {value} at index {index}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requires closed manifold: the grid has a boundary")]
    RequiresClosedManifold,

    #[error("grid has no boundary")]
    NoBoundary,

    #[error("conjugate gradient met a non-positive curvature direction (p^T A p = {curvature:e}) at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    CgNotConverged {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("eigensolver did not converge in {iterations} iterations (residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("eigensolver stagnated after {iterations} iterations (residual {residual:e})")]
    EigenStagnation { iterations: usize, residual: f64 },

    #[error("matrix dimension {size} exceeds the cap of {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("positivity violation: value {value:e} at node {node}")]
    PositivityViolation { node: usize, value: f64 },

    #[error("M-matrix structure violated: positive off-diagonal {value:e} in row {row}")]
    OffDiagonalSign { row: usize, value: f64 },

    #[error("ordering violated: lower {lower} exceeds upper {upper} at node {node}")]
    OrderingViolated { node: usize, lower: f64, upper: f64 },

    #[error("{kind}-solution inequality violated at node {node}: excess {excess:e} above tolerance {tolerance:e}")]
    InequalityViolated {
        kind: &'static str,
        node: usize,
        excess: f64,
        tolerance: f64,
    },

    #[error("no recipe for this configuration; missing hypothesis: {hypothesis}")]
    NoRecipe { hypothesis: String },

    #[error("shift condition violated at node {node}: {value:e} is not positive")]
    ShiftCondition { node: usize, value: f64 },

    #[error("iterate left the admissible range at step {step}, node {node}: {value} outside [{lower}, {upper}]")]
    LeftRange {
        step: usize,
        node: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("monotonicity violated at step {step}, node {node}: increase {increase:e} above {tolerance:e}")]
    MonotonicityViolated {
        step: usize,
        node: usize,
        increase: f64,
        tolerance: f64,
    },

    #[error("iteration did not converge in {steps} steps (sup diff {sup_diff:e}, residual {residual:e})")]
    IterationNotConverged {
        steps: usize,
        sup_diff: f64,
        residual: f64,
    },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported boundary data: {0}")]
    UnsupportedBoundaryData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Returns the innermost error, unwrapping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_no_recipe(&self) -> bool {
        matches!(self.root(), Error::NoRecipe { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
