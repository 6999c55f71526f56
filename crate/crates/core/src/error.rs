use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Coordinates outside the action simplex or an argument outside a
    /// function's real domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The |E_n⟩ amplitude vanishes, so the action-angle chart has no angle
    /// reference.
    #[error("phase undefined: |E_n> amplitude {amplitude:e} is below the chart floor")]
    PhaseUndefined { amplitude: f64 },

    #[error("degenerate spectrum: levels {i} and {j} coincide ({value})")]
    DegenerateSpectrum { i: usize, j: usize, value: f64 },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("constraint count must be even, got {0}")]
    OddConstraintCount(usize),

    /// The constraint commutator matrix cannot be inverted reliably.
    #[error("singular constraint matrix (condition number {condition:e})")]
    SingularOmega { condition: f64 },

    #[error("chart singularity: {0}")]
    ChartSingularity(String),

    #[error("pole singularity: sin(theta) below {floor:e}")]
    PoleSingularity { floor: f64 },

    #[error("gradient mismatch in constraint {constraint} ({label}): relative error {rel_error:e}")]
    GradientMismatch {
        constraint: usize,
        label: String,
        rel_error: f64,
    },

    #[error("projection failed after {iterations} iterations (residual {residual:e})")]
    ProjectionFailed { iterations: usize, residual: f64 },

    #[error("constraint drift {residual:e} exceeds limit {limit:e}")]
    DriftExceeded { residual: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

impl Error {
    /// Errors raised by the reduction or the chart mid-integration, as opposed
    /// to bad input.
    pub fn is_runtime_singularity(&self) -> bool {
        matches!(
            self,
            Error::SingularOmega { .. }
                | Error::ChartSingularity(_)
                | Error::PhaseUndefined { .. }
                | Error::PoleSingularity { .. }
                | Error::ProjectionFailed { .. }
                | Error::DriftExceeded { .. }
        )
    }
}
