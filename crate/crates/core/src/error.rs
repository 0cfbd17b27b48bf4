//! Error type shared by all modules.

use thiserror::Error;

/// Failures reported by the library. Mathematical negatives that are part of
/// a normal answer (a resonance, a commutation violation) are returned as
/// values; the variants here abort an operation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GermError {
    #[error("arity mismatch in {what}: {left} vs {right}")]
    ArityMismatch {
        what: String,
        left: usize,
        right: usize,
    },
    #[error("truncation mismatch: {left} vs {right}")]
    TruncationMismatch { left: u32, right: u32 },
    #[error("index of degree {degree} is beyond truncation {trunc}")]
    OutOfTruncation { degree: u32, trunc: u32 },
    #[error("map does not fix the origin (component {component} has a constant term)")]
    NotConstantFree { component: usize },
    #[error("linear part is not invertible")]
    NonInvertibleLinearPart,
    #[error("Jacobian of the unknown block is singular")]
    ImplicitSolveSingular,
    #[error(
        "prescribed linear branch does not solve the equation at degree 1 (component {component})"
    )]
    BranchMismatch { component: usize },
    #[error("series is not divisible by variable {var}")]
    NotDivisible { var: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigenvalue mu[{i}][{j}] is zero")]
    ZeroEigenvalue { i: usize, j: usize },
    #[error("exact oracle mode requires exact coefficients")]
    ExactModeNeedsExactBackend,
    #[error("enumeration budget exceeded; largest completed k = {largest_completed}")]
    BudgetExceeded { largest_completed: u32 },
    #[error("infimum over an empty index set")]
    VacuousInf,
    #[error(
        "ambiguous resonance at Q={q:?}, j={j}: margin {margin:e} within 10x of tolerance {eps:e}"
    )]
    AmbiguousResonance {
        q: Vec<u32>,
        j: usize,
        margin: f64,
        eps: f64,
    },
    #[error("lattice oracle says non-resonant but the divisor vanishes at Q={q:?}, j={j}")]
    OracleInconsistent { q: Vec<u32>, j: usize },

    #[error(
        "family is not abelian: maps {i} and {j} differ at component {component}, monomial {q:?}"
    )]
    NotAbelian {
        i: usize,
        j: usize,
        component: usize,
        q: Vec<u32>,
    },
    #[error("linear part of map {i} is not the declared diagonal")]
    LinearPartMismatch { i: usize },
    #[error("formal obstruction at Q={q:?}, component j={j}: value {value}")]
    FormalObstruction {
        q: Vec<u32>,
        j: usize,
        value: String,
    },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("diagnostics budget exceeded: degree {requested} > cap {cap}")]
    DiagnosticsBudgetExceeded { requested: u32, cap: u32 },

    #[error("involution {0} does not square to the identity")]
    NotInvolution(usize),
    #[error("linear parts of the reflection group are not diagonal")]
    NonDiagonalLinearParts,
    #[error("tangent planes of involutions {i} and {j} coincide")]
    TangentPlanes { i: usize, j: usize },
    #[error("anti-linearization failed for involution {i} at Q={q:?}, component {k}")]
    AntiLinearizationFailed { i: usize, q: Vec<u32>, k: usize },

    #[error("reality condition violated in series {series} at monomial {q:?}")]
    RealityViolated { series: String, q: Vec<u32> },
    #[error("sesquilinear part of the quadratic jet vanishes")]
    DegenerateSesquilinear,
    #[error("first non-degeneracy condition fails: det = {det}")]
    Cond1Violated { det: String },
    #[error("second non-degeneracy condition fails for F[{alpha}]: residual {residual}")]
    Cond2Violated { alpha: usize, residual: String },
    #[error("Bishop invariant {0} vanishes")]
    ZeroBishopInvariant(usize),
    #[error("V1 + V2 + E does not span (dimension {found} of {expected})")]
    SpanDeficient { found: usize, expected: usize },
    #[error("spectral classification ambiguous: {0}")]
    ClassificationAmbiguous(String),
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("compatibility identity fails for block {i} at Q={q:?}")]
    CompatibilityResidual { i: usize, q: Vec<u32> },
    #[error("ideal is not compatible with the linear involutions: {0}")]
    IncompatibleIdeal(String),
}

pub type Result<T> = std::result::Result<T, GermError>;
