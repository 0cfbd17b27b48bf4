//! Formal power series machinery for germs of holomorphic maps at a fixed
//! point: resonance analysis, simultaneous linearization of commuting
//! families on monomial ideals, straightening of totally real families, and
//! the involution pipeline attached to CR singularities.

pub mod coeff;
pub mod crsing;
pub mod error;
pub mod json;
pub mod linalg;
pub mod linearize;
pub mod realfam;
pub mod resonance;
pub mod series;
pub mod taulin;

pub use coeff::{Backend, Coeff, GaussQ, CF64};
pub use crsing::{
    bishop_invariants, complexify_and_build_involutions, decompose_spectrum, extract_jets,
    prepare_quadric, to_spectral_coordinates, BlockClass, InvolutionPair, ManifoldData,
    PreparedQuadric, SpectralDecomposition,
};
pub use error::{GermError, Result};
pub use linalg::Mat;
pub use linearize::{
    check_commutativity, check_rho_equivariance, linearize_on_ideal, majorant_diagnostics,
    verify_conjugacy, CommutingFamily, LinearizationResult, MajorantDiagnostics,
};
pub use realfam::{
    build_reflection_group, check_nonresonance, intersection_report, straighten, AntiInvolution,
    RealFamily,
};
pub use resonance::{
    DiagonalFamily, Magnitude, MonomialIdeal, OmegaSequence, OracleMode, ResIdeal, ResonanceAnswer,
    ResonanceOracle,
};
pub use series::{compose_series, solve_implicit, Germ, MultiIndex, Series, SliceComposer};
pub use taulin::{
    check_ideal_compatibility, cutting_variety, formal_tau_linearizability,
    linearize_taus_on_ideal, quadric_equivalence, CuttingVariety, QuadricEquivalence, TauLayout,
    TauLinResult,
};
