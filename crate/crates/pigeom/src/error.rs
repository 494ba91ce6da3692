//! Shared error type for all ring and solver operations.

use thiserror::Error;

/// Everything that can go wrong in exact arithmetic over the ring tower.
///
/// All arithmetic here is exact at a tracked precision, so failures are
/// structural (bad input, non-unit, exhausted precision), never roundoff.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Inversion was requested for an element whose residue is zero.
    #[error("element is not a unit")]
    NotAUnit,
    /// An operation needed more tracked precision than the operand carries.
    #[error("precision exhausted: needed {needed}, have {have}")]
    PrecisionExhausted { needed: u32, have: u32 },
    /// Exact division failed because the operand is not divisible at its
    /// tracked precision.
    #[error("exact division failed: operand not divisible at current precision")]
    NotDivisible,
    /// A matrix inverse was requested but the residue matrix is singular.
    #[error("matrix residue is singular")]
    SingularResidue,
    /// A square root was requested for a matrix not congruent to 1 mod pi.
    #[error("matrix is not congruent to the identity modulo pi")]
    NotCongruentToOne,
    /// A solver precondition (symmetry, antisymmetry, congruence) failed.
    #[error("solver hypothesis violated: {0}")]
    HypothesisViolated(String),
    /// A denominator that must be a unit vanishes modulo p.
    #[error("denominator vanishes modulo p")]
    DegenerateDenominator,
    /// A curve fails the non-degeneracy conditions.
    #[error("degenerate curve: a non-degeneracy sum vanishes modulo p")]
    DegenerateCurve,
    /// Initial data for the exponential map lies on an excluded hyperplane.
    #[error("initial data lies on an excluded hyperplane")]
    HyperplaneViolation,
    /// Construction-time validation of a context or input failed.
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
