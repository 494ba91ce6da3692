//! Exact arithmetic for higher Frobenius lifts, pi-derivations, and
//! arithmetic analogues of linear connections over truncated local rings.
//!
//! The ring tower: a finite field `F_{p^m}`, its truncated unramified Witt
//! lift `W = (Z/p^K)[x]/(g)` with Frobenius automorphism, and the tame
//! totally ramified extension `R = W[pi]/(pi^e - p)` carrying a family of
//! commuting Frobenius lifts twisted by roots of unity. On top of the tower:
//! pi-derivations and their calculus, arithmetic Christoffel symbols and
//! curvature-like invariants for symmetric bilinear forms, arithmetic
//! geodesics and parallel transport, delta-polynomials and Witt coordinates,
//! jet groups, and overconvergence (ramification-independence) checks.

pub mod error;
mod modarith;
pub mod base_field;
pub mod witt_base;
pub mod ram_ring;
pub mod series_ring;
pub mod matrix_ring;
pub mod connections;
pub mod delta_poly;
pub mod geodesics;
pub mod jet_group;
pub mod overconv;

pub use error::{Error, Result};
pub use base_field::{FieldCtx, FqElem};
pub use witt_base::{BaseCtx, WElem};
pub use ram_ring::{RamCtx, RpiElem, Word};
pub use series_ring::{SeriesCtx, SeriesElem};
pub use matrix_ring::{Mat, PiRing, RamHost};
pub use connections::{
    ConnectionData, Metric, ResidualReport, Sym3, TorsionPoly, TorsionSymbol,
};
pub use delta_poly::DeltaPoly;
pub use geodesics::{Curve, GeodesicCtx, OdeSystem, PolyW};
pub use jet_group::JetPoint;
pub use overconv::{OverconvMismatch, OverconvReport, TorsionScaling};
