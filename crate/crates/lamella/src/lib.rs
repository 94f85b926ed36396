//! Multi-patch isogeometric Kirchhoff-Love shell analysis coupled to surface
//! phase fields.
//!
//! The crate provides
//!
//! * NURBS patches, refinement and conforming multi-patch topology ([`splines`]),
//! * curvilinear surface differential geometry at quadrature points ([`geometry`]),
//! * Kirchhoff-Love shell constitutive models, element forces and consistent
//!   tangents ([`shell`]),
//! * Cahn-Hilliard phase separation and fourth-order brittle-fracture phase
//!   fields ([`phasefield`]),
//! * G1 (surface normal) and C1 (phase-field gradient) continuity constraints
//!   across patch interfaces, enforced by penalty or Lagrange multiplier
//!   methods ([`constraints`]),
//! * a monolithic Newton / generalized-alpha solver stack on top of a banded
//!   direct factorization ([`solver`]),
//! * benchmark problems, error metrics and machine-readable reports ([`bench`]).
//!
//! All quantities are non-dimensional: lengths in `L0`, 2D moduli in `E0`,
//! times in `T0`, energy densities in `Psi0`.

pub mod bench;
pub mod constraints;
pub mod geometry;
pub mod phasefield;
pub mod real;
pub mod shell;
pub mod solver;
pub mod splines;

mod quadrature;

pub use real::{Dual, Real};
