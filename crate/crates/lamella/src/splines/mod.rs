//! B-spline / NURBS basis evaluation, refinement and multi-patch topology.

mod knots;
mod multipatch;
mod nurbs;

pub mod io;

pub use knots::{basis_derivs, find_span, greville_abscissae, KnotVector};
pub use multipatch::{
    build_multipatch, EdgeId, InterfaceDecl, InterfaceEdge, InterfaceKind, LineElement,
    MultiPatchSurface, SurfaceElement, SymmetryDecl,
};
pub use nurbs::{split_at_c0_lines, ControlPoint, CurveSample, Direction, NurbsPatch, ShapeTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("parameter {u} outside knot range [{lo}, {hi}]")]
    OutOfDomain { u: f64, lo: f64, hi: f64 },
    #[error("derivative order {0} unsupported (max 2)")]
    UnsupportedOrder(usize),
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("invalid control net: {0}")]
    InvalidNet(String),
    #[error("non-conforming interface: {0}")]
    Topology(String),
}
