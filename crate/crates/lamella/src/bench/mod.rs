//! Benchmark problems, error metrics and machine-readable reports.

pub mod cases;
pub mod metrics;
pub mod runs;
pub mod vtk;

pub use metrics::{convergence_slope, sphere_geometry_error, ErrorReport};
