//! Discrete curvature flows on triangulated 3-manifolds with piecewise-linear metrics.
//!
//! The crate computes edge-based combinatorial Ricci curvature for Euclidean
//! and constant-curvature tetrahedra, the curvature Jacobian (the discrete
//! Laplacian), integrates second- and fourth-order curvature flows, and ships
//! closed-form regular-tetrahedron Laplacians as numerical oracles.

pub mod cli;
pub mod complex;
pub mod curvature;
pub mod flows;
pub mod geometry;
pub mod par;
pub mod regular;

pub use complex::{Builtin, Triangulation};
pub use curvature::{CurvatureState, Laplacian, PLMetric};
pub use flows::{FlowConfig, FlowKind, FlowResult, FlowStatus};
