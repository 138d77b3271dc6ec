//! Semi-discrete optimal transport between a weighted point cloud and a
//! measure carried by a polyline, and Wasserstein fitting of the polyline.
//!
//! The dual potential is found by maximizing a concave functional whose
//! value and gradient come from tracing each segment through the Laguerre
//! cells of the atoms ([`transport`]). [`solvers`] maximizes it, and
//! [`shape_opt`] moves the vertices down the transport cost, optionally
//! projecting onto speed and acceleration bounds.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod check;
pub mod io;
pub mod measures;
pub mod power_diagram;
pub mod scalar;
pub mod shape_opt;
pub mod solvers;
pub mod transport;

pub use measures::{
    check_genericity, density_from_lengths, AtomicMeasure, DualPotential, GenericityViolation, MeasureError, PointSet,
    PolylineMeasure,
};
pub use power_diagram::{build_oracle, NeighborOracle, OracleMode};
pub use scalar::Scalar;
pub use shape_opt::{
    optimize_polyline, optimize_polyline_with, project_kinematic, shape_gradient, AdmmConfig, KinematicConstraints,
    ShapeConfig, ShapeError, ShapeOutcome,
};
pub use solvers::{solve, Method, SolveError, SolveStatus, SolverConfig, TransportSolution};
pub use transport::{evaluate, hessian, SegmentTrace, SparseHessian, TransportError, TransportEvaluation};

pub type AtomicMeasure64 = AtomicMeasure<f64>;
pub type AtomicMeasure32 = AtomicMeasure<f32>;
pub type PolylineMeasure64 = PolylineMeasure<f64>;
pub type PolylineMeasure32 = PolylineMeasure<f32>;
pub type DualPotential64 = DualPotential<f64>;
pub type DualPotential32 = DualPotential<f32>;
pub type SegmentTrace64 = SegmentTrace<f64>;
pub type SegmentTrace32 = SegmentTrace<f32>;
pub type TransportEvaluation64 = TransportEvaluation<f64>;
pub type TransportEvaluation32 = TransportEvaluation<f32>;
pub type TransportSolution64 = TransportSolution<f64>;
pub type TransportSolution32 = TransportSolution<f32>;
