//! Optimal-transport evaluation of spatial predictions.
//!
//! Predictions and observations at a set of locations are treated as two
//! mass distributions. The error of a prediction is the cheapest way to
//! move predicted mass onto observed mass under a cost matrix:
//!
//! - [`exact`]: network simplex for the balanced problem.
//! - [`partial`]: unequal totals via a dummy location with penalty `phi`.
//! - [`entropic`]: log-domain Sinkhorn, Sinkhorn divergence and gradients.
//! - [`stats`]: pointwise metrics, Moran's I, metric correlations.
//! - [`costs`]: Euclidean, capped, space-time and cluster-to-point costs.
//! - [`synthetic`]: spatially imbalanced residual fields.
//! - [`aggregate`]: clustering and cross-scale evaluation.
//! - [`report`]: the per-sample metric bundle written by the CLI.
//! - [`runtime`]: timing harness comparing the exact and entropic solvers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod costs;
pub mod domain;
pub mod entropic;
pub mod error;
pub mod exact;
pub mod partial;
pub mod report;
pub mod runtime;
pub mod stats;
pub mod synthetic;

pub use domain::{
    shift_to_nonnegative, validate_pair, Balance, CostMatrix, Location, LocationSet, PlanEdge,
    Residuals, SpatialSignature, TransportPlan, ValidationReport,
};
pub use entropic::{SinkhornConfig, SinkhornSolution};
pub use error::{GeotError, Result};
pub use exact::{solve_exact, wasserstein, ExactSolverConfig, PivotRule};
pub use partial::{solve_partial, PartialConfig, PartialResult, PhiPolicy};
pub use report::{EvalReport, EvalRow};
