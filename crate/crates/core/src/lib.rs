//! Meshfree finite differences for the Poisson equation on scattered point clouds.
//!
//! The Laplacian at a point is approximated from function values at nearby
//! cloud points. Two stencil selection strategies are provided:
//!
//! * **LSQ** — classical distance-weighted least squares over all candidate
//!   neighbors. Dense rows, no sign control.
//! * **MPS** — minimal positive stencils: a linear program selects at most
//!   `k = d(d+3)/2` neighbors with nonnegative coefficients, or produces a
//!   Farkas certificate proving that no positive stencil exists.
//!
//! Positive stencils make the assembled operator an L-matrix; together with
//! connectivity to Dirichlet points this yields an M-matrix, hence a discrete
//! maximum principle and convergent classical iterations.
//!
//! The crate is organized along the pipeline:
//!
//! * [`geometry`] — implicit domains (box minus ball), visibility across
//!   cracks, and the geometric criteria for positive-stencil existence
//!   (half-space necessary test, cone sufficient test, candidate radius).
//! * [`cloud`] — generation and quality measurement of classified point
//!   clouds with minimum separation and mesh-size guarantees.
//! * [`simplex`] — small dense standard-form LP solver with Bland's rule and
//!   Farkas infeasibility certificates.
//! * [`stencil`] — consistency constraints and the LSQ / MPS constructions.
//! * [`assembly`] — global sparse operator, boundary rows, M-matrix checks.
//! * [`solver`] — Jacobi, Gauss-Seidel and BiCGStab with residual reporting.
//! * [`harness`] — manufactured solutions, convergence and cost studies, CLI.
//!
//! See the `examples/` directory for runnable walkthroughs of each stage.

pub mod assembly;
pub mod cloud;
pub mod geometry;
pub mod harness;
pub mod simplex;
pub mod solver;
pub mod stencil;

pub use assembly::{analyze, assemble, MatrixReport, RhsAssembler, SparseMatrix};
pub use cloud::{generate, measure_quality, CloudQualityReport, PointCloud, Role};
pub use geometry::{
    candidate_radius, cone_criterion_check, half_space_check, ConeCriterionParams, DomainSpec,
};
pub use harness::{manufactured, run_convergence, BcMode, ConvergenceConfig, ManufacturedSolution};
pub use simplex::{LpOutcome, StandardLp};
pub use solver::{matvec, solve_iterative, IterMethod, SolveReport, SolverConfig};
pub use stencil::{
    build_constraints, lsq_stencil, mps_stencil, ConstraintKind, ConstraintSystem, MpsOutcome,
    Stencil, StencilMethod,
};
