//! Space-time minimum-residual finite elements for the one-dimensional
//! viscous shallow water equations.
//!
//! The solver discretizes the whole space-time slab `(x_L, x_R) × (0, T)`
//! with triangles, uses continuous trial spaces for elevation, velocity and
//! stress, and broken test spaces whose Riesz representer of the residual
//! doubles as an a posteriori error estimate driving adaptive refinement.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapt;
pub mod basis;
pub mod benchmarks;
pub mod cases;
pub mod error;
pub mod fespace;
pub mod forms;
pub(crate) mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod slices;
pub mod solver;
pub mod vtk;

pub use adapt::{
    adapt_loop, dorfler_mark, indicators, AdaptConfig, AdaptOutcome, IndicatorField, RecordRow,
    RunRecord,
};
pub use error::{Error, Result};
pub use fespace::{
    error_norms, field_error, interpolate, make_space, Continuity, ErrorNorms, FESpace, FieldError,
    FieldFunction, SpaceConfig,
};
pub use forms::{
    gram_matrix, jacobian, load, residual, Discretization, ExactField, ExactSolution, FormVariant,
    GramSpec, IcInterpolation, PhysicalParams, ProblemSpec, TrialState, VelocityBc,
};
pub use mesh::{BoundaryTag, ElementGeometry, PointLocator, Side, SpaceTimeMesh};
pub use quadrature::QuadratureRule;
pub use slices::{
    combined_row, compare_full_vs_slices, comparison_of, interpolate_error, run_comparison,
    run_slices, timeline_csv, Approach, CompareConfig, Comparison, ComparisonRow, SliceConfig,
    SliceResult,
};
pub use solver::{
    newton_solve, representer, ErrorRepresenter, LinearSolver, NewtonConfig, NewtonOutcome,
    StepKind,
};
