//! Discontinuous Galerkin discretization and primal-dual active set solver
//! for elliptic optimal control with pointwise state constraints.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod dg;
pub mod error;
pub mod galerkin;
pub mod mesh;
pub mod metrics;
pub mod pdas;
pub mod problems;
pub mod quadrature;
pub mod selftest;
pub mod sparse;
pub mod study;
pub mod taylor;

pub use assembly::{BlockDiagonalMass, Coefficients, Discretization};
pub use dg::{ConformingFunction, DgFunction};
pub use error::{Error, Result};
pub use galerkin::ReferenceField;
pub use mesh::{Point, PolygonalDomain, Triangulation};
pub use pdas::{ObstacleQP, PdasOptions, PdasState};
pub use problems::{ExactSolution, MeshMode, ProblemSpec};
pub use sparse::SparseMatrix;
pub use study::{LevelSolution, StudyReport, StudyRow};
