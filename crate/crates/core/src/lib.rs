//! Conjugate harmonic pairs with respect to a unitary-gradient field on P1
//! tetrahedral meshes, with the verification and Dirichlet-to-Neumann tools
//! around them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dtn;
pub mod error;
pub mod fields;
pub mod forms;
pub mod io;
pub mod mesh;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{CoefficientField, GammaSpec, ScalarField, WSpec};
pub use mesh::{Domain, Mesh, Vec3};
pub use solver::{Mode, PairSolveReport, SolverConfig};
