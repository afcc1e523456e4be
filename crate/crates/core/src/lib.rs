//! Three nontrivial critical points of the critical-growth p-Laplacian
//! energy on the unit square or cube:
//!
//! ```text
//! -div(|grad u|^{p-2} grad u) = |u|^{p*-2} u + lambda f(u)   in (0,1)^N
//!                           u = 0                             on the boundary
//! ```
//!
//! one nonnegative, one nonpositive and one sign-changing, each obtained as a
//! minimizer of the energy over a sign-restricted Nehari-type set.
//!
//! * [`mesh`]: P1 simplicial discretization and nodal quadrature.
//! * [`functional`]: source families, energy, residual, Sobolev threshold.
//! * [`nehari`]: constraint functionals, fibering scalings, tangent projection.
//! * [`optimizer`]: projected Sobolev-gradient descent on K1, K2, K3.
//! * [`verify`]: pass/fail checks of the structural properties.
//! * [`io`]: CSV fields and JSON summaries.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functional;
pub mod io;
pub mod mesh;
pub mod nehari;
pub mod optimizer;
pub mod precond;
pub mod verify;

pub use error::{Error, Result};
pub use functional::{Family, GrowthConstants, Nonlinearity, RunParameters};
pub use mesh::{build_mesh, GridFunction, Mesh};
pub use nehari::{KIndex, Part};
pub use optimizer::{Problem, SolutionTriple, SolveReport, SolverConfig};
