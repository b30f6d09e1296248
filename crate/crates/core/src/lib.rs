//! Splitting methods for convex programs with a coupled quadratic objective
//! and one linear equality constraint:
//!
//! ```text
//! min Σ θ_i(x_i) + ½ xᵀHx + gᵀx   s.t.  Σ A_i x_i = b
//! ```
//!
//! - [`model`]: instances, validation, KKT residuals and a direct KKT oracle.
//! - [`prox`]: separable terms with closed-form proximal maps.
//! - [`solver`]: two-block proximal and linearized ADMM, cyclic n-block ADMM,
//!   proximal BCD and BCPG.
//! - [`rp`]: randomly permuted sweeps and their exact expectation.
//! - [`spectral`]: iteration matrices, spectral certificates, BCD rates and
//!   divergence witnesses.
//! - [`io`] and [`cli`]: instance files and the command-line front end.

pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod rp;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{KKTPoint, ProblemInstance};
pub use prox::ProxFn;
pub use solver::{IterateState, SolverConfig, Status, Trace, Variant};
