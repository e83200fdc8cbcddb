//! A laboratory for low-rank plus sparse matrix decomposition.
//!
//! The centerpiece is a pseudo-Bayesian robust-PCA solver ([`solver`]) that
//! minimizes a marginal-likelihood style objective over covariance
//! hyperparameters by majorization-minimization, with an ADMM subroutine
//! ([`admm`]) for the inner low-rank/sparse split. Convex reference solvers
//! (principal component pursuit, nuclear-norm matrix completion, and a
//! trace-penalized variant that collapses to regularized PCP) live in
//! [`baselines`]. Seeded synthetic problem generators ([`synth`]) and a
//! phase-transition sweep harness ([`bench`]) reproduce recovery experiments
//! deterministically.

pub mod admm;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
