//! Independent oracles: a dense saddle-point solver for QDPs, a
//! Lagrange–Newton solver for small NLDPs, and finite-difference checks.

pub mod fd;
mod hessian_check;
mod kkt;
mod newton;

pub use hessian_check::{finite_diff_hessian_check, BlockError, HessianCheckReport, HESSIAN_CHECK_TOL};
pub use kkt::{dense_kkt_solve, KktSolution};
pub use newton::{newton_equality_solve, NewtonResult, NEWTON_MAX_ITER, NEWTON_TOL};
