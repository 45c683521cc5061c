//! Directional sensitivities of equality-constrained nonlinear dynamic
//! programs.
//!
//! A nonlinear dynamic program is linearized at a primal-dual solution into a
//! stagewise quadratic program whose solution is the directional derivative
//! of the optimal trajectory along a reference perturbation. The quadratic
//! program may be nonconvex stagewise; it is convexified by linear shifting
//! and then solved by Riccati recursion. Computable constants bound the decay
//! of the sensitivities away from the perturbed stage.

pub mod convexify;
pub mod error;
pub mod linalg;
pub mod model;
pub mod models;
pub mod nullspace;
pub mod riccati;
pub mod sensitivity;
pub mod verify;

pub use convexify::{convexify, select_delta, shifted_problem, verify_equivalence, ConvexifiedQdp, EquivalenceReport};
pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use model::{
    assemble_qdp_from_nldp, eval_qdp_objective, eval_tail_objective, rollout_dynamics, BasePoint, Dims,
    NldpModel, QdpProblem, Reference, Stage, Trajectory,
};
pub use nullspace::{assemble_constraints, nullspace_basis, reduced_hessian_gamma, ConstraintSystem, NullspaceBasis};
pub use riccati::{backward_pass, closed_form_p, closed_loop_product_norm, cost_to_go, forward_solve, RiccatiSolution};
pub use sensitivity::{
    controllability, fit_decay_rate, solve_sensitivity, theoretical_constants, unit_direction, BoundsReport,
    PerturbationDirection, SensitivityResult, Source,
};
pub use verify::{dense_kkt_solve, finite_diff_hessian_check, newton_equality_solve, KktSolution};
