//! Perturbation directions, the end-to-end sensitivity pipeline,
//! controllability diagnostics, decay constants and empirical decay fits.

mod bounds;
mod controllability;
mod direction;
mod fit;
mod pipeline;

pub use bounds::{closed_loop_constants, lambda_bcs, psi, theoretical_constants, upsilon_qbar, BoundsReport};
pub use controllability::{controllability, ControllabilityReport};
pub use direction::{unit_direction, PerturbationDirection, Source};
pub use fit::{fit_decay_rate, fit_line, DecayFit, LineFit, DECAY_FLOOR};
pub use pipeline::{finite_difference_sensitivity, solve_sensitivity, SensitivityResult, SensitivitySolver};
