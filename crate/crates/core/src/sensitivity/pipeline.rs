use serde::Serialize;

use crate::convexify::{convexify, select_delta_from_gamma, ConvexifiedQdp};
use crate::error::Result;
use crate::model::{BasePoint, NldpModel, QdpProblem, Trajectory};
use crate::nullspace::reduced_hessian_gamma;
use crate::riccati::{backward_pass, forward_solve, RiccatiSolution};
use crate::verify::newton_equality_solve;

use super::fit::{fit_decay_rate, DecayFit, DECAY_FLOOR};
use super::{PerturbationDirection, Source};

/// Directional derivative `(p, q)` of the optimal trajectory along `l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityResult {
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub norm_p: Vec<f64>,
    pub norm_q: Vec<f64>,
    #[serde(skip)]
    pub source: Option<Source>,
    /// Decay fit of `‖p_k‖` when the direction has a canonical source and
    /// enough stages exceed the numerical floor.
    pub fit: Option<DecayFit>,
    pub delta: f64,
    pub gamma: f64,
}

/// Convexified and factorized QDP, reusable across many directions.
#[derive(Debug, Clone)]
pub struct SensitivitySolver {
    pub gamma: f64,
    pub delta: f64,
    pub convexified: ConvexifiedQdp,
    pub riccati: RiccatiSolution,
}

impl SensitivitySolver {
    /// Computes `γ`, shifts by `δ = fraction · γ`, convexifies and runs the backward pass.
    pub fn new(qdp: &QdpProblem, delta_fraction: f64) -> Result<Self> {
        let gamma = reduced_hessian_gamma(qdp)?;
        Self::with_gamma(qdp, gamma, delta_fraction)
    }

    /// Same as [`new`](Self::new) with a precomputed `γ`.
    pub fn with_gamma(qdp: &QdpProblem, gamma: f64, delta_fraction: f64) -> Result<Self> {
        let delta = select_delta_from_gamma(gamma, delta_fraction)?;
        let convexified = convexify(qdp, delta)?;
        let riccati = backward_pass(convexified.as_problem())?;
        Ok(Self {
            gamma,
            delta,
            convexified,
            riccati,
        })
    }

    pub fn solve(&self, l: &PerturbationDirection) -> Result<SensitivityResult> {
        let trajectory = forward_solve(&self.riccati, self.convexified.as_problem(), l)?;
        let norm_p = trajectory.state_norms();
        let norm_q = trajectory.control_norms();
        let fit = l
            .source
            .and_then(|s| fit_decay_rate(&norm_p, s, DECAY_FLOOR).ok());
        Ok(SensitivityResult {
            trajectory,
            norm_p,
            norm_q,
            source: l.source,
            fit,
            delta: self.delta,
            gamma: self.gamma,
        })
    }
}

/// Convexify with `δ = fraction · γ`, run the Riccati recursion and
/// reconstruct the directional derivative along `l`.
pub fn solve_sensitivity(qdp: &QdpProblem, l: &PerturbationDirection, delta_fraction: f64) -> Result<SensitivityResult> {
    SensitivitySolver::new(qdp, delta_fraction)?.solve(l)
}

/// One-sided difference quotient `(z*(d + εl) - z*(d)) / ε` of NLDP solutions,
/// both computed by the Newton oracle started from `base.primal`.
pub fn finite_difference_sensitivity(
    model: &dyn NldpModel,
    base: &BasePoint,
    l: &PerturbationDirection,
    eps: f64,
) -> Result<Trajectory> {
    let z0 = newton_equality_solve(model, &base.reference, &base.primal)?;
    let z1 = newton_equality_solve(model, &base.reference.perturbed(l, eps), &base.primal)?;
    Ok(z1.trajectory.sub(&z0.trajectory).scaled(1.0 / eps))
}
