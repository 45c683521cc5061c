use serde::Serialize;

use crate::convexify::convexify;
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::model::QdpProblem;
use crate::nullspace::reduced_hessian_gamma;
use crate::riccati::backward_pass;

use super::controllability::controllability;

/// Every constant entering the exponential-decay bounds.
///
/// Measured quantities (`upsilon_tilde`, `upsilon_tilde_qbar`) come from the
/// convexified problem; the worst-case constant `upsilon_qbar` is reported
/// alongside for comparison. `upsilon_b = max(upsilon, upsilon_tilde)` bounds
/// every data block of the convexified problem and is the data bound used in
/// the decay constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub gamma: f64,
    pub delta: f64,
    pub upsilon: f64,
    pub t: usize,
    pub lambda_c: f64,
    pub psi: f64,
    pub upsilon_qbar: f64,
    pub upsilon_tilde: f64,
    pub upsilon_b: f64,
    pub lambda_bcs: f64,
    pub lambda_h: f64,
    pub upsilon_tilde_qbar: f64,
    pub upsilon_e: f64,
    pub rho: f64,
    /// Feedback bound, floored at 1.
    pub upsilon_feedback: f64,
    pub upsilon_u: f64,
    pub upsilon_f: f64,
    pub upsilon_uf: f64,
    /// State bound `(1 + upsilon_b) upsilon_uf`.
    pub upsilon_p: f64,
    pub upsilon_pq1: f64,
    pub upsilon_pq2: f64,
    pub upsilon_pq: f64,
}

impl BoundsReport {
    /// `Υ_pq ρ^d` for distance `d` from the perturbed stage.
    pub fn decay_bound(&self, distance: usize) -> f64 {
        self.upsilon_pq * self.rho.powi(distance as i32)
    }

    /// `Υ_E ρ^{j-i+1}` bounding `‖E_j ⋯ E_i‖`.
    pub fn product_bound(&self, i: usize, j: usize) -> f64 {
        self.upsilon_e * self.rho.powi((j - i + 1) as i32)
    }

    /// `Υ_uf ρ^d` bounding the closed-form blocks.
    pub fn block_bound(&self, distance: usize) -> f64 {
        self.upsilon_uf * self.rho.powi(distance as i32)
    }
}

/// Partial geometric sum `Σ_{i=1}^{t} Υ^i = Υ(1 - Υ^t)/(1 - Υ)`, equal to `tΥ` at `Υ = 1`.
pub fn psi(upsilon: f64, t: usize) -> f64 {
    if (upsilon - 1.0).abs() < 1e-12 {
        t as f64 * upsilon
    } else {
        upsilon * (1.0 - upsilon.powi(t as i32)) / (1.0 - upsilon)
    }
}

/// Worst-case bound on the shift matrices in terms of the data bound,
/// the controllability horizon and the Gramian bound.
pub fn upsilon_qbar(upsilon: f64, psi: f64, t: usize, lambda_c: f64) -> f64 {
    let ut = upsilon.powi(t as i32);
    let tail: f64 = (1..t)
        .map(|i| (upsilon.powi(i as i32) + psi * psi * ut / lambda_c).powi(2))
        .sum();
    2.0 * upsilon * (1.0 + psi * psi * ut * ut / (lambda_c * lambda_c) + tail)
}

/// Lower eigenvalue bound `(β_C/(β_C + β_B))^2 min(β_S, β_C)` for a symmetric
/// block matrix with lower-right block `⪰ β_C I`, Schur complement `⪰ β_S I`
/// and off-diagonal norm `≤ β_B`.
pub fn lambda_bcs(beta_s: f64, beta_b: f64, beta_c: f64) -> Result<f64> {
    if !(beta_s > 0.0) || !(beta_c > 0.0) || !(beta_b >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need beta_S > 0, beta_C > 0, beta_B >= 0; got ({beta_s}, {beta_b}, {beta_c})"
        )));
    }
    Ok((beta_c / (beta_c + beta_b)).powi(2) * beta_s.min(beta_c))
}

/// Amplitude `Υ_E = sqrt(Υ̃_Q̄ / λ_H)` and decay rate `ρ = sqrt(Υ̃_Q̄ / (Υ̃_Q̄ + λ_H))`.
pub fn closed_loop_constants(upsilon_tilde_qbar: f64, lambda_h: f64) -> (f64, f64) {
    (
        (upsilon_tilde_qbar / lambda_h).sqrt(),
        (upsilon_tilde_qbar / (upsilon_tilde_qbar + lambda_h)).sqrt(),
    )
}

/// Computes every decay constant for shift `delta`. Requires `γ > 0`,
/// `δ ∈ (0, γ)` and controllability with `(λ_C, t_max)`.
pub fn theoretical_constants(qdp: &QdpProblem, delta: f64, lambda_c: f64, t_max: usize) -> Result<BoundsReport> {
    let gamma = reduced_hessian_gamma(qdp)?;
    if !(gamma > 0.0) {
        return Err(Error::SoscFailed { gamma });
    }
    if !(delta > 0.0 && delta < gamma) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} must lie in (0, gamma = {gamma})"
        )));
    }
    let ctrl = controllability(qdp, lambda_c, t_max)?;
    if !ctrl.pass {
        return Err(Error::AssumptionFailed(format!(
            "controllability with lambda_C = {lambda_c}, t_max = {t_max} fails at stages {:?}",
            ctrl.t_k
                .iter()
                .enumerate()
                .filter(|(_, t)| t.is_none())
                .map(|(k, _)| k)
                .collect::<Vec<_>>()
        )));
    }
    let t = ctrl.t;
    let upsilon = qdp.max_block_norm();
    let psi_v = psi(upsilon, t);
    let upsilon_qbar_v = upsilon_qbar(upsilon, psi_v, t, lambda_c);

    let conv = convexify(qdp, delta)?;
    let upsilon_tilde = conv.max_block_norm();
    let rs = backward_pass(conv.as_problem())?;
    let upsilon_tilde_qbar = rs.k.iter().map(op_norm).fold(0.0, f64::max);
    let lambda_h = (gamma / (gamma + upsilon_tilde)).powi(2) * delta;
    let lambda_bcs_v = lambda_bcs(delta, upsilon_tilde, gamma)?;
    let (upsilon_e, rho) = closed_loop_constants(upsilon_tilde_qbar, lambda_h);

    let ub = upsilon.max(upsilon_tilde);
    let uq = upsilon_tilde_qbar;
    let feedback = ((ub * ub * uq + upsilon_tilde) / gamma).max(1.0);
    let one_m_r2 = 1.0 - rho * rho;
    let upsilon_u = (1.0 + feedback) * upsilon_e.powi(2) * ub.powi(3) / (gamma * one_m_r2)
        + upsilon_e * ub * ub / (gamma * rho);
    let upsilon_f = ub * ub * upsilon_e.powi(2) * uq * rho / (gamma * one_m_r2)
        + upsilon_e / rho
        + ub * ub * upsilon_e * uq / (gamma * rho);
    let upsilon_uf = upsilon_u.max(upsilon_f);
    let upsilon_p = (1.0 + ub) * upsilon_uf;
    let upsilon_pq1 = feedback * upsilon_e;
    let upsilon_pq2 = upsilon_p * feedback
        + (1.0 + feedback + rho * uq) * upsilon_e * ub * ub / (gamma * rho)
        + (ub * ub * uq + ub) / gamma;

    Ok(BoundsReport {
        gamma,
        delta,
        upsilon,
        t,
        lambda_c,
        psi: psi_v,
        upsilon_qbar: upsilon_qbar_v,
        upsilon_tilde,
        upsilon_b: ub,
        lambda_bcs: lambda_bcs_v,
        lambda_h,
        upsilon_tilde_qbar,
        upsilon_e,
        rho,
        upsilon_feedback: feedback,
        upsilon_u,
        upsilon_f,
        upsilon_uf,
        upsilon_p,
        upsilon_pq1,
        upsilon_pq2,
        upsilon_pq: upsilon_pq1.max(upsilon_pq2),
    })
}
