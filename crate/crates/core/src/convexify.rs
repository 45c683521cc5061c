//! Convexification by linear shifting: a backward recursion that rewrites the
//! stage costs with shift matrices `Q̄_k` so every transformed stage Hessian is
//! positive definite while the primal minimizer is unchanged.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs_vec, min_abs_eigenvalue, min_eigenvalue, op_norm, symmetric_part, Mat};
use crate::model::{eval_qdp_objective, Dims, QdpProblem, Stage};
use crate::nullspace::reduced_hessian_gamma;
use crate::riccati::{backward_pass, forward_solve};
use crate::sensitivity::PerturbationDirection;
use crate::verify::dense_kkt_solve;

/// Eigenvalue magnitude below which `R̃_k` counts as singular.
pub const INVERTIBILITY_TOL: f64 = 1e-12;

/// Output of the convexification recursion.
///
/// The transformed problem has stage blocks `Q̃_k, R̃_k, S̃_k, D̃_{k1}, D̃_{k2}`,
/// the original dynamics, and terminal block `δ I`. The constant block
/// `C_k^T Q̄_{k+1} C_k` acting on `l_k` alone is not stored; see
/// [`ConvexifiedQdp::constant_term`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexifiedQdp {
    pub delta: f64,
    problem: QdpProblem,
    /// Shift matrices `Q̄_0, ..., Q̄_N`.
    pub qbar: Vec<Mat>,
    /// Set when `δ = 0`, where only positive semidefiniteness is guaranteed.
    pub semidefinite: bool,
}

impl ConvexifiedQdp {
    /// The transformed QDP.
    pub fn as_problem(&self) -> &QdpProblem {
        &self.problem
    }

    pub fn dims(&self) -> Dims {
        self.problem.dims()
    }

    pub fn stage(&self, k: usize) -> &Stage {
        self.problem.stage(k)
    }

    /// Joint block `H̃_k = [[Q̃_k, S̃_k^T], [S̃_k, R̃_k]]`; for `k = N` this is `δ I`.
    pub fn stage_hessian(&self, k: usize) -> Mat {
        if k == self.dims().horizon {
            self.problem.terminal_q().clone()
        } else {
            self.problem.stage(k).hessian()
        }
    }

    /// The `l`-only quadratic `Σ_k l_k^T C_k^T Q̄_{k+1} C_k l_k` dropped from the
    /// transformed objective. Adding it back makes the transformed objective
    /// differ from the original by exactly `-l_{-1}^T Q̄_0 l_{-1}` on feasible points.
    pub fn constant_term(&self, l: &PerturbationDirection) -> f64 {
        self.problem
            .stages()
            .iter()
            .enumerate()
            .map(|(k, st)| {
                let c = &st.c * &l.stages[k];
                c.dot(&(&self.qbar[k + 1] * &c))
            })
            .sum()
    }

    /// Largest operator norm over the transformed blocks `Q̃, R̃, S̃, D̃1, D̃2`
    /// and the terminal `δ I`.
    pub fn max_block_norm(&self) -> f64 {
        self.problem
            .stages()
            .iter()
            .flat_map(|st| [&st.q, &st.r, &st.s, &st.d1, &st.d2])
            .map(op_norm)
            .fold(self.delta.abs(), f64::max)
    }

    /// Smallest eigenvalue of `H̃_k` over all stages `k < N`.
    pub fn min_stage_eigenvalue(&self) -> f64 {
        (0..self.dims().horizon)
            .map(|k| min_eigenvalue(&self.stage_hessian(k)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Runs the convexification recursion with shift `delta ≥ 0`.
pub fn convexify(qdp: &QdpProblem, delta: f64) -> Result<ConvexifiedQdp> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delta must be finite and nonnegative, got {delta}"
        )));
    }
    let dims = qdp.dims();
    let n = dims.horizon;
    let eye = Mat::identity(dims.nx, dims.nx);
    let mut qbar = vec![Mat::zeros(dims.nx, dims.nx); n + 1];
    qbar[n] = qdp.terminal_q() - &eye * delta;
    let mut stages: Vec<Option<Stage>> = vec![None; n];

    for k in (0..n).rev() {
        let st = qdp.stage(k);
        let next = &qbar[k + 1];
        let qb_a = next * &st.a;
        let qb_b = next * &st.b;
        let q_hat = &st.q + st.a.transpose() * &qb_a;
        let s_t = &st.s + st.b.transpose() * &qb_a;
        let r_t = symmetric_part(&(&st.r + st.b.transpose() * &qb_b));
        let d1_t = &st.d1 + st.c.transpose() * &qb_a;
        let d2_t = &st.d2 + st.c.transpose() * &qb_b;

        let min_abs = min_abs_eigenvalue(&r_t);
        if min_abs < INVERTIBILITY_TOL {
            return Err(Error::NonInvertibleRtilde {
                stage: k,
                min_abs_eig: min_abs,
            });
        }
        let min_eig = min_eigenvalue(&r_t);
        if delta > 0.0 && min_eig < 0.0 {
            return Err(Error::NotPositiveDefinite {
                stage: k,
                min_eig,
            });
        }
        let r_inv = r_t
            .clone()
            .try_inverse()
            .ok_or(Error::NonInvertibleRtilde {
                stage: k,
                min_abs_eig: min_abs,
            })?;
        let q_t = symmetric_part(&(s_t.transpose() * &r_inv * &s_t)) + &eye * delta;
        qbar[k] = symmetric_part(&(&q_hat - &q_t));
        stages[k] = Some(Stage {
            q: q_t,
            r: r_t,
            s: s_t,
            d1: d1_t,
            d2: d2_t,
            a: st.a.clone(),
            b: st.b.clone(),
            c: st.c.clone(),
        });
    }

    let stages = stages.into_iter().map(|s| s.expect("filled")).collect();
    Ok(ConvexifiedQdp {
        delta,
        problem: QdpProblem::from_parts_unchecked(dims, stages, &eye * delta),
        qbar,
        semidefinite: delta == 0.0,
    })
}

/// `fraction · γ` from an already computed `γ`.
pub fn select_delta_from_gamma(gamma: f64, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::SoscFailed { gamma });
    }
    Ok(fraction * gamma)
}

/// Shift `δ = fraction · γ`; values close to `γ` give the fastest decay constants.
pub fn select_delta(qdp: &QdpProblem, fraction: f64) -> Result<f64> {
    select_delta_from_gamma(reduced_hessian_gamma(qdp)?, fraction)
}

/// Message for a shift at or beyond `γ`, where positive definiteness is no
/// longer guaranteed (though it may still hold).
pub fn delta_warning(gamma: f64, delta: f64) -> Option<String> {
    (delta >= gamma).then(|| {
        format!("delta {delta} is not below gamma {gamma}; positive definiteness is not guaranteed")
    })
}

/// The QDP with every `Q_k` (terminal included) replaced by `Q_k - δ I`.
pub fn shifted_problem(qdp: &QdpProblem, delta: f64) -> QdpProblem {
    qdp.with_shifted_q(delta)
}

/// Comparison of the original and transformed problems for one direction.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// `‖w_transformed - w_original‖∞ / ‖w_original‖∞` (absolute when the latter is 0).
    pub primal_gap: f64,
    /// Transformed objective (constant term included) minus original objective.
    pub offset: f64,
    /// `-l_{-1}^T Q̄_0 l_{-1}`.
    pub expected_offset: f64,
    /// `|offset - expected_offset|` relative to the largest objective magnitude (at least 1).
    pub offset_error: f64,
}

/// Solves the original problem with the dense saddle-point oracle and the
/// transformed one by Riccati recursion, then compares solutions and objectives.
pub fn verify_equivalence(
    qdp: &QdpProblem,
    conv: &ConvexifiedQdp,
    l: &PerturbationDirection,
) -> Result<EquivalenceReport> {
    let kkt = dense_kkt_solve(qdp, l)?;
    let rs = backward_pass(conv.as_problem())?;
    let w = forward_solve(&rs, conv.as_problem(), l)?;

    let w_ref = kkt.w.stacked();
    let diff = max_abs_vec(&(w.stacked() - &w_ref));
    let scale = max_abs_vec(&w_ref);
    let primal_gap = if scale > 0.0 { diff / scale } else { diff };

    let original = eval_qdp_objective(qdp, l, &kkt.w)?;
    let transformed = eval_qdp_objective(conv.as_problem(), l, &w)? + conv.constant_term(l);
    let offset = transformed - original;
    let expected_offset = -l.initial.dot(&(&conv.qbar[0] * &l.initial));
    let mag = 1f64.max(original.abs()).max(transformed.abs());
    Ok(EquivalenceReport {
        primal_gap,
        offset,
        expected_offset,
        offset_error: (offset - expected_offset).abs() / mag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn decoupled(n: usize, q: f64, r: f64) -> QdpProblem {
        let st = Stage {
            q: m(q),
            r: m(r),
            s: m(0.0),
            d1: m(0.3),
            d2: m(-0.2),
            a: m(0.0),
            b: m(0.0),
            c: m(1.0),
        };
        QdpProblem::new(Dims::new(n, 1, 1, 1).unwrap(), vec![st; n], m(q)).unwrap()
    }

    #[test]
    fn vanishing_dynamics_leave_blocks_unchanged() {
        let qdp = decoupled(4, -3.0, 2.0);
        let conv = convexify(&qdp, 0.5).unwrap();
        for k in 0..4 {
            assert_eq!(conv.stage(k).r, m(2.0));
            assert_eq!(conv.stage(k).q, m(0.5));
            assert_eq!(conv.qbar[k], m(-3.5));
        }
        assert_eq!(conv.qbar[4], m(-3.5));
        assert!(!conv.semidefinite);
    }

    #[test]
    fn diagonal_hessian_at_gamma() {
        let g = 2.5;
        let qdp = decoupled(3, g, g);
        let conv = convexify(&qdp, g).unwrap();
        for k in 0..3 {
            assert_eq!(conv.stage_hessian(k), Mat::from_diagonal_element(2, 2, g));
        }
    }

    #[test]
    fn select_delta_arithmetic() {
        assert!((select_delta_from_gamma(18.0, 0.9).unwrap() - 16.2).abs() < 1e-12);
        assert_eq!(select_delta_from_gamma(18.0, 0.5).unwrap(), 9.0);
        assert!(matches!(
            select_delta_from_gamma(0.0, 0.9),
            Err(Error::SoscFailed { .. })
        ));
        assert!(select_delta_from_gamma(1.0, 1.0).is_err());
    }

    #[test]
    fn zero_delta_is_flagged() {
        let conv = convexify(&decoupled(2, 1.0, 1.0), 0.0).unwrap();
        assert!(conv.semidefinite);
    }

    #[test]
    fn shift_of_scalar_instance() {
        let qdp = decoupled(2, 3.0, 1.0);
        let s = shifted_problem(&qdp, 1.0);
        assert_eq!(s.stage(0).q, m(2.0));
        assert_eq!(s.terminal_q(), &m(2.0));
        assert_eq!(shifted_problem(&qdp, 0.0), qdp);
    }

    #[test]
    fn singular_and_indefinite_rtilde_detected() {
        assert!(matches!(
            convexify(&decoupled(2, 1.0, 0.0), 0.1),
            Err(Error::NonInvertibleRtilde { stage: 1, .. })
        ));
        assert!(matches!(
            convexify(&decoupled(2, 1.0, -1.0), 0.1),
            Err(Error::NotPositiveDefinite { stage: 1, .. })
        ));
        assert!(convexify(&decoupled(2, 1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn delta_warning_only_at_or_above_gamma() {
        assert!(delta_warning(1.0, 0.9).is_none());
        assert!(delta_warning(1.0, 1.0).is_some());
    }
}
