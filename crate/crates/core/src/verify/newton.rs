use serde::Serialize;

use crate::convexify::{convexify, select_delta_from_gamma};
use crate::error::{Error, Result};
use crate::linalg::{max_abs_vec, Mat, Vector};
use crate::model::nldp::{
    constraint_residual, cost_gradient, dynamics_jacobians, flatten_multipliers,
    least_squares_multipliers,
};
use crate::model::{assemble_qdp_from_nldp, BasePoint, Dims, NldpModel, QdpProblem, Reference, Stage, Trajectory};
use crate::nullspace::{jacobian_from_blocks, reduced_hessian_gamma};
use crate::riccati::{backward_pass, forward_solve};
use crate::sensitivity::PerturbationDirection;
use crate::verify::dense_kkt_solve;

/// Convergence threshold on both the Lagrangian gradient and the constraint residual.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;
/// Fraction of γ used to convexify step problems.
const STEP_FRACTION: f64 = 0.9;

/// Result of a Lagrange–Newton solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonResult {
    #[serde(skip)]
    pub trajectory: Trajectory,
    /// `(λ_{-1}, λ_0, ..., λ_{N-1})`.
    #[serde(skip)]
    pub multipliers: Vec<Vector>,
    pub iterations: usize,
    pub gradient_residual: f64,
    pub constraint_residual: f64,
}

fn residuals(model: &dyn NldpModel, d: &Reference, x: &Trajectory, lam: &[Vector]) -> Result<(f64, f64)> {
    let dims = model.dims();
    let jac = dynamics_jacobians(model, d, x)?;
    let g = jacobian_from_blocks(&dims, &jac);
    let grad = cost_gradient(model, d, x)? + g.transpose() * flatten_multipliers(lam);
    Ok((max_abs_vec(&grad), max_abs_vec(&constraint_residual(model, d, x))))
}

/// The step problem at an iterate as a QDP with scalar reference blocks equal
/// to one: `D_{k1}, D_{k2}` hold the cost gradient, `C_k` the dynamics defect
/// and `l_{-1} = d_{-1} - x_0`. The terminal gradient is folded into the last
/// stage through the last dynamics.
fn step_problem(
    model: &dyn NldpModel,
    d: &Reference,
    x: &Trajectory,
    lam: &[Vector],
) -> Result<(QdpProblem, PerturbationDirection, Vector)> {
    let dims = model.dims();
    let base = BasePoint {
        reference: d.clone(),
        primal: x.clone(),
        multipliers: Some(lam.to_vec()),
    };
    let lin = assemble_qdp_from_nldp(model, &base)?;
    let grad = cost_gradient(model, d, x)?;
    let defect = constraint_residual(model, d, x);
    let n = dims.horizon;
    let gn = grad.rows(dims.state_offset(n), dims.nx).clone_owned();
    let stages = lin
        .stages()
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let mut d1 = Mat::from_row_slice(1, dims.nx, grad.rows(dims.state_offset(k), dims.nx).as_slice());
            let mut d2 = Mat::from_row_slice(1, dims.nu, grad.rows(dims.control_offset(k), dims.nu).as_slice());
            if k + 1 == n {
                d1 += gn.transpose() * &st.a;
                d2 += gn.transpose() * &st.b;
            }
            let c = -defect.rows((k + 1) * dims.nx, dims.nx).clone_owned();
            Stage {
                d1,
                d2,
                c: Mat::from_column_slice(dims.nx, 1, c.as_slice()),
                ..st.clone()
            }
        })
        .collect();
    let step_dims = Dims { nd: 1, ..dims };
    let qdp = QdpProblem::new(step_dims, stages, lin.terminal_q().clone())?;
    let l = PerturbationDirection {
        initial: -defect.rows(0, dims.nx).clone_owned(),
        stages: vec![Vector::from_element(1, 1.0); n],
        source: None,
    };
    Ok((qdp, l, grad))
}

/// Solves the step problem, returning the step and the QDP whose Hessian
/// was actually used (it differs from the input only on the fallback path).
fn solve_step(qdp: &QdpProblem, l: &PerturbationDirection) -> Result<(Trajectory, QdpProblem)> {
    let gamma = reduced_hessian_gamma(qdp)?;
    if let Ok(delta) = select_delta_from_gamma(gamma, STEP_FRACTION) {
        let attempt = convexify(qdp, delta)
            .and_then(|conv| {
                let rs = backward_pass(conv.as_problem())?;
                forward_solve(&rs, conv.as_problem(), l)
            });
        if let Ok(step) = attempt {
            return Ok((step, qdp.clone()));
        }
    }
    // Not locally convex on the constraint kernel: regularize by a diagonal
    // shift and solve the saddle system directly.
    let shift = 1e-3 * (1.0 + qdp.max_block_norm());
    let stages = qdp
        .stages()
        .iter()
        .map(|st| Stage {
            q: &st.q + Mat::identity(st.q.nrows(), st.q.nrows()) * shift,
            r: &st.r + Mat::identity(st.r.nrows(), st.r.nrows()) * shift,
            ..st.clone()
        })
        .collect();
    let nx = qdp.dims().nx;
    let reg = QdpProblem::new(qdp.dims(), stages, qdp.terminal_q() + Mat::identity(nx, nx) * shift)?;
    let sol = dense_kkt_solve(&reg, l)?;
    Ok((sol.w, reg))
}

/// Multipliers of the step problem from its stationarity conditions, swept
/// backward from the terminal stage.
fn step_multipliers(qdp: &QdpProblem, step: &Trajectory, grad: &Vector) -> Vec<Vector> {
    let dims = qdp.dims();
    let n = dims.horizon;
    let mut lam = vec![Vector::zeros(dims.nx); n + 1];
    let gn = grad.rows(dims.state_offset(n), dims.nx);
    lam[n] = -(qdp.terminal_q() * &step.states[n] + gn);
    for k in (0..n).rev() {
        let st = qdp.stage(k);
        let gx = grad.rows(dims.state_offset(k), dims.nx);
        lam[k] = st.a.transpose() * &lam[k + 1]
            - (&st.q * &step.states[k] + st.s.transpose() * &step.controls[k] + gx);
    }
    lam
}

/// Full-step Lagrange–Newton iteration for the equality-constrained NLDP at
/// reference `d`, starting from `init`. At least one step is always taken.
pub fn newton_equality_solve(model: &dyn NldpModel, d: &Reference, init: &Trajectory) -> Result<NewtonResult> {
    let dims = model.dims();
    d.check_dims(&dims)?;
    init.check_dims(&dims)?;
    let mut x = init.clone();
    let (mut lam, _) = least_squares_multipliers(model, d, &x)?;
    let mut last = f64::INFINITY;
    for it in 1..=NEWTON_MAX_ITER {
        let (qdp, l, grad) = step_problem(model, d, &x, &lam)?;
        let (step, used) = solve_step(&qdp, &l)?;
        lam = step_multipliers(&used, &step, &grad);
        for (xs, ds) in x.states.iter_mut().zip(&step.states) {
            *xs += ds;
        }
        for (xu, du) in x.controls.iter_mut().zip(&step.controls) {
            *xu += du;
        }
        let (gr, cr) = residuals(model, d, &x, &lam)?;
        last = gr.max(cr);
        if !last.is_finite() {
            break;
        }
        if gr <= NEWTON_TOL && cr <= NEWTON_TOL {
            return Ok(NewtonResult {
                trajectory: x,
                multipliers: lam,
                iterations: it,
                gradient_residual: gr,
                constraint_residual: cr,
            });
        }
    }
    Err(Error::SolverDiverged {
        iterations: NEWTON_MAX_ITER,
        residual: last,
    })
}
