use serde::Serialize;

use crate::error::Result;
use crate::linalg::{max_abs, Mat};
use crate::model::nldp::{split_stage, stack_stage};
use crate::model::{recover_multipliers, BasePoint, NldpModel};
use crate::verify::fd;

/// Relative error above which a derivative block fails the check.
pub const HESSIAN_CHECK_TOL: f64 = 1e-5;

/// Error of one derivative block at one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub stage: usize,
    pub block: String,
    /// `‖analytic - fd‖max / max(1, ‖fd‖max)`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_error: f64,
    /// Block name and stage of the largest error.
    pub worst: Option<(String, usize)>,
    pub pass: bool,
}

fn rel_error(analytic: &Mat, fd: &Mat) -> f64 {
    max_abs(&(analytic - fd)) / max_abs(fd).max(1.0)
}

/// Compares the model's derivative evaluators against central differences
/// at `base`: Lagrangian Hessian blocks `Q, S, R, D1, D2` against differences
/// of the first derivatives, Jacobians `A, B, C` against differences of the
/// dynamics, and the terminal Hessian against differences of its gradient.
pub fn finite_diff_hessian_check(model: &dyn NldpModel, base: &BasePoint) -> Result<HessianCheckReport> {
    let dims = model.dims();
    let lam = match &base.multipliers {
        Some(l) => l.clone(),
        None => recover_multipliers(model, base)?,
    };
    let (nx, nu, nd) = (dims.nx, dims.nu, dims.nd);
    let mut blocks = Vec::new();
    for k in 0..dims.horizon {
        let (x, u, d) = (
            &base.primal.states[k],
            &base.primal.controls[k],
            &base.reference.stages[k],
        );
        let z = stack_stage(x, u, d);
        let weights = &lam[k + 1];

        let analytic_h = model.stage_cost_hessian(k, x, u, d) - model.dynamics_weighted_hessian(k, x, u, d, weights);
        let fd_h = fd::hessian_from_gradient(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                model.stage_cost_gradient(k, &x, &u, &d)
                    - model.dynamics_jacobian(k, &x, &u, &d).transpose() * weights
            },
            &z,
        );
        let analytic_j = model.dynamics_jacobian(k, x, u, d);
        let fd_j = fd::jacobian(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                model.dynamics(k, &x, &u, &d)
            },
            &z,
        );
        let views: [(&str, (usize, usize), (usize, usize), bool); 8] = [
            ("Q", (0, 0), (nx, nx), true),
            ("S", (nx, 0), (nu, nx), true),
            ("R", (nx, nx), (nu, nu), true),
            ("D1", (nx + nu, 0), (nd, nx), true),
            ("D2", (nx + nu, nx), (nd, nu), true),
            ("A", (0, 0), (nx, nx), false),
            ("B", (0, nx), (nx, nu), false),
            ("C", (0, nx + nu), (nx, nd), false),
        ];
        for (name, start, shape, hess) in views {
            let (a, f) = if hess { (&analytic_h, &fd_h) } else { (&analytic_j, &fd_j) };
            blocks.push(BlockError {
                stage: k,
                block: name.to_string(),
                error: rel_error(
                    &a.view(start, shape).clone_owned(),
                    &f.view(start, shape).clone_owned(),
                ),
            });
        }
    }
    let xn = &base.primal.states[dims.horizon];
    let fd_qn = fd::hessian_from_gradient(|x| model.terminal_cost_gradient(x), xn);
    blocks.push(BlockError {
        stage: dims.horizon,
        block: "Q_N".to_string(),
        error: rel_error(&model.terminal_cost_hessian(xn), &fd_qn),
    });

    let worst = blocks
        .iter()
        .max_by(|a, b| a.error.total_cmp(&b.error))
        .map(|b| (b.block.clone(), b.stage));
    let max_error = blocks.iter().map(|b| b.error).fold(0.0, f64::max);
    Ok(HessianCheckReport {
        blocks,
        max_error,
        worst,
        pass: max_error <= HESSIAN_CHECK_TOL,
    })
}
