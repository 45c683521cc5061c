use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, max_abs_vec, Mat, Vector};
use crate::model::{Dims, QdpProblem, Stage, Trajectory};
use crate::nullspace::jacobian_from_blocks;
use crate::sensitivity::PerturbationDirection;
use crate::verify::fd;

/// Multiplier stationarity residual accepted when multipliers are recovered.
pub const MULTIPLIER_TOL: f64 = 1e-6;

/// A nonlinear dynamic program
///
/// ```text
/// min  sum_k g_k(x_k, u_k, d_k) + g_N(x_N)
/// s.t. x_{k+1} = f_k(x_k, u_k, d_k),   x_0 = d_{-1}
/// ```
///
/// Derivative methods are taken with respect to the stacked stage vector
/// `z = (x, u, d)` and default to central finite differences; models with
/// analytic derivatives should override them.
pub trait NldpModel: Sync {
    fn dims(&self) -> Dims;

    fn stage_cost(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> f64;

    fn terminal_cost(&self, x: &Vector) -> f64;

    fn dynamics(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector;

    /// Gradient of `g_k` with respect to `(x, u, d)`.
    fn stage_cost_gradient(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        let dims = self.dims();
        fd::gradient(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                self.stage_cost(k, &x, &u, &d)
            },
            &stack_stage(x, u, d),
        )
    }

    /// Hessian of `g_k` with respect to `(x, u, d)`.
    fn stage_cost_hessian(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Mat {
        let dims = self.dims();
        fd::hessian_from_values(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                self.stage_cost(k, &x, &u, &d)
            },
            &stack_stage(x, u, d),
        )
    }

    fn terminal_cost_gradient(&self, x: &Vector) -> Vector {
        fd::gradient(|z| self.terminal_cost(z), x)
    }

    fn terminal_cost_hessian(&self, x: &Vector) -> Mat {
        fd::hessian_from_values(|z| self.terminal_cost(z), x)
    }

    /// Jacobian `[A_k B_k C_k]` of `f_k`, shape nx × (nx + nu + nd).
    fn dynamics_jacobian(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Mat {
        let dims = self.dims();
        fd::jacobian(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                self.dynamics(k, &x, &u, &d)
            },
            &stack_stage(x, u, d),
        )
    }

    /// Hessian of `weights^T f_k` with respect to `(x, u, d)`.
    fn dynamics_weighted_hessian(
        &self,
        k: usize,
        x: &Vector,
        u: &Vector,
        d: &Vector,
        weights: &Vector,
    ) -> Mat {
        let dims = self.dims();
        fd::hessian_from_values(
            |z| {
                let (x, u, d) = split_stage(&dims, z);
                weights.dot(&self.dynamics(k, &x, &u, &d))
            },
            &stack_stage(x, u, d),
        )
    }
}

pub fn stack_stage(x: &Vector, u: &Vector, d: &Vector) -> Vector {
    Vector::from_iterator(
        x.len() + u.len() + d.len(),
        x.iter().chain(u.iter()).chain(d.iter()).copied(),
    )
}

pub fn split_stage(dims: &Dims, z: &Vector) -> (Vector, Vector, Vector) {
    (
        z.rows(0, dims.nx).clone_owned(),
        z.rows(dims.nx, dims.nu).clone_owned(),
        z.rows(dims.nx + dims.nu, dims.nd).clone_owned(),
    )
}

/// Reference parameter `d = (d_{-1}; d_0; ...; d_{N-1})`, where `d_{-1}` is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub initial: Vector,
    pub stages: Vec<Vector>,
}

impl Reference {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            initial: Vector::zeros(dims.nx),
            stages: vec![Vector::zeros(dims.nd); dims.horizon],
        }
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        if self.initial.len() != dims.nx
            || self.stages.len() != dims.horizon
            || self.stages.iter().any(|s| s.len() != dims.nd)
        {
            return Err(Error::Shape(format!("reference does not match dims {dims:?}")));
        }
        Ok(())
    }

    /// The point `d + eps * l` on the perturbation path.
    pub fn perturbed(&self, l: &PerturbationDirection, eps: f64) -> Self {
        Self {
            initial: &self.initial + &l.initial * eps,
            stages: self
                .stages
                .iter()
                .zip(&l.stages)
                .map(|(d, dl)| d + dl * eps)
                .collect(),
        }
    }
}

/// Base primal-dual point at which an NLDP is linearized.
///
/// `multipliers[0]` is `λ_{-1}` (initial-state constraint) and
/// `multipliers[k + 1]` is `λ_k` (dynamics of stage k).
#[derive(Debug, Clone, PartialEq)]
pub struct BasePoint {
    pub reference: Reference,
    pub primal: Trajectory,
    pub multipliers: Option<Vec<Vector>>,
}

impl BasePoint {
    fn check_dims(&self, dims: &Dims) -> Result<()> {
        self.reference.check_dims(dims)?;
        self.primal.check_dims(dims)?;
        if let Some(lam) = &self.multipliers {
            if lam.len() != dims.horizon + 1 || lam.iter().any(|v| v.len() != dims.nx) {
                return Err(Error::Shape("multipliers do not match dims".into()));
            }
        }
        Ok(())
    }
}

fn check_shape(what: &str, k: usize, m: &Mat, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Shape(format!(
            "{what} at stage {k} is {:?}, expected {shape:?}",
            m.shape()
        )));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite(format!("{what} at stage {k}")));
    }
    Ok(())
}

/// Dynamics Jacobians `(A_k, B_k, C_k)` at every stage of `primal`.
pub(crate) fn dynamics_jacobians(
    model: &dyn NldpModel,
    reference: &Reference,
    primal: &Trajectory,
) -> Result<Vec<(Mat, Mat, Mat)>> {
    let dims = model.dims();
    let width = dims.nx + dims.nu + dims.nd;
    (0..dims.horizon)
        .map(|k| {
            let j = model.dynamics_jacobian(
                k,
                &primal.states[k],
                &primal.controls[k],
                &reference.stages[k],
            );
            check_shape("dynamics Jacobian", k, &j, (dims.nx, width))?;
            Ok((
                j.columns(0, dims.nx).clone_owned(),
                j.columns(dims.nx, dims.nu).clone_owned(),
                j.columns(dims.nx + dims.nu, dims.nd).clone_owned(),
            ))
        })
        .collect()
}

/// Stage-ordered gradient of the total cost with respect to `(x, u)`.
pub(crate) fn cost_gradient(
    model: &dyn NldpModel,
    reference: &Reference,
    primal: &Trajectory,
) -> Result<Vector> {
    let dims = model.dims();
    let mut g = Vector::zeros(dims.n_primal());
    for k in 0..dims.horizon {
        let gk = model.stage_cost_gradient(
            k,
            &primal.states[k],
            &primal.controls[k],
            &reference.stages[k],
        );
        if gk.len() != dims.nx + dims.nu + dims.nd || !gk.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape(format!("stage cost gradient at stage {k}")));
        }
        g.rows_mut(dims.state_offset(k), dims.nx + dims.nu)
            .copy_from(&gk.rows(0, dims.nx + dims.nu));
    }
    let gn = model.terminal_cost_gradient(&primal.states[dims.horizon]);
    if gn.len() != dims.nx || !gn.iter().all(|v| v.is_finite()) {
        return Err(Error::Shape("terminal cost gradient".into()));
    }
    g.rows_mut(dims.state_offset(dims.horizon), dims.nx)
        .copy_from(&gn);
    Ok(g)
}

/// Constraint residual `(x_0 - d_{-1}; x_1 - f_0; ...; x_N - f_{N-1})`.
pub(crate) fn constraint_residual(
    model: &dyn NldpModel,
    reference: &Reference,
    primal: &Trajectory,
) -> Vector {
    let dims = model.dims();
    let mut c = Vector::zeros(dims.n_constraints());
    c.rows_mut(0, dims.nx)
        .copy_from(&(&primal.states[0] - &reference.initial));
    for k in 0..dims.horizon {
        let f = model.dynamics(
            k,
            &primal.states[k],
            &primal.controls[k],
            &reference.stages[k],
        );
        c.rows_mut((k + 1) * dims.nx, dims.nx)
            .copy_from(&(&primal.states[k + 1] - f));
    }
    c
}

/// Flattens multipliers `(λ_{-1}; λ_0; ...; λ_{N-1})`.
pub(crate) fn flatten_multipliers(lam: &[Vector]) -> Vector {
    Vector::from_iterator(
        lam.iter().map(|v| v.len()).sum(),
        lam.iter().flat_map(|v| v.iter().copied()),
    )
}

pub(crate) fn split_multipliers(v: &Vector, dims: &Dims) -> Vec<Vector> {
    (0..=dims.horizon)
        .map(|k| v.rows(k * dims.nx, dims.nx).clone_owned())
        .collect()
}

/// Least-squares multipliers for `∇g + G^T λ = 0` and the residual `‖∇g + G^T λ‖∞`.
pub(crate) fn least_squares_multipliers(
    model: &dyn NldpModel,
    reference: &Reference,
    primal: &Trajectory,
) -> Result<(Vec<Vector>, f64)> {
    let dims = model.dims();
    let jac = dynamics_jacobians(model, reference, primal)?;
    let gt = jacobian_from_blocks(&dims, &jac).transpose();
    let grad = cost_gradient(model, reference, primal)?;
    let lam = SVD::new(gt.clone(), true, true)
        .solve(&(-&grad), 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let residual = max_abs_vec(&(&gt * &lam + &grad));
    Ok((split_multipliers(&lam, &dims), residual))
}

/// Recovers multipliers by least squares on `∇g + G^T λ = 0` at the base point.
pub fn recover_multipliers(model: &dyn NldpModel, base: &BasePoint) -> Result<Vec<Vector>> {
    base.check_dims(&model.dims())?;
    let (lam, residual) = least_squares_multipliers(model, &base.reference, &base.primal)?;
    if residual > MULTIPLIER_TOL {
        return Err(Error::MultiplierResidual(residual));
    }
    Ok(lam)
}

/// Linearizes the NLDP at `base` into QDP data: Lagrangian Hessian blocks
/// (exact second derivatives, no one-half factor) and dynamics Jacobians.
pub fn assemble_qdp_from_nldp(model: &dyn NldpModel, base: &BasePoint) -> Result<QdpProblem> {
    let dims = model.dims();
    dims.validate()?;
    base.check_dims(&dims)?;
    let lam = match &base.multipliers {
        Some(l) => l.clone(),
        None => recover_multipliers(model, base)?,
    };
    let jac = dynamics_jacobians(model, &base.reference, &base.primal)?;
    let Dims { nx, nu, nd, .. } = dims;
    let width = nx + nu + nd;
    let mut stages = Vec::with_capacity(dims.horizon);
    for (k, (a, b, c)) in jac.into_iter().enumerate() {
        let (x, u, d) = (
            &base.primal.states[k],
            &base.primal.controls[k],
            &base.reference.stages[k],
        );
        let hg = model.stage_cost_hessian(k, x, u, d);
        check_shape("stage cost Hessian", k, &hg, (width, width))?;
        let hf = model.dynamics_weighted_hessian(k, x, u, d, &lam[k + 1]);
        check_shape("dynamics Hessian", k, &hf, (width, width))?;
        let h = hg - hf;
        stages.push(Stage {
            q: h.view((0, 0), (nx, nx)).clone_owned(),
            r: h.view((nx, nx), (nu, nu)).clone_owned(),
            s: h.view((nx, 0), (nu, nx)).clone_owned(),
            d1: h.view((nx + nu, 0), (nd, nx)).clone_owned(),
            d2: h.view((nx + nu, nx), (nd, nu)).clone_owned(),
            a,
            b,
            c,
        });
    }
    let qn = model.terminal_cost_hessian(&base.primal.states[dims.horizon]);
    check_shape("terminal cost Hessian", dims.horizon, &qn, (nx, nx))?;
    QdpProblem::new(dims, stages, qn)
}
