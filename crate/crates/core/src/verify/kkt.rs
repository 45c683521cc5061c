use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs_vec, Mat, Vector};
use crate::model::{QdpProblem, Trajectory};
use crate::nullspace::assemble_constraints;
use crate::sensitivity::PerturbationDirection;

/// Pivot magnitude, relative to the largest pivot, below which the saddle
/// matrix is declared singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-13;

/// Solution of the saddle-point system of a QDP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktSolution {
    #[serde(skip)]
    pub w: Trajectory,
    /// Multipliers in constraint order `(λ_{-1}; λ_0; ...; λ_{N-1})`.
    #[serde(skip)]
    pub multipliers: Vector,
    /// `‖2 H w + 2 D^T l + G^T λ‖∞`.
    pub stationarity: f64,
    /// `‖G w - y‖∞`.
    pub feasibility: f64,
}

/// Solves `[[2H, G^T], [G, 0]] [w; λ] = [-2 D^T l; y]` by dense LU with
/// partial pivoting.
pub fn dense_kkt_solve(qdp: &QdpProblem, l: &PerturbationDirection) -> Result<KktSolution> {
    let dims = qdp.dims();
    let cs = assemble_constraints(qdp, l)?;
    let h = qdp.dense_hessian();
    let dl = qdp.lifted_linear_term(l)?;
    let (nz, nc) = (dims.n_primal(), dims.n_constraints());

    let mut kkt = Mat::zeros(nz + nc, nz + nc);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&(&h * 2.0));
    kkt.view_mut((0, nz), (nz, nc)).copy_from(&cs.g.transpose());
    kkt.view_mut((nz, 0), (nc, nz)).copy_from(&cs.g);
    let mut rhs = Vector::zeros(nz + nc);
    rhs.rows_mut(0, nz).copy_from(&(&dl * -2.0));
    rhs.rows_mut(nz, nc).copy_from(&cs.y);

    let lu = kkt.lu();
    let diag = lu.u().diagonal();
    let largest = max_abs_vec(&diag);
    let smallest = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(smallest > SINGULAR_PIVOT_TOL * largest) {
        return Err(Error::SingularKkt);
    }
    let sol = lu.solve(&rhs).ok_or(Error::SingularKkt)?;
    let w = sol.rows(0, nz).clone_owned();
    let lam = sol.rows(nz, nc).clone_owned();

    let stationarity = max_abs_vec(&(&h * &w * 2.0 + &dl * 2.0 + cs.g.transpose() * &lam));
    let feasibility = max_abs_vec(&(&cs.g * &w - &cs.y));
    Ok(KktSolution {
        w: Trajectory::from_stacked(&w, &dims)?,
        multipliers: lam,
        stationarity,
        feasibility,
    })
}
