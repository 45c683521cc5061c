//! Constraint Jacobian of the QDP, an orthonormal basis of its kernel, and
//! the reduced-Hessian lower bound γ.

use crate::error::Result;
use crate::linalg::{kernel_basis, min_eigenvalue, Mat, Vector};
use crate::model::{Dims, QdpProblem};
use crate::sensitivity::PerturbationDirection;

/// Pivot threshold, relative to the largest entry of G, below which G is
/// declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Linear constraints `G w = y` of the QDP for a direction `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub g: Mat,
    pub y: Vector,
}

/// Orthonormal kernel basis `Z` of the constraint Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceBasis {
    pub z: Mat,
    /// Smallest pivot of the rank-revealing factorization.
    pub min_pivot: f64,
}

/// Staircase Jacobian from per-stage `(A_k, B_k, ..)` blocks: block row `-1`
/// is `[I 0 ...]`, block row `k` is `-A_k, -B_k, I` on `(p_k, q_k, p_{k+1})`.
pub(crate) fn jacobian_from_blocks<T>(dims: &Dims, blocks: &[(Mat, Mat, T)]) -> Mat {
    let Dims { nx, nu, .. } = *dims;
    let mut g = Mat::zeros(dims.n_constraints(), dims.n_primal());
    g.view_mut((0, 0), (nx, nx)).fill_with_identity();
    for (k, (a, b, _)) in blocks.iter().enumerate() {
        let row = (k + 1) * nx;
        g.view_mut((row, dims.state_offset(k)), (nx, nx))
            .copy_from(&(-a));
        g.view_mut((row, dims.control_offset(k)), (nx, nu))
            .copy_from(&(-b));
        g.view_mut((row, dims.state_offset(k + 1)), (nx, nx))
            .fill_with_identity();
    }
    g
}

/// Right-hand side `y = (l_{-1}; C_0 l_0; ...; C_{N-1} l_{N-1})`.
pub fn constraint_rhs(qdp: &QdpProblem, l: &PerturbationDirection) -> Result<Vector> {
    let dims = qdp.dims();
    l.check_dims(&dims)?;
    let mut y = Vector::zeros(dims.n_constraints());
    y.rows_mut(0, dims.nx).copy_from(&l.initial);
    for (k, st) in qdp.stages().iter().enumerate() {
        y.rows_mut((k + 1) * dims.nx, dims.nx)
            .copy_from(&(&st.c * &l.stages[k]));
    }
    Ok(y)
}

/// Constraint Jacobian alone (independent of the direction).
pub fn constraint_jacobian(qdp: &QdpProblem) -> Mat {
    let blocks: Vec<(Mat, Mat, ())> = qdp
        .stages()
        .iter()
        .map(|st| (st.a.clone(), st.b.clone(), ()))
        .collect();
    jacobian_from_blocks(&qdp.dims(), &blocks)
}

pub fn assemble_constraints(qdp: &QdpProblem, l: &PerturbationDirection) -> Result<ConstraintSystem> {
    Ok(ConstraintSystem {
        g: constraint_jacobian(qdp),
        y: constraint_rhs(qdp, l)?,
    })
}

/// Orthonormal kernel basis via Householder QR of `G^T` with column pivoting.
pub fn nullspace_basis(cs: &ConstraintSystem) -> Result<NullspaceBasis> {
    let (z, min_pivot) = kernel_basis(&cs.g, RANK_TOL)?;
    Ok(NullspaceBasis { z, min_pivot })
}

/// Reduced Hessian `Z^T H Z` with `H = diag(H_0, ..., H_{N-1}, Q_N)`.
pub fn reduced_hessian(qdp: &QdpProblem) -> Result<Mat> {
    let (z, _) = kernel_basis(&constraint_jacobian(qdp), RANK_TOL)?;
    let h = qdp.dense_hessian();
    Ok(z.transpose() * h * z)
}

/// Smallest eigenvalue of the reduced Hessian. A nonpositive value means the
/// second-order sufficient condition fails.
pub fn reduced_hessian_gamma(qdp: &QdpProblem) -> Result<f64> {
    Ok(min_eigenvalue(&reduced_hessian(qdp)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::Stage;
    use crate::sensitivity::{unit_direction, Source};

    fn scalar_qdp(n: usize, q: f64, r: f64, a: f64, b: f64) -> QdpProblem {
        let m = |v: f64| Mat::from_element(1, 1, v);
        let stage = Stage {
            q: m(q),
            r: m(r),
            s: m(0.0),
            d1: m(0.0),
            d2: m(0.0),
            a: m(a),
            b: m(b),
            c: m(1.0),
        };
        QdpProblem::new(Dims::new(n, 1, 1, 1).unwrap(), vec![stage; n], m(q)).unwrap()
    }

    #[test]
    fn one_stage_jacobian() {
        let qdp = scalar_qdp(1, 1.0, 1.0, 1.0, 1.0);
        let l = PerturbationDirection::zeros(&qdp.dims());
        let cs = assemble_constraints(&qdp, &l).unwrap();
        let expect = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, -1.0, 1.0]);
        assert_eq!(cs.g, expect);
        assert_eq!(cs.y, Vector::zeros(2));
    }

    #[test]
    fn initial_direction_rhs() {
        let qdp = scalar_qdp(3, 1.0, 1.0, 1.0, 1.0);
        let l = unit_direction(&qdp.dims(), Source::Initial, 0).unwrap();
        let y = constraint_rhs(&qdp, &l).unwrap();
        assert_eq!(y, Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn one_stage_kernel() {
        let qdp = scalar_qdp(1, 1.0, 1.0, 1.0, 1.0);
        let cs = assemble_constraints(&qdp, &PerturbationDirection::zeros(&qdp.dims())).unwrap();
        let nb = nullspace_basis(&cs).unwrap();
        let z = nb.z.column(0);
        let s = 1.0 / 2f64.sqrt();
        let sign = z[1].signum();
        assert!((z[0]).abs() < 1e-15);
        assert!((z[1] * sign - s).abs() < 1e-15);
        assert!((z[2] * sign - s).abs() < 1e-15);
    }

    #[test]
    fn identity_hessian_gives_unit_gamma() {
        let qdp = scalar_qdp(6, 1.0, 1.0, 0.7, -1.3);
        assert!((reduced_hessian_gamma(&qdp).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_residuals() {
        let qdp = scalar_qdp(8, 1.0, 1.0, 1.2, 0.4);
        let cs = assemble_constraints(&qdp, &PerturbationDirection::zeros(&qdp.dims())).unwrap();
        let z = nullspace_basis(&cs).unwrap().z;
        assert_eq!(z.ncols(), 8);
        assert!(max_abs(&(&cs.g * &z)) <= 1e-10);
        assert!(max_abs(&(z.transpose() * &z - Mat::identity(8, 8))) <= 1e-10);
    }
}
