//! Small dense helpers shared by the stagewise algorithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = symmetric_part(m);
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    eigs
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty matrix).
pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Smallest eigenvalue in absolute value.
pub fn min_abs_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .into_iter()
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

/// Operator 2-norm, the square root of the largest eigenvalue of the Gram matrix.
pub fn op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

pub fn symmetric_part(m: &Mat) -> Mat {
    // Matching pairs are kept exactly; halving before adding avoids overflow.
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let (a, b) = (m[(i, j)], m[(j, i)]);
        if a == b {
            a
        } else {
            0.5 * a + 0.5 * b
        }
    })
}

/// Largest entrywise deviation from symmetry.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetrize `m` if its asymmetry is within `tol`, reject otherwise.
pub fn symmetrize_checked(m: &Mat, what: &str, tol: f64) -> Result<Mat> {
    let asym = asymmetry(m);
    if asym > tol {
        return Err(Error::Asymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    Ok(symmetric_part(m))
}

pub fn max_abs(m: &Mat) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    symmetric_part(m).cholesky().map(|c| c.inverse())
}

/// Orthonormal basis of the kernel of `g` (rows assumed independent), computed
/// from a Householder QR factorization of `g^T` with column pivoting. The
/// trailing columns of the full orthogonal factor span the kernel.
pub fn kernel_basis(g: &Mat, rank_tol: f64) -> Result<(Mat, f64)> {
    let (m, n) = (g.nrows(), g.ncols());
    if m > n {
        return Err(Error::Shape(format!(
            "constraint Jacobian has more rows ({m}) than columns ({n})"
        )));
    }
    let mut a = g.transpose(); // n x m
    let mut q = Mat::identity(n, n);
    let mut col_norms: Vec<f64> = (0..m).map(|j| a.column(j).norm_squared()).collect();
    let mut min_pivot = f64::INFINITY;
    let scale = max_abs(g).max(1.0);

    for j in 0..m {
        // Column pivoting on the remaining columns.
        let (piv, _) = col_norms[j..]
            .iter()
            .enumerate()
            .fold((j, f64::NEG_INFINITY), |best, (off, &v)| {
                if v > best.1 {
                    (j + off, v)
                } else {
                    best
                }
            });
        if piv != j {
            a.swap_columns(j, piv);
            col_norms.swap(j, piv);
        }

        let x = a.view((j, j), (n - j, 1)).clone_owned();
        let alpha = x.norm();
        min_pivot = min_pivot.min(alpha);
        if alpha <= rank_tol * scale {
            return Err(Error::RankDeficient { min_pivot: alpha });
        }
        let mut v = x.column(0).clone_owned();
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            // Apply H = I - 2 v v^T / (v^T v) to the trailing block of `a`.
            let mut block = a.view_mut((j, j), (n - j, m - j));
            let w = block.tr_mul(&v) * (2.0 / vnorm2);
            block -= &v * w.transpose();
            // Accumulate Q <- Q H.
            let mut qcols = q.view_mut((0, j), (n, n - j));
            let qv = &qcols * &v * (2.0 / vnorm2);
            qcols -= qv * v.transpose();
        }
        for (c, norm) in col_norms.iter_mut().enumerate().skip(j + 1) {
            *norm = a.view((j + 1, c), (n - j - 1, 1)).norm_squared();
        }
    }
    Ok((q.columns(m, n - m).clone_owned(), min_pivot))
}
