//! Backward Riccati recursion, forward reconstruction of the optimal
//! trajectory, cost-to-go evaluation and the closed-form state sensitivity.

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_eigenvalue, op_norm, spd_inverse, symmetric_part, Mat, Vector};
use crate::model::{QdpProblem, Trajectory};
use crate::sensitivity::PerturbationDirection;

/// Smallest admissible eigenvalue of `W_k`.
pub const PD_TOL: f64 = 1e-12;

/// Riccati quantities: cost-to-go matrices `K_0..K_N`, and for `k < N`
/// `W_k = R_k + B_k^T K_{k+1} B_k`, feedback `P_k`, closed loop
/// `E_k = A_k + B_k P_k` and `O_k = B_k W_k^{-1} B_k^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub k: Vec<Mat>,
    pub w: Vec<Mat>,
    pub w_inv: Vec<Mat>,
    pub p: Vec<Mat>,
    pub e: Vec<Mat>,
    pub o: Vec<Mat>,
    /// Largest entry of `K_k - E_k^T K_{k+1} E_k - [I P_k^T] H_k [I; P_k]` over k.
    pub identity_residual: f64,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.w.len()
    }

    /// Ordered product `E_n ⋯ E_m`; the identity when `n < m`.
    pub fn product(&self, m: usize, n: usize) -> Mat {
        let nx = self.k[0].nrows();
        let mut out = Mat::identity(nx, nx);
        if n >= m {
            for e in &self.e[m..=n] {
                out = e * out;
            }
        }
        out
    }

    /// Same as [`product`](Self::product) with signed upper index, so that
    /// `n = m - 1` (possibly `-1`) yields the identity.
    fn product_signed(&self, m: usize, n: i64) -> Mat {
        if n < m as i64 {
            let nx = self.k[0].nrows();
            Mat::identity(nx, nx)
        } else {
            self.product(m, n as usize)
        }
    }
}

/// Backward pass: `K_N = Q_N`,
/// `P_k = -W_k^{-1}(B_k^T K_{k+1} A_k + S_k)`,
/// `K_k = Q_k + A_k^T K_{k+1} A_k - (B_k^T K_{k+1} A_k + S_k)^T W_k^{-1} (B_k^T K_{k+1} A_k + S_k)`.
pub fn backward_pass(qdp: &QdpProblem) -> Result<RiccatiSolution> {
    let dims = qdp.dims();
    let n = dims.horizon;
    let mut k_mats = vec![Mat::zeros(dims.nx, dims.nx); n + 1];
    k_mats[n] = qdp.terminal_q().clone();
    let mut w = vec![Mat::zeros(0, 0); n];
    let mut w_inv = w.clone();
    let mut p = w.clone();
    let mut e = w.clone();
    let mut o = w.clone();
    let mut identity_residual: f64 = 0.0;
    let eye = Mat::identity(dims.nx, dims.nx);

    for k in (0..n).rev() {
        let st = qdp.stage(k);
        let kn = &k_mats[k + 1];
        let kb = kn * &st.b;
        let wk = symmetric_part(&(&st.r + st.b.transpose() * &kb));
        let min_eig = min_eigenvalue(&wk);
        if !(min_eig > PD_TOL) {
            return Err(Error::IndefiniteW { stage: k, min_eig });
        }
        let wi = spd_inverse(&wk).ok_or(Error::IndefiniteW { stage: k, min_eig })?;
        let g = kb.transpose() * &st.a + &st.s;
        let pk = -(&wi * &g);
        let kk = symmetric_part(&(&st.q + st.a.transpose() * kn * &st.a - g.transpose() * &wi * &g));
        let ek = &st.a + &st.b * &pk;
        let ok = &st.b * &wi * st.b.transpose();

        let mut ip = Mat::zeros(dims.nx + dims.nu, dims.nx);
        ip.view_mut((0, 0), (dims.nx, dims.nx)).copy_from(&eye);
        ip.view_mut((dims.nx, 0), (dims.nu, dims.nx)).copy_from(&pk);
        let resid = &kk - ek.transpose() * kn * &ek - ip.transpose() * st.hessian() * &ip;
        identity_residual = identity_residual.max(max_abs(&resid));

        k_mats[k] = kk;
        w[k] = wk;
        w_inv[k] = wi;
        p[k] = pk;
        e[k] = ek;
        o[k] = ok;
    }
    Ok(RiccatiSolution {
        k: k_mats,
        w,
        w_inv,
        p,
        e,
        o,
        identity_residual,
    })
}

/// Affine part of the cost-to-go, computed by one backward sweep.
struct LinearSweep {
    /// `s_0..s_N`: the cost-to-go is `p^T K_k p - 2 s_k^T p + T_k`.
    s: Vec<Vector>,
    /// `a_k` so that `q_k = P_k p_k - W_k^{-1} a_k`.
    a: Vec<Vector>,
    /// Constants `T_0..T_N`.
    t: Vec<f64>,
}

fn linear_sweep(rs: &RiccatiSolution, qdp: &QdpProblem, l: &PerturbationDirection) -> Result<LinearSweep> {
    let dims = qdp.dims();
    l.check_dims(&dims)?;
    if rs.horizon() != dims.horizon {
        return Err(Error::Shape("Riccati solution does not match the problem".into()));
    }
    let n = dims.horizon;
    let mut s = vec![Vector::zeros(dims.nx); n + 1];
    let mut a = vec![Vector::zeros(dims.nu); n];
    let mut t = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let st = qdp.stage(k);
        let kn = &rs.k[k + 1];
        let c = &st.c * &l.stages[k];
        let kc = kn * &c;
        let ak = st.d2.transpose() * &l.stages[k] + st.b.transpose() * (&kc - &s[k + 1]);
        s[k] = -(st.d1.transpose() * &l.stages[k]) - st.a.transpose() * (&kc - &s[k + 1])
            - rs.p[k].transpose() * &ak;
        t[k] = t[k + 1] + c.dot(&kc) - 2.0 * s[k + 1].dot(&c) - ak.dot(&(&rs.w_inv[k] * &ak));
        a[k] = ak;
    }
    Ok(LinearSweep { s, a, t })
}

/// Optimal trajectory from `p_0 = l_{-1}` with `q_k = P_k p_k - W_k^{-1} a_k`,
/// where `a_k = (D_{k2} + C_k^T K_{k+1} B_k)^T l_k - B_k^T s_{k+1}` collects the
/// accumulated influence of all later perturbations.
pub fn forward_solve(rs: &RiccatiSolution, qdp: &QdpProblem, l: &PerturbationDirection) -> Result<Trajectory> {
    forward_solve_from(rs, qdp, l, 0, &l.initial)
}

/// Optimal tail from state `p_start` at stage `start`. Entries before `start`
/// are left at zero.
pub fn forward_solve_from(
    rs: &RiccatiSolution,
    qdp: &QdpProblem,
    l: &PerturbationDirection,
    start: usize,
    p_start: &Vector,
) -> Result<Trajectory> {
    let dims = qdp.dims();
    if start > dims.horizon {
        return Err(Error::IndexOutOfRange(format!(
            "stage {start} beyond horizon {}",
            dims.horizon
        )));
    }
    if p_start.len() != dims.nx {
        return Err(Error::Shape("start state length".into()));
    }
    let sweep = linear_sweep(rs, qdp, l)?;
    let mut traj = Trajectory::zeros(&dims);
    traj.states[start] = p_start.clone();
    for k in start..dims.horizon {
        let st = qdp.stage(k);
        let q = &rs.p[k] * &traj.states[k] - &rs.w_inv[k] * &sweep.a[k];
        traj.states[k + 1] = &st.a * &traj.states[k] + &st.b * &q + &st.c * &l.stages[k];
        traj.controls[k] = q;
    }
    Ok(traj)
}

/// Cost-to-go `J_k(p) = p^T K_k p - 2 s_k^T p + T_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGo {
    pub k: Mat,
    pub s: Vector,
    pub t: f64,
}

impl CostToGo {
    pub fn value(&self, p: &Vector) -> f64 {
        p.dot(&(&self.k * p)) - 2.0 * self.s.dot(p) + self.t
    }
}

pub fn cost_to_go_terms(
    rs: &RiccatiSolution,
    qdp: &QdpProblem,
    l: &PerturbationDirection,
    k: usize,
) -> Result<CostToGo> {
    let sweep = linear_sweep(rs, qdp, l)?;
    if k > qdp.horizon() {
        return Err(Error::IndexOutOfRange(format!("stage {k}")));
    }
    Ok(CostToGo {
        k: rs.k[k].clone(),
        s: sweep.s[k].clone(),
        t: sweep.t[k],
    })
}

/// Optimal tail objective from state `p` at stage `k`.
pub fn cost_to_go(
    rs: &RiccatiSolution,
    qdp: &QdpProblem,
    l: &PerturbationDirection,
    k: usize,
    p: &Vector,
) -> Result<f64> {
    if p.len() != qdp.dims().nx {
        return Err(Error::Shape("state length".into()));
    }
    Ok(cost_to_go_terms(rs, qdp, l, k)?.value(p))
}

/// Blocks `(U_i^k, F_i^k)` through which a perturbation `l_i` at stage `i`
/// reaches the state `p_k`: `p_k` receives `U_i^k l_i + F_i^k C_i l_i`.
pub fn closed_form_blocks(rs: &RiccatiSolution, qdp: &QdpProblem, i: usize) -> Result<Vec<(Mat, Mat)>> {
    let dims = qdp.dims();
    let n = dims.horizon;
    if i >= n {
        return Err(Error::IndexOutOfRange(format!("stage {i} beyond horizon {n}")));
    }
    let st = qdp.stage(i);
    // tail[s] = E_{i-1} ⋯ E_s for s ≤ i.
    let mut tail = vec![Mat::identity(dims.nx, dims.nx); i + 1];
    for s in (0..i).rev() {
        tail[s] = &tail[s + 1] * &rs.e[s];
    }
    let m_coeff = -(&st.d1 + &st.d2 * &rs.p[i]);
    let kn = &rs.k[i + 1];
    let eye = Mat::identity(dims.nx, dims.nx);

    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut u = Mat::zeros(dims.nx, dims.nd);
        let mut f = Mat::zeros(dims.nx, dims.nx);
        let upper = i.min(k);
        // lead = E_{k-1} ⋯ E_{s+1}, built while s decreases from k-1.
        let mut lead = Mat::identity(dims.nx, dims.nx);
        for s in (0..k).rev() {
            if s < upper {
                let m_is = &m_coeff * &tail[s + 1];
                let v_is = -(kn * &rs.e[i] * &tail[s + 1]);
                let lo = &lead * &rs.o[s];
                u += &lo * m_is.transpose();
                f += &lo * v_is.transpose();
            }
            lead = &lead * &rs.e[s];
        }
        if i < k {
            let lead_i = rs.product_signed(i + 1, k as i64 - 1);
            u -= &lead_i * &st.b * &rs.w_inv[i] * st.d2.transpose();
            f += &lead_i * (&eye - &rs.o[i] * kn);
        }
        out.push((u, f));
    }
    Ok(out)
}

/// States from the closed-form expression
/// `p_k = (E_{k-1} ⋯ E_0) l_{-1} + Σ_i (U_i^k + F_i^k C_i) l_i`,
/// materializing blocks only for stages where `l_i ≠ 0`.
pub fn closed_form_p(rs: &RiccatiSolution, qdp: &QdpProblem, l: &PerturbationDirection) -> Result<Vec<Vector>> {
    let dims = qdp.dims();
    l.check_dims(&dims)?;
    let n = dims.horizon;
    let mut p: Vec<Vector> = (0..=n)
        .map(|k| rs.product_signed(0, k as i64 - 1) * &l.initial)
        .collect();
    for i in 0..n {
        if l.stages[i].iter().all(|v| *v == 0.0) {
            continue;
        }
        let c = &qdp.stage(i).c * &l.stages[i];
        for (k, (u, f)) in closed_form_blocks(rs, qdp, i)?.into_iter().enumerate() {
            p[k] += u * &l.stages[i] + f * &c;
        }
    }
    Ok(p)
}

/// Operator norm of `E_j ⋯ E_i` for `0 ≤ i ≤ j ≤ N-1`.
pub fn closed_loop_product_norm(rs: &RiccatiSolution, i: usize, j: usize) -> Result<f64> {
    if i > j || j >= rs.horizon() {
        return Err(Error::IndexOutOfRange(format!(
            "need 0 <= i <= j < {}, got i = {i}, j = {j}",
            rs.horizon()
        )));
    }
    Ok(op_norm(&rs.product(i, j)))
}
