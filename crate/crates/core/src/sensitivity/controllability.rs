use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Mat};
use crate::model::QdpProblem;

/// Per-stage controllability indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityReport {
    pub lambda_c: f64,
    pub t_max: usize,
    /// Smallest admissible `t_k` per stage, `None` when no `t ≤ min(t_max, N-k)` works.
    pub t_k: Vec<Option<usize>>,
    /// `λ_min(Ξ Ξ^T)` at the accepted `t_k`, or the best value seen when none was accepted.
    pub min_eig: Vec<f64>,
    /// Largest `t_k` over the stages where one was found.
    pub t: usize,
    pub pass: bool,
}

/// For each stage `k`, the smallest `t` with
/// `λ_min(Ξ_{k,t} Ξ_{k,t}^T) ≥ λ_C`, where
/// `Ξ_{k,t} = [B_{k+t-1}, A_{k+t-1} B_{k+t-2}, ..., A_{k+t-1} ⋯ A_{k+1} B_k]`.
/// The Gramian is accumulated as `Γ_{t+1} = A_{k+t} Γ_t A_{k+t}^T + B_{k+t} B_{k+t}^T`.
pub fn controllability(qdp: &QdpProblem, lambda_c: f64, t_max: usize) -> Result<ControllabilityReport> {
    let n = qdp.horizon();
    if !(lambda_c > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_C must be positive, got {lambda_c}")));
    }
    if t_max == 0 || t_max > n {
        return Err(Error::InvalidArgument(format!(
            "t_max must lie in 1..={n}, got {t_max}"
        )));
    }
    let nx = qdp.dims().nx;
    let mut t_k = Vec::with_capacity(n);
    let mut min_eig = Vec::with_capacity(n);
    for k in 0..n {
        let mut gram = Mat::zeros(nx, nx);
        let mut found = None;
        let mut best = f64::NEG_INFINITY;
        for t in 1..=t_max.min(n - k) {
            let st = qdp.stage(k + t - 1);
            gram = &st.a * &gram * st.a.transpose() + &st.b * st.b.transpose();
            let e = min_eigenvalue(&gram);
            if e >= lambda_c {
                found = Some(t);
                best = e;
                break;
            }
            best = best.max(e);
        }
        t_k.push(found);
        min_eig.push(best);
    }
    let pass = t_k.iter().all(Option::is_some);
    let t = t_k.iter().flatten().copied().max().unwrap_or(0);
    Ok(ControllabilityReport {
        lambda_c,
        t_max,
        t_k,
        min_eig,
        t,
        pass,
    })
}
