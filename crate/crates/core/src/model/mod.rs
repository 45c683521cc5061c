//! Stagewise quadratic dynamic programs (QDPs), trajectories, and the
//! linearization of a nonlinear dynamic program into QDP data.

mod json;
pub(crate) mod nldp;

pub use json::{ConvexifiedQdpFile, DimsFile, QdpFile, StageFile};
pub use nldp::{
    assemble_qdp_from_nldp, recover_multipliers, split_stage, stack_stage, BasePoint, NldpModel, Reference, MULTIPLIER_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, symmetrize_checked, Mat, Vector};
use crate::sensitivity::PerturbationDirection;

/// Maximum entrywise asymmetry tolerated before a Hessian block is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Problem dimensions: horizon length and state/control/reference sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nd: usize,
}

impl Dims {
    pub fn new(horizon: usize, nx: usize, nu: usize, nd: usize) -> Result<Self> {
        let dims = Self {
            horizon,
            nx,
            nu,
            nd,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.nx == 0 || self.nu == 0 || self.nd == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of primal variables `(N+1) nx + N nu`.
    pub fn n_primal(&self) -> usize {
        (self.horizon + 1) * self.nx + self.horizon * self.nu
    }

    /// Number of equality constraints `(N+1) nx`.
    pub fn n_constraints(&self) -> usize {
        (self.horizon + 1) * self.nx
    }

    /// Length of the full reference vector `nx + N nd`.
    pub fn n_reference(&self) -> usize {
        self.nx + self.horizon * self.nd
    }

    /// Offset of `p_k` inside the stage-ordered stacked vector `w`.
    pub fn state_offset(&self, k: usize) -> usize {
        k * (self.nx + self.nu)
    }

    /// Offset of `q_k` inside `w`.
    pub fn control_offset(&self, k: usize) -> usize {
        k * (self.nx + self.nu) + self.nx
    }
}

/// Data of one stage: Hessian blocks of the Lagrangian and dynamics Jacobians.
///
/// Shapes: `q` nx×nx, `r` nu×nu, `s` nu×nx, `d1` nd×nx, `d2` nd×nu,
/// `a` nx×nx, `b` nx×nu, `c` nx×nd.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub q: Mat,
    pub r: Mat,
    pub s: Mat,
    pub d1: Mat,
    pub d2: Mat,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl Stage {
    /// The joint Hessian block `[[Q, S^T], [S, R]]`.
    pub fn hessian(&self) -> Mat {
        let nx = self.q.nrows();
        let nu = self.r.nrows();
        let mut h = Mat::zeros(nx + nu, nx + nu);
        h.view_mut((0, 0), (nx, nx)).copy_from(&self.q);
        h.view_mut((nx, nx), (nu, nu)).copy_from(&self.r);
        h.view_mut((nx, 0), (nu, nx)).copy_from(&self.s);
        h.view_mut((0, nx), (nx, nu)).copy_from(&self.s.transpose());
        h
    }

    fn validate(&self, k: usize, dims: &Dims) -> Result<()> {
        let Dims { nx, nu, nd, .. } = *dims;
        let expect = [
            ("Q", &self.q, (nx, nx)),
            ("R", &self.r, (nu, nu)),
            ("S", &self.s, (nu, nx)),
            ("D1", &self.d1, (nd, nx)),
            ("D2", &self.d2, (nd, nu)),
            ("A", &self.a, (nx, nx)),
            ("B", &self.b, (nx, nu)),
            ("C", &self.c, (nx, nd)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Shape(format!(
                    "stage {k} block {name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            if !all_finite(m) {
                return Err(Error::NonFinite(format!("stage {k} block {name}")));
            }
        }
        Ok(())
    }
}

/// A quadratic dynamic program
///
/// ```text
/// min  sum_k [p_k; q_k; l_k]^T [[Q, S^T, D1^T], [S, R, D2^T], [D1, D2, 0]] [p_k; q_k; l_k]
///      + p_N^T Q_N p_N
/// s.t. p_{k+1} = A_k p_k + B_k q_k + C_k l_k,   p_0 = l_{-1}
/// ```
///
/// The quadratic blocks are the exact Lagrangian Hessian (no one-half factor).
#[derive(Debug, Clone, PartialEq)]
pub struct QdpProblem {
    dims: Dims,
    stages: Vec<Stage>,
    terminal_q: Mat,
}

impl QdpProblem {
    /// Validates shapes and finiteness and symmetrizes `Q_k`, `R_k`, `Q_N`.
    pub fn new(dims: Dims, stages: Vec<Stage>, terminal_q: Mat) -> Result<Self> {
        dims.validate()?;
        if stages.len() != dims.horizon {
            return Err(Error::Shape(format!(
                "expected {} stages, got {}",
                dims.horizon,
                stages.len()
            )));
        }
        if terminal_q.shape() != (dims.nx, dims.nx) {
            return Err(Error::Shape(format!(
                "terminal Q is {:?}, expected {:?}",
                terminal_q.shape(),
                (dims.nx, dims.nx)
            )));
        }
        if !all_finite(&terminal_q) {
            return Err(Error::NonFinite("terminal Q".into()));
        }
        let mut stages = stages;
        for (k, st) in stages.iter_mut().enumerate() {
            st.validate(k, &dims)?;
            st.q = symmetrize_checked(&st.q, &format!("stage {k} Q"), SYMMETRY_TOL)?;
            st.r = symmetrize_checked(&st.r, &format!("stage {k} R"), SYMMETRY_TOL)?;
        }
        let terminal_q = symmetrize_checked(&terminal_q, "terminal Q", SYMMETRY_TOL)?;
        Ok(Self {
            dims,
            stages,
            terminal_q,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, k: usize) -> &Stage {
        &self.stages[k]
    }

    pub fn terminal_q(&self) -> &Mat {
        &self.terminal_q
    }

    /// Block-diagonal Hessian `H = diag(H_0, ..., H_{N-1}, Q_N)` in stage order.
    pub fn dense_hessian(&self) -> Mat {
        let dims = self.dims;
        let n = dims.n_primal();
        let mut h = Mat::zeros(n, n);
        let blk = dims.nx + dims.nu;
        for (k, st) in self.stages.iter().enumerate() {
            h.view_mut((k * blk, k * blk), (blk, blk))
                .copy_from(&st.hessian());
        }
        let off = dims.state_offset(dims.horizon);
        h.view_mut((off, off), (dims.nx, dims.nx))
            .copy_from(&self.terminal_q);
        h
    }

    /// The linear coefficient `D^T l` lifted onto the primal coordinates, so
    /// the objective is `w^T H w + 2 (D^T l)^T w`. The `l_{-1}` block does not
    /// enter the objective.
    pub fn lifted_linear_term(&self, l: &PerturbationDirection) -> Result<Vector> {
        l.check_dims(&self.dims)?;
        let dims = self.dims;
        let mut out = Vector::zeros(dims.n_primal());
        for (k, st) in self.stages.iter().enumerate() {
            let lk = &l.stages[k];
            out.rows_mut(dims.state_offset(k), dims.nx)
                .copy_from(&(st.d1.transpose() * lk));
            out.rows_mut(dims.control_offset(k), dims.nu)
                .copy_from(&(st.d2.transpose() * lk));
        }
        Ok(out)
    }

    /// Every block norm bounded by the uniform data constant: the maximum
    /// operator norm over `Q, R, S, D1, D2, A, B, C` and `Q_N`.
    pub fn max_block_norm(&self) -> f64 {
        let mut m = crate::linalg::op_norm(&self.terminal_q);
        for st in &self.stages {
            for blk in [&st.q, &st.r, &st.s, &st.d1, &st.d2, &st.a, &st.b, &st.c] {
                m = m.max(crate::linalg::op_norm(blk));
            }
        }
        m
    }

    /// Returns a copy with every `Q_k` (terminal included) replaced by `Q_k - shift I`.
    pub fn with_shifted_q(&self, shift: f64) -> Self {
        let nx = self.dims.nx;
        let eye = Mat::identity(nx, nx);
        let stages = self
            .stages
            .iter()
            .map(|st| Stage {
                q: &st.q - &eye * shift,
                ..st.clone()
            })
            .collect();
        Self {
            dims: self.dims,
            stages,
            terminal_q: &self.terminal_q - &eye * shift,
        }
    }

    pub(crate) fn from_parts_unchecked(dims: Dims, stages: Vec<Stage>, terminal_q: Mat) -> Self {
        Self {
            dims,
            stages,
            terminal_q,
        }
    }
}

/// State and control trajectory `p_0..p_N`, `q_0..q_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
}

impl Trajectory {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            states: vec![Vector::zeros(dims.nx); dims.horizon + 1],
            controls: vec![Vector::zeros(dims.nu); dims.horizon],
        }
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        if self.states.len() != dims.horizon + 1 || self.controls.len() != dims.horizon {
            return Err(Error::Shape(format!(
                "trajectory has {} states and {} controls for horizon {}",
                self.states.len(),
                self.controls.len(),
                dims.horizon
            )));
        }
        if self.states.iter().any(|p| p.len() != dims.nx)
            || self.controls.iter().any(|q| q.len() != dims.nu)
        {
            return Err(Error::Shape("trajectory vector length mismatch".into()));
        }
        Ok(())
    }

    /// Stage-ordered stacking `w = (p_0; q_0; ...; p_{N-1}; q_{N-1}; p_N)`.
    pub fn stacked(&self) -> Vector {
        let mut out = Vec::new();
        for (p, q) in self.states.iter().zip(&self.controls) {
            out.extend(p.iter());
            out.extend(q.iter());
        }
        if let Some(last) = self.states.last() {
            out.extend(last.iter());
        }
        Vector::from_vec(out)
    }

    pub fn from_stacked(w: &Vector, dims: &Dims) -> Result<Self> {
        if w.len() != dims.n_primal() {
            return Err(Error::Shape(format!(
                "stacked vector has length {}, expected {}",
                w.len(),
                dims.n_primal()
            )));
        }
        let states = (0..=dims.horizon)
            .map(|k| w.rows(dims.state_offset(k), dims.nx).clone_owned())
            .collect();
        let controls = (0..dims.horizon)
            .map(|k| w.rows(dims.control_offset(k), dims.nu).clone_owned())
            .collect();
        Ok(Self { states, controls })
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(|p| p.norm()).collect()
    }

    pub fn control_norms(&self) -> Vec<f64> {
        self.controls.iter().map(|q| q.norm()).collect()
    }

    /// Largest absolute entry over all states and controls.
    pub fn max_abs(&self) -> f64 {
        self.states
            .iter()
            .chain(&self.controls)
            .map(crate::linalg::max_abs_vec)
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            states: self
                .states
                .iter()
                .zip(&other.states)
                .map(|(a, b)| a - b)
                .collect(),
            controls: self
                .controls
                .iter()
                .zip(&other.controls)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            states: self.states.iter().map(|p| p * factor).collect(),
            controls: self.controls.iter().map(|q| q * factor).collect(),
        }
    }
}

/// Value of one stage term `[p;q;l]^T [[Q,S^T,D1^T],[S,R,D2^T],[D1,D2,0]] [p;q;l]`.
pub(crate) fn stage_value(st: &Stage, p: &Vector, q: &Vector, l: &Vector) -> f64 {
    p.dot(&(&st.q * p))
        + 2.0 * q.dot(&(&st.s * p))
        + q.dot(&(&st.r * q))
        + 2.0 * l.dot(&(&st.d1 * p))
        + 2.0 * l.dot(&(&st.d2 * q))
}

/// Objective of the QDP at trajectory `w` for direction `l`.
pub fn eval_qdp_objective(qdp: &QdpProblem, l: &PerturbationDirection, w: &Trajectory) -> Result<f64> {
    eval_tail_objective(qdp, l, w, 0)
}

/// Objective restricted to stages `k >= from` plus the terminal term.
pub fn eval_tail_objective(
    qdp: &QdpProblem,
    l: &PerturbationDirection,
    w: &Trajectory,
    from: usize,
) -> Result<f64> {
    let dims = qdp.dims();
    l.check_dims(&dims)?;
    w.check_dims(&dims)?;
    if from > dims.horizon {
        return Err(Error::IndexOutOfRange(format!(
            "stage {from} beyond horizon {}",
            dims.horizon
        )));
    }
    let mut total = 0.0;
    for k in from..dims.horizon {
        total += stage_value(qdp.stage(k), &w.states[k], &w.controls[k], &l.stages[k]);
    }
    let pn = &w.states[dims.horizon];
    total += pn.dot(&(qdp.terminal_q() * pn));
    Ok(total)
}

/// Forward simulation of `p_{k+1} = A_k p_k + B_k q_k + C_k l_k` from `p_0 = l_{-1}`.
pub fn rollout_dynamics(
    qdp: &QdpProblem,
    l: &PerturbationDirection,
    controls: &[Vector],
) -> Result<Trajectory> {
    let dims = qdp.dims();
    l.check_dims(&dims)?;
    if controls.len() != dims.horizon || controls.iter().any(|q| q.len() != dims.nu) {
        return Err(Error::Shape(format!(
            "expected {} controls of length {}",
            dims.horizon, dims.nu
        )));
    }
    let mut states = Vec::with_capacity(dims.horizon + 1);
    states.push(l.initial.clone());
    for (k, st) in qdp.stages().iter().enumerate() {
        let next = &st.a * &states[k] + &st.b * &controls[k] + &st.c * &l.stages[k];
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}
