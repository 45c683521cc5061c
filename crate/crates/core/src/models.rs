//! Built-in problem instances: the scalar nonconvex tracking problem with
//! exact derivatives, a tridiagonal nonconvex QDP family, and a seeded random
//! generator of nonconvex instances that satisfy the second-order condition.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{assemble_qdp_from_nldp, BasePoint, Dims, NldpModel, QdpProblem, Reference, Stage, Trajectory};
use crate::nullspace::reduced_hessian_gamma;

/// State map applied to the reference inside the tracking dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackingMap {
    /// `f(x) = x`.
    Linear,
    /// `f(x) = exp(x) - 1`.
    Exp,
}

impl TrackingMap {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            TrackingMap::Linear => x,
            TrackingMap::Exp => x.exp_m1(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            TrackingMap::Linear => 1.0,
            TrackingMap::Exp => x.exp(),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            TrackingMap::Linear => 0.0,
            TrackingMap::Exp => x.exp(),
        }
    }
}

/// Scalar tracking problem with a concave state penalty:
///
/// ```text
/// min  sum_k mu1 (u_k - d_k)^2 - mu2 (x_k - d_k)^2  - mu2 x_N^2
/// s.t. x_{k+1} = u_k + f(d_k),   x_0 = d_{-1}
/// ```
///
/// For `mu1 > mu2 > 0` and zero reference the unique minimizer is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingModel {
    pub horizon: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub map: TrackingMap,
}

impl TrackingModel {
    pub fn new(horizon: usize, mu1: f64, mu2: f64, map: TrackingMap) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(mu1 > mu2 && mu2 > 0.0) || !mu1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need mu1 > mu2 > 0, got mu1 = {mu1}, mu2 = {mu2}"
            )));
        }
        Ok(Self {
            horizon,
            mu1,
            mu2,
            map,
        })
    }

    /// Zero reference, zero trajectory and zero multipliers.
    pub fn base_point(&self) -> BasePoint {
        let dims = self.dims();
        BasePoint {
            reference: Reference::zeros(&dims),
            primal: Trajectory::zeros(&dims),
            multipliers: Some(vec![Vector::zeros(1); self.horizon + 1]),
        }
    }

    /// The QDP obtained by linearizing at [`base_point`](Self::base_point).
    pub fn qdp(&self) -> Result<QdpProblem> {
        assemble_qdp_from_nldp(self, &self.base_point())
    }
}

fn s(v: &Vector) -> f64 {
    v[0]
}

impl NldpModel for TrackingModel {
    fn dims(&self) -> Dims {
        Dims {
            horizon: self.horizon,
            nx: 1,
            nu: 1,
            nd: 1,
        }
    }

    fn stage_cost(&self, _k: usize, x: &Vector, u: &Vector, d: &Vector) -> f64 {
        self.mu1 * (s(u) - s(d)).powi(2) - self.mu2 * (s(x) - s(d)).powi(2)
    }

    fn terminal_cost(&self, x: &Vector) -> f64 {
        -self.mu2 * s(x).powi(2)
    }

    fn dynamics(&self, _k: usize, _x: &Vector, u: &Vector, d: &Vector) -> Vector {
        Vector::from_element(1, s(u) + self.map.value(s(d)))
    }

    fn stage_cost_gradient(&self, _k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        let (ex, eu) = (s(x) - s(d), s(u) - s(d));
        Vector::from_vec(vec![
            -2.0 * self.mu2 * ex,
            2.0 * self.mu1 * eu,
            -2.0 * self.mu1 * eu + 2.0 * self.mu2 * ex,
        ])
    }

    fn stage_cost_hessian(&self, _k: usize, _x: &Vector, _u: &Vector, _d: &Vector) -> Mat {
        let (m1, m2) = (2.0 * self.mu1, 2.0 * self.mu2);
        Mat::from_row_slice(3, 3, &[-m2, 0.0, m2, 0.0, m1, -m1, m2, -m1, m1 - m2])
    }

    fn terminal_cost_gradient(&self, x: &Vector) -> Vector {
        Vector::from_element(1, -2.0 * self.mu2 * s(x))
    }

    fn terminal_cost_hessian(&self, _x: &Vector) -> Mat {
        Mat::from_element(1, 1, -2.0 * self.mu2)
    }

    fn dynamics_jacobian(&self, _k: usize, _x: &Vector, _u: &Vector, d: &Vector) -> Mat {
        Mat::from_row_slice(1, 3, &[0.0, 1.0, self.map.derivative(s(d))])
    }

    fn dynamics_weighted_hessian(
        &self,
        _k: usize,
        _x: &Vector,
        _u: &Vector,
        d: &Vector,
        weights: &Vector,
    ) -> Mat {
        let mut h = Mat::zeros(3, 3);
        h[(2, 2)] = weights[0] * self.map.second_derivative(s(d));
        h
    }
}

/// Scalar QDP with `A_k = B_k = C_k = 1`, `S_k = 0`, `R_k = b_k` (possibly
/// negative) and `Q_k = a_k = 2|b_k| + 2|b_{k-1}| + 5 γ0` (with `b_{-1} = b_N = 0`).
///
/// With the banded kernel basis `Z̃` whose columns are `(q_{k-1}, p_k, q_k) = (1, 1, -1)`,
/// `Z̃^T H Z̃` is tridiagonal with diagonal `b_{k-1} + a_k + b_k` and off-diagonal
/// `-b_k`, so Gershgorin gives `Z̃^T H Z̃ ⪰ 5 γ0 I`. Since `Z̃^T Z̃ ⪯ 5 I` (diagonal 3,
/// off-diagonal -1), the orthonormal reduced Hessian is bounded below by `γ0`.
/// `D_{k1} = d1`, `D_{k2} = d2`.
pub fn tridiagonal_qdp(b: &[f64], gamma0: f64, d1: f64, d2: f64) -> Result<QdpProblem> {
    let n = b.len();
    let dims = Dims::new(n, 1, 1, 1)?;
    if !(gamma0 > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma0 must be positive, got {gamma0}")));
    }
    let bb = |k: i64| -> f64 {
        if k < 0 || k as usize >= n {
            0.0
        } else {
            b[k as usize]
        }
    };
    let a = |k: usize| 2.0 * bb(k as i64).abs() + 2.0 * bb(k as i64 - 1).abs() + 5.0 * gamma0;
    let m = |v: f64| Mat::from_element(1, 1, v);
    let stages = (0..n)
        .map(|k| Stage {
            q: m(a(k)),
            r: m(b[k]),
            s: m(0.0),
            d1: m(d1),
            d2: m(d2),
            a: m(1.0),
            b: m(1.0),
            c: m(1.0),
        })
        .collect();
    QdpProblem::new(dims, stages, m(a(n)))
}

/// Control weights alternating between `-1` and `0.5`, so half the stages
/// have a negative control Hessian.
pub fn alternating_weights(horizon: usize) -> Vec<f64> {
    (0..horizon).map(|k| if k % 2 == 0 { -1.0 } else { 0.5 }).collect()
}

/// Parameters of [`random_qdp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub dims: Dims,
    /// The state weight is doubled until the reduced-Hessian bound reaches this value.
    pub gamma_target: f64,
}

/// Draws dimensions with `2 ≤ N ≤ max_horizon` and `1 ≤ nx, nu, nd ≤ max_dim`.
pub fn random_dims(rng: &mut impl Rng, max_horizon: usize, max_dim: usize) -> Dims {
    Dims {
        horizon: rng.random_range(2..=max_horizon.max(2)),
        nx: rng.random_range(1..=max_dim),
        nu: rng.random_range(1..=max_dim),
        nd: rng.random_range(1..=max_dim),
    }
}

fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

fn sym_with_spectrum(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Mat {
    let q = uniform(rng, n, n).qr().q();
    let eig = Vector::from_fn(n, |_, _| rng.random_range(lo..=hi));
    &q * Mat::from_diagonal(&eig) * q.transpose()
}

const WEAK_CONTROL: f64 = 0.5;

/// Random nonconvex QDP satisfying the second-order condition.
///
/// `A, B, C, S, D1, D2` are uniform in `[-1, 1]`. Each `R_k` has eigenvalues
/// in `[-1, 2]` (typically indefinite) plus `2 Π_k`, where `Π_k` projects onto
/// the kernel of `B_k` and its right singular directions with singular value
/// below 1/2, so `R_k` is positive on directions that barely move the state
/// and a moderate state weight makes the reduced Hessian positive.
/// `Q_k = a I + E_k` with small symmetric noise `E_k`, and `a` doubles until
/// the reduced Hessian bound reaches the target.
pub fn random_qdp(rng: &mut impl Rng, spec: &RandomSpec) -> Result<QdpProblem> {
    let dims = spec.dims;
    dims.validate()?;
    let Dims { nx, nu, nd, horizon } = dims;
    let mut base = Vec::with_capacity(horizon);
    let mut noise = Vec::with_capacity(horizon + 1);
    for _ in 0..horizon {
        let b = uniform(rng, nx, nu);
        let svd = b.clone().svd(false, true);
        let vt = svd.v_t.expect("requested");
        // Projector onto controls that barely move the state: the kernel of
        // B plus right singular directions with singular value below 1/2.
        let mut proj = Mat::identity(nu, nu);
        for (sigma, row) in svd.singular_values.iter().zip(vt.row_iter()) {
            if *sigma >= WEAK_CONTROL {
                proj -= row.transpose() * row;
            }
        }
        let r = sym_with_spectrum(rng, nu, -1.0, 2.0) + proj * 2.0;
        base.push(Stage {
            q: Mat::zeros(nx, nx),
            r,
            s: uniform(rng, nu, nx),
            d1: uniform(rng, nd, nx),
            d2: uniform(rng, nd, nu),
            a: uniform(rng, nx, nx),
            b,
            c: uniform(rng, nx, nd),
        });
        noise.push(sym_with_spectrum(rng, nx, -0.5, 0.5));
    }
    noise.push(sym_with_spectrum(rng, nx, -0.5, 0.5));

    let eye = Mat::identity(nx, nx);
    let mut a = 1.0;
    for _ in 0..60 {
        let stages: Vec<Stage> = base
            .iter()
            .zip(&noise)
            .map(|(st, e)| Stage {
                q: &eye * a + e,
                ..st.clone()
            })
            .collect();
        let qdp = QdpProblem::new(dims, stages, &eye * a + &noise[horizon])?;
        if reduced_hessian_gamma(&qdp)? >= spec.gamma_target {
            return Ok(qdp);
        }
        a *= 2.0;
    }
    Err(Error::AssumptionFailed(
        "could not reach the requested reduced-Hessian bound".into(),
    ))
}

/// Seeded convenience wrapper around [`random_qdp`] with random dimensions.
pub fn seeded_random_qdp(seed: u64, max_horizon: usize, max_dim: usize, gamma_target: f64) -> Result<QdpProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = random_dims(&mut rng, max_horizon, max_dim);
    random_qdp(&mut rng, &RandomSpec { dims, gamma_target })
}
