#![allow(dead_code)]

use dpsens::linalg::{Mat, Vector};
use dpsens::models::{seeded_random_qdp, TrackingModel};
use dpsens::model::{split_stage as split, stack_stage as stack};
use dpsens::{Dims, NldpModel, PerturbationDirection, QdpProblem, Reference, Trajectory};
use rand::{Rng, SeedableRng};

use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Random SOSC instance with bounded sizes.
pub fn instance(seed: u64, max_horizon: usize, max_dim: usize) -> QdpProblem {
    seeded_random_qdp(seed, max_horizon, max_dim, 0.5).expect("random instance")
}

/// Direction with every block uniform in `[-1, 1]`.
pub fn random_direction(seed: u64, dims: &Dims) -> PerturbationDirection {
    let mut r = rng(seed);
    let flat = uniform_vec(&mut r, dims.n_reference());
    PerturbationDirection::from_flat(&flat, dims).unwrap()
}

pub fn rel_inf(a: &Vector, b: &Vector) -> f64 {
    let scale = b.amax();
    let d = (a - b).amax();
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Quadratic costs `z^T M_k z` in `z = (x, u, d)` with affine dynamics
/// `x' = A x + B u + C d`; the solution map is affine in `d`.
pub struct LinearQuadraticModel {
    pub dims: Dims,
    pub m: Vec<Mat>,
    pub terminal: Mat,
    pub jac: Vec<Mat>,
}

impl LinearQuadraticModel {
    pub fn random(seed: u64, horizon: usize, nx: usize, nu: usize, nd: usize) -> Self {
        let mut r = rng(seed);
        let w = nx + nu + nd;
        let m = (0..horizon)
            .map(|_| {
                let g = uniform(&mut r, w, w);
                let mut m = (&g + g.transpose()) * 0.25;
                for i in 0..nx + nu {
                    m[(i, i)] += 3.0;
                }
                m
            })
            .collect();
        let jac = (0..horizon).map(|_| uniform(&mut r, nx, w)).collect();
        Self {
            dims: Dims::new(horizon, nx, nu, nd).unwrap(),
            m,
            terminal: Mat::identity(nx, nx) * 2.0,
            jac,
        }
    }
}

impl NldpModel for LinearQuadraticModel {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn stage_cost(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> f64 {
        let z = stack(x, u, d);
        z.dot(&(&self.m[k] * &z))
    }
    fn terminal_cost(&self, x: &Vector) -> f64 {
        x.dot(&(&self.terminal * x))
    }
    fn dynamics(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        &self.jac[k] * stack(x, u, d)
    }
    fn stage_cost_gradient(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        &self.m[k] * stack(x, u, d) * 2.0
    }
    fn stage_cost_hessian(&self, k: usize, _x: &Vector, _u: &Vector, _d: &Vector) -> Mat {
        &self.m[k] * 2.0
    }
    fn terminal_cost_gradient(&self, x: &Vector) -> Vector {
        &self.terminal * x * 2.0
    }
    fn terminal_cost_hessian(&self, _x: &Vector) -> Mat {
        &self.terminal * 2.0
    }
    fn dynamics_jacobian(&self, k: usize, _x: &Vector, _u: &Vector, _d: &Vector) -> Mat {
        self.jac[k].clone()
    }
    fn dynamics_weighted_hessian(&self, _k: usize, _x: &Vector, _u: &Vector, _d: &Vector, _w: &Vector) -> Mat {
        let n = self.dims.nx + self.dims.nu + self.dims.nd;
        Mat::zeros(n, n)
    }
}

/// Cubic stage costs `½ z^T P z + (1/6) T(z, z, z)` and quadratic dynamics
/// `f_j(z) = J_j z + ½ z^T N_j z`, all with analytic derivatives.
pub struct CubicModel {
    pub dims: Dims,
    pub p: Vec<Mat>,
    /// `t[k][i]` is the symmetric slice `T(e_i, ·, ·)`.
    pub t: Vec<Vec<Mat>>,
    pub jac: Vec<Mat>,
    pub n: Vec<Vec<Mat>>,
    pub terminal: Mat,
    /// Adds this to the reported `S` block to emulate a faulty evaluator.
    pub s_fault: f64,
}

fn sym_tensor(r: &mut impl Rng, w: usize) -> Vec<Mat> {
    let mut raw = vec![vec![vec![0.0; w]; w]; w];
    for i in 0..w {
        for j in i..w {
            for l in j..w {
                let v: f64 = r.random_range(-0.5..=0.5);
                for (a, b, c) in [(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                    raw[a][b][c] = v;
                }
            }
        }
    }
    raw.into_iter()
        .map(|slice| Mat::from_fn(w, w, |a, b| slice[a][b]))
        .collect()
}

impl CubicModel {
    pub fn random(seed: u64, horizon: usize, nx: usize, nu: usize, nd: usize) -> Self {
        let mut r = rng(seed);
        let w = nx + nu + nd;
        let sym = |r: &mut ChaCha8Rng| {
            let g = uniform(r, w, w);
            (&g + g.transpose()) * 0.5
        };
        Self {
            dims: Dims::new(horizon, nx, nu, nd).unwrap(),
            p: (0..horizon).map(|_| sym(&mut r)).collect(),
            t: (0..horizon).map(|_| sym_tensor(&mut r, w)).collect(),
            jac: (0..horizon).map(|_| uniform(&mut r, nx, w)).collect(),
            n: (0..horizon)
                .map(|_| (0..nx).map(|_| sym(&mut r) * 0.3).collect())
                .collect(),
            terminal: sym(&mut r).view((0, 0), (nx, nx)).clone_owned(),
            s_fault: 0.0,
        }
    }

    fn t_contract(&self, k: usize, z: &Vector) -> Mat {
        let w = z.len();
        let mut out = Mat::zeros(w, w);
        for (i, slice) in self.t[k].iter().enumerate() {
            out += slice * z[i];
        }
        out
    }

    pub fn random_base(&self, seed: u64) -> dpsens::BasePoint {
        let mut r = rng(seed);
        let d = self.dims;
        dpsens::BasePoint {
            reference: Reference {
                initial: uniform_vec(&mut r, d.nx),
                stages: (0..d.horizon).map(|_| uniform_vec(&mut r, d.nd)).collect(),
            },
            primal: Trajectory {
                states: (0..=d.horizon).map(|_| uniform_vec(&mut r, d.nx)).collect(),
                controls: (0..d.horizon).map(|_| uniform_vec(&mut r, d.nu)).collect(),
            },
            multipliers: Some((0..=d.horizon).map(|_| uniform_vec(&mut r, d.nx)).collect()),
        }
    }
}

impl NldpModel for CubicModel {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn stage_cost(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> f64 {
        let z = stack(x, u, d);
        0.5 * z.dot(&(&self.p[k] * &z)) + z.dot(&(self.t_contract(k, &z) * &z)) / 6.0
    }
    fn terminal_cost(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.terminal * x)) + x.iter().map(|v| v.powi(3)).sum::<f64>() / 3.0
    }
    fn dynamics(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        let z = stack(x, u, d);
        let mut f = &self.jac[k] * &z;
        for (j, nj) in self.n[k].iter().enumerate() {
            f[j] += 0.5 * z.dot(&(nj * &z));
        }
        f
    }
    fn stage_cost_gradient(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        let z = stack(x, u, d);
        &self.p[k] * &z + self.t_contract(k, &z) * &z * 0.5
    }
    fn stage_cost_hessian(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Mat {
        let z = stack(x, u, d);
        let mut h = &self.p[k] + self.t_contract(k, &z);
        let nx = self.dims.nx;
        for i in 0..self.dims.nu {
            for j in 0..nx {
                h[(nx + i, j)] += self.s_fault;
                h[(j, nx + i)] += self.s_fault;
            }
        }
        h
    }
    fn terminal_cost_gradient(&self, x: &Vector) -> Vector {
        &self.terminal * x + x.map(|v| v * v)
    }
    fn terminal_cost_hessian(&self, x: &Vector) -> Mat {
        &self.terminal + Mat::from_diagonal(&x.map(|v| 2.0 * v))
    }
    fn dynamics_jacobian(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Mat {
        let z = stack(x, u, d);
        let mut j = self.jac[k].clone();
        for (r, nj) in self.n[k].iter().enumerate() {
            let row = (nj * &z).transpose();
            let cur = j.row(r) + row;
            j.set_row(r, &cur);
        }
        j
    }
    fn dynamics_weighted_hessian(&self, k: usize, _x: &Vector, _u: &Vector, _d: &Vector, w: &Vector) -> Mat {
        let n = self.dims.nx + self.dims.nu + self.dims.nd;
        let mut h = Mat::zeros(n, n);
        for (j, nj) in self.n[k].iter().enumerate() {
            h += nj * w[j];
        }
        h
    }
}

/// Same costs and dynamics as the wrapped model but with every derivative
/// left to the finite-difference defaults.
pub struct ValuesOnly<'a, M: NldpModel>(pub &'a M);

impl<M: NldpModel> NldpModel for ValuesOnly<'_, M> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn stage_cost(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> f64 {
        self.0.stage_cost(k, x, u, d)
    }
    fn terminal_cost(&self, x: &Vector) -> f64 {
        self.0.terminal_cost(x)
    }
    fn dynamics(&self, k: usize, x: &Vector, u: &Vector, d: &Vector) -> Vector {
        self.0.dynamics(k, x, u, d)
    }
}

/// Minimizer of the tracking model by eliminating the controls: each state
/// minimizes `mu1 (x - f(d_{k-1}) - d_{k-1})^2 - mu2 (x - d_k)^2` on its own.
pub fn tracking_elimination(model: &TrackingModel, d: &Reference) -> Trajectory {
    let n = model.horizon;
    let (m1, m2) = (model.mu1, model.mu2);
    let mut states = vec![Vector::zeros(1); n + 1];
    states[0] = d.initial.clone();
    let mut controls = vec![Vector::zeros(1); n];
    for k in 0..n {
        let dk = d.stages[k][0];
        let a = model.map.value(dk) + dk;
        let b = if k + 1 < n { d.stages[k + 1][0] } else { 0.0 };
        let x = (m1 * a - m2 * b) / (m1 - m2);
        states[k + 1] = Vector::from_element(1, x);
        controls[k] = Vector::from_element(1, x - model.map.value(dk));
    }
    Trajectory { states, controls }
}

pub fn split_stage(dims: &Dims, z: &Vector) -> (Vector, Vector, Vector) {
    split(dims, z)
}
