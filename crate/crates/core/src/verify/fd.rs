//! Central finite-difference primitives.

use crate::linalg::{symmetric_part, Mat, Vector};

/// Step for first differences at coordinate value `v`.
pub fn first_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

/// Step for second differences of function values. Roundoff in a value-based
/// second difference scales like `eps / h^2`, so this uses a larger step.
pub fn second_step(v: f64) -> f64 {
    1e-4 * (1.0 + v.abs())
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F: Fn(&Vector) -> f64>(f: F, x: &Vector) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = first_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector function (rows are output components).
pub fn jacobian<F: Fn(&Vector) -> Vector>(f: F, x: &Vector) -> Mat {
    let m = f(x).len();
    let mut jac = Mat::zeros(m, x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = first_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Hessian from central differences of an analytic gradient.
pub fn hessian_from_gradient<F: Fn(&Vector) -> Vector>(grad: F, x: &Vector) -> Mat {
    symmetric_part(&jacobian(grad, x))
}

/// Hessian from second differences of function values.
pub fn hessian_from_values<F: Fn(&Vector) -> f64>(f: F, x: &Vector) -> Mat {
    let n = x.len();
    let mut h = Mat::zeros(n, n);
    let mut xp = x.clone();
    let f0 = f(x);
    for i in 0..n {
        let hi = second_step(x[i]);
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = second_step(x[j]);
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}
