use serde::Serialize;

use crate::error::{Error, Result};

use super::Source;

/// Default numerical floor below which norms are excluded from fits.
pub const DECAY_FLOOR: f64 = 1e-12;

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when the data have no spread in `y`.
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope x + intercept`; needs two distinct `x` values.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::InsufficientData(format!("{n} points for a line fit")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Fitted geometric decay `norm_k ≈ exp(intercept) · rho^{|k - i|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rho: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log(norm_k)` against the distance `|k - i|` over stages whose norm
/// exceeds `floor`. Requires at least three such stages on one side of `i`.
pub fn fit_decay_rate(norms: &[f64], source: Source, floor: f64) -> Result<DecayFit> {
    let i = source.index();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let (mut below, mut above) = (0, 0);
    for (k, &v) in norms.iter().enumerate() {
        if v > floor && v.is_finite() {
            let k = k as i64;
            x.push((k - i).unsigned_abs() as f64);
            y.push(v.ln());
            if k < i {
                below += 1;
            } else if k > i {
                above += 1;
            }
        }
    }
    if below < 3 && above < 3 {
        return Err(Error::InsufficientData(format!(
            "{below} stages before and {above} after the source exceed the floor {floor}"
        )));
    }
    let line = fit_line(&x, &y)?;
    Ok(DecayFit {
        rho: line.slope.exp(),
        intercept: line.intercept,
        r_squared: line.r_squared,
        points: line.points,
    })
}
