//! Least-squares fit of Malus-law fringes, `y = A·cos²(π(θ − φ)/P) + C`.
//!
//! Angles are in degrees. The period `P` is 180° unless the free-period
//! variant is requested. Parameters start from the exact linear solution in
//! `cos`/`sin` of the fixed-period model, then Levenberg–Marquardt refines
//! them with an analytic Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_PERIOD: f64 = 180.0;
const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitOptions {
    pub free_period: bool,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { free_period: false, max_iterations: MAX_ITERATIONS }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StdErrors {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    pub period: f64,
    pub visibility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub amplitude: f64,
    /// Degrees, in `[0, period)`.
    pub phase: f64,
    pub offset: f64,
    pub period: f64,
    /// `A / (A + 2C)`, i.e. `(max − min)/(max + min)` of the fitted curve.
    pub visibility: f64,
    pub stderr: StdErrors,
    /// `√Σ r²` at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn eval(&self, theta: f64) -> f64 {
        model(&[self.amplitude, self.phase, self.offset, self.period], theta)
    }

    /// Visibility no larger than one plus three standard errors.
    pub fn visibility_plausible(&self) -> bool {
        self.visibility >= -1e-12 && self.visibility <= 1.0 + 3.0 * self.stderr.visibility + 1e-9
    }
}

fn model(p: &[f64; 4], theta: f64) -> f64 {
    let u = std::f64::consts::PI * (theta - p[1]) / p[3];
    p[0] * u.cos().powi(2) + p[2]
}

/// Rows: d/dA, d/dφ, d/dC, d/dP.
fn gradient(p: &[f64; 4], theta: f64) -> [f64; 4] {
    let k = std::f64::consts::PI / p[3];
    let u = k * (theta - p[1]);
    let s2 = (2.0 * u).sin();
    [u.cos().powi(2), p[0] * s2 * k, 1.0, p[0] * s2 * u / p[3]]
}

/// Exact least-squares fit of the linearized fixed-period model.
fn linear_start(theta: &[f64], y: &[f64], period: f64) -> Result<[f64; 4]> {
    let w = 2.0 * std::f64::consts::PI / period;
    let m = theta.len();
    let x = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => 1.0,
        1 => (w * theta[i]).cos(),
        _ => (w * theta[i]).sin(),
    });
    let yv = DVector::from_column_slice(y);
    let beta = (x.transpose() * &x)
        .try_inverse()
        .ok_or_else(|| Error::Config("fringe angles do not determine a sinusoid".into()))?
        * x.transpose()
        * yv;
    let amp = 2.0 * beta[1].hypot(beta[2]);
    let phase = beta[2].atan2(beta[1]) / w;
    Ok([amp, phase, beta[0] - amp / 2.0, period])
}

fn rss(p: &[f64; 4], theta: &[f64], y: &[f64]) -> f64 {
    theta.iter().zip(y).map(|(&t, &v)| (v - model(p, t)).powi(2)).sum()
}

/// Fits `y(θ)`; needs at least one more point than free parameters.
pub fn fit_fringe(theta: &[f64], y: &[f64], options: FitOptions) -> Result<FitResult> {
    if theta.len() != y.len() {
        return Err(Error::Config(format!("{} angles but {} values", theta.len(), y.len())));
    }
    let np = if options.free_period { 4 } else { 3 };
    let m = theta.len();
    if m <= np {
        return Err(Error::Config(format!("fit needs more than {np} points, got {m}")));
    }
    if theta.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Config("fringe data contain non-finite values".into()));
    }

    let mut p = linear_start(theta, y, DEFAULT_PERIOD)?;
    let mut cost = rss(&p, theta, y);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    while iterations < options.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&p, theta, y, np);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for i in 0..np {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..np {
                trial[i] += step[i];
            }
            let c = rss(&trial, theta, y);
            if c.is_finite() && c <= cost {
                let gain = cost - c;
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if gain <= 1e-15 * cost.max(1e-30 * scale) || step.norm() < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No damped step lowers the cost: we sit at a minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if p[0] < 0.0 {
        p[0] = -p[0];
        p[1] += p[3] / 2.0;
        p[2] -= p[0];
    }
    p[1] = p[1].rem_euclid(p[3]);

    let (jtj, _) = normal_equations(&p, theta, y, np);
    let sigma2 = cost / (m - np) as f64;
    let cov = jtj.try_inverse().map(|inv| inv * sigma2);
    let var = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0));
    let (a, c) = (p[0], p[2]);
    let denom = a + 2.0 * c;
    let visibility = a / denom;
    let dv = [2.0 * c / (denom * denom), -2.0 * a / (denom * denom)];
    let var_v = cov.as_ref().map_or(f64::NAN, |cv| {
        (dv[0] * dv[0] * cv[(0, 0)] + 2.0 * dv[0] * dv[1] * cv[(0, 2)] + dv[1] * dv[1] * cv[(2, 2)]).max(0.0)
    });
    Ok(FitResult {
        amplitude: a,
        phase: p[1],
        offset: c,
        period: p[3],
        visibility,
        stderr: StdErrors {
            amplitude: var(0).sqrt(),
            phase: var(1).sqrt(),
            offset: var(2).sqrt(),
            period: if np == 4 { var(3).sqrt() } else { 0.0 },
            visibility: var_v.sqrt(),
        },
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}

fn normal_equations(p: &[f64; 4], theta: &[f64], y: &[f64], np: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut jtj = DMatrix::zeros(np, np);
    let mut jtr = DVector::zeros(np);
    for (&t, &v) in theta.iter().zip(y) {
        let g = gradient(p, t);
        let r = v - model(p, t);
        for i in 0..np {
            jtr[i] += g[i] * r;
            for j in 0..np {
                jtj[(i, j)] += g[i] * g[j];
            }
        }
    }
    (jtj, jtr)
}

/// `points` evenly spaced angles from `start` to `stop` inclusive.
pub fn angle_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points).map(|i| start + (stop - start) * i as f64 / (points - 1) as f64).collect(),
    }
}
