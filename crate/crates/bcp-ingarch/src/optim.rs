//! Minimal BFGS minimizer with backtracking line search.
//!
//! The estimation layer supplies objectives with analytic gradients, so a
//! compact quasi-Newton loop is all that is needed here.

use nalgebra::{DMatrix, DVector};

pub struct Options {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { grad_tol: 1e-4, step_tol: 1e-11, max_iter: 500 }
    }
}

pub struct Solution {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`. `f` returns the value and gradient;
/// non-finite values are treated as out-of-bounds by the line search.
pub fn bfgs<F>(x0: DVector<f64>, f: F, opts: &Options) -> Solution
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = f(&x);
    let mut h = DMatrix::<f64>::identity(n, n); // inverse Hessian approximation
    let mut converged = gx.amax() <= opts.grad_tol;
    let mut iterations = 0;

    if fx.is_finite() && !converged {
        for iter in 0..opts.max_iter {
            iterations = iter + 1;
            let dir = -(&h * &gx);
            let slope = gx.dot(&dir);
            let (dir, slope) = if slope < 0.0 {
                (dir, slope)
            } else {
                // Reset to steepest descent if curvature information went bad.
                h = DMatrix::identity(n, n);
                let d = -gx.clone();
                let s = -gx.dot(&gx);
                (d, s)
            };

            // Backtracking Armijo search.
            let mut alpha = 1.0f64;
            let mut found = None;
            for _ in 0..60 {
                let xn = &x + alpha * &dir;
                let (fn_, gn) = f(&xn);
                if fn_.is_finite() && fn_ <= fx + 1e-4 * alpha * slope {
                    found = Some((xn, fn_, gn));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((xn, fn_, gn)) = found else {
                break; // line search failed; report best point seen
            };

            let s = &xn - &x;
            let yv = &gn - &gx;
            let sy = s.dot(&yv);
            if sy > 1e-12 {
                // Standard BFGS inverse update.
                let rho = 1.0 / sy;
                let hy = &h * &yv;
                let yhy = yv.dot(&hy);
                h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho
                    + &s * s.transpose() * (rho * rho * (sy + yhy));
            }

            let step_small = s.amax() <= opts.step_tol * (1.0 + x.amax());
            x = xn;
            fx = fn_;
            gx = gn;

            if gx.amax() <= opts.grad_tol {
                converged = true;
                break;
            }
            if step_small {
                break;
            }
        }
    }

    Solution { grad_inf_norm: gx.amax(), x, f: fx, iterations, converged }
}
