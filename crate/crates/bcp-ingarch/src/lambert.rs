//! Real branches of the Lambert W function by Halley iteration.

use crate::{Error, Result};

/// Branch selector for [`lambert_w`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Principal branch `W0`, defined for `x >= -1/e`.
    Principal,
    /// Lower branch `W-1`, defined for `-1/e <= x < 0`.
    Lower,
}

const INV_E: f64 = 1.0 / std::f64::consts::E;
const RESIDUAL_TOL: f64 = 1e-12;

/// Solve `w * exp(w) = x` on the requested real branch.
///
/// The residual satisfies `|w e^w - x| <= 1e-12 * max(1, |x|)`.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w: non-finite argument {x}")));
    }
    // Allow a hair of rounding slack at the branch point.
    if x < -INV_E - 1e-14 {
        return Err(Error::Domain(format!(
            "lambert_w: x = {x} below branch point -1/e"
        )));
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if (x + INV_E).abs() <= 1e-14 {
                return Ok(-1.0);
            }
            halley(x, w0_initial(x))
        }
        Branch::Lower => {
            if x >= 0.0 {
                return Err(Error::Domain(format!(
                    "lambert_w: lower branch requires x < 0, got {x}"
                )));
            }
            if (x + INV_E).abs() <= 1e-14 {
                return Ok(-1.0);
            }
            halley(x, wm1_initial(x))
        }
    }
}

fn w0_initial(x: f64) -> f64 {
    if x < -0.25 {
        // Series around the branch point: W0 = -1 + p - p^2/3 + ...
        let p = (2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0
    } else if x < 1.0 {
        // W0(x) ~ x for small |x|.
        x * (1.0 - x)
    } else {
        let l = x.ln();
        l - l.ln().max(0.0)
    }
}

fn wm1_initial(x: f64) -> f64 {
    if x < -0.25 {
        let p = (2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        -1.0 - p - p * p / 3.0
    } else {
        // For x in (-0.25, 0), W-1(x) = ln(-x) - ln(-ln(-x)) is a good start.
        let l = (-x).ln();
        l - (-l).ln()
    }
}

fn halley(x: f64, mut w: f64) -> Result<f64> {
    let tol = RESIDUAL_TOL * x.abs().max(1.0);
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            return Ok(w);
        }
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let step = f / denom;
        w -= step;
        // The lower branch must stay below -1, the principal above.
        if !w.is_finite() {
            break;
        }
    }
    let residual = w * w.exp() - x;
    if residual.abs() <= tol {
        Ok(w)
    } else {
        Err(Error::Domain(format!(
            "lambert_w failed to converge at x = {x} (residual {residual})"
        )))
    }
}
