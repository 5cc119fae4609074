//! The bivariate conditional Poisson (BCP) distribution.
//!
//! `Z1 ~ Poisson(lambda1)` and `Z2 | Z1 = z1 ~ Poisson(mu2 * exp(phi * z1))`
//! with `mu2 = lambda2 * exp(-lambda1 * (e^phi - 1))`, so that `lambda2` is
//! the marginal mean of `Z2`. `phi` is unrestricted and controls the sign
//! and strength of the correlation between the components.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::lambert::{lambert_w, Branch};
use crate::{poisson, Error, Result};

/// Exponent above which `exp` overflows f64.
const EXP_OVERFLOW: f64 = 709.0;

/// Parameters of a BCP distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcpParams {
    lambda1: f64,
    lambda2: f64,
    phi: f64,
}

impl BcpParams {
    pub fn new(lambda1: f64, lambda2: f64, phi: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !lambda1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda1 must be positive and finite, got {lambda1}"
            )));
        }
        if !(lambda2 > 0.0) || !lambda2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda2 must be positive and finite, got {lambda2}"
            )));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi must be finite, got {phi}")));
        }
        Ok(Self { lambda1, lambda2, phi })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Log of `mu2 = lambda2 * exp(-lambda1 (e^phi - 1))`.
    fn log_mu2(&self) -> f64 {
        self.lambda2.ln() - self.lambda1 * (self.phi.exp() - 1.0)
    }
}

/// Mean of `Z2 | Z1 = 0`: `mu2 = lambda2 * exp(-lambda1 (e^phi - 1))`.
pub fn mu2(p: &BcpParams) -> Result<f64> {
    let log_mu2 = p.log_mu2();
    if log_mu2 > EXP_OVERFLOW {
        return Err(Error::Overflow(format!(
            "mu2 overflows: log-scale exponent {log_mu2}"
        )));
    }
    let v = log_mu2.exp();
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Overflow(format!("mu2 not positive finite: {v}")));
    }
    Ok(v)
}

/// Joint log pmf at `(x, y)`.
///
/// All exponential terms are assembled on the log scale; if the term
/// `lambda2 * exp(-lambda1 (e^phi - 1) + phi x)` overflows the pmf has
/// underflowed to zero and `-inf` is returned.
pub fn log_pmf(x: u64, y: u64, p: &BcpParams) -> f64 {
    let xf = x as f64;
    let yf = y as f64;
    let em1 = p.phi.exp() - 1.0;
    let exponent = p.log_mu2() + p.phi * xf;
    if exponent > EXP_OVERFLOW {
        return f64::NEG_INFINITY;
    }
    let lp = xf * p.lambda1.ln() + yf * p.lambda2.ln()
        - ln_gamma(xf + 1.0)
        - ln_gamma(yf + 1.0)
        - p.lambda1 * (1.0 + yf * em1)
        - exponent.exp()
        + p.phi * xf * yf;
    debug_assert!(lp <= 1e-9, "pmf value above 1 at ({x}, {y}): {lp}");
    lp
}

/// Draw one `(z1, z2)` pair from the stochastic representation.
pub fn sample<R: Rng + ?Sized>(p: &BcpParams, rng: &mut R) -> Result<(u64, u64)> {
    let z1 = poisson::sample(rng, p.lambda1)?;
    let log_cond_mean = p.log_mu2() + p.phi * z1 as f64;
    if log_cond_mean > EXP_OVERFLOW {
        return Err(Error::SamplingOverflow {
            z1,
            mu2: p.log_mu2().exp(),
            phi: p.phi,
        });
    }
    let z2 = poisson::sample(rng, log_cond_mean.exp())?;
    Ok((z1, z2))
}

/// `cov(Z1, Z2) = lambda1 lambda2 (e^phi - 1)`.
pub fn covariance(p: &BcpParams) -> f64 {
    p.lambda1 * p.lambda2 * (p.phi.exp() - 1.0)
}

/// Correlation of `(Z1, Z2)`; tends to 0 as `|phi|` grows for fixed means,
/// and 0 is returned when the inner exponential overflows.
pub fn correlation(p: &BcpParams) -> f64 {
    let u = p.phi.exp() - 1.0;
    let expo = p.lambda1 * u * u;
    if expo > EXP_OVERFLOW {
        return 0.0;
    }
    u * (p.lambda1 * p.lambda2 / (1.0 + p.lambda2 * (expo.exp() - 1.0))).sqrt()
}

/// `Var(Z2) = lambda2 + lambda2^2 (exp(lambda1 (e^phi-1)^2) - 1)`;
/// `+inf` on overflow.
pub fn variance_z2(p: &BcpParams) -> f64 {
    let u = p.phi.exp() - 1.0;
    let expo = p.lambda1 * u * u;
    if expo > EXP_OVERFLOW {
        return f64::INFINITY;
    }
    p.lambda2 + p.lambda2 * p.lambda2 * (expo.exp() - 1.0)
}

/// A stationary point of the correlation as a function of `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub phi: f64,
    pub corr: f64,
}

/// Stationary points of `corr(phi)` for fixed means.
///
/// Solves `z e^z = e^{-1} (lambda2^{-1} - 1)` on the real Lambert branches
/// (`W0` always, `W-1` additionally when `lambda2 > 1`) and back-solves
/// `lambda1 (e^phi - 1)^2 = z + 1`. Candidate roots without a real `phi`
/// are dropped. The returned list is sorted by `phi`; classification as
/// maximum or minimum can be read from the sign of `corr`.
pub fn correlation_extrema(lambda1: f64, lambda2: f64) -> Result<Vec<Extremum>> {
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
        return Err(Error::InvalidParameter(
            "correlation_extrema requires positive means".into(),
        ));
    }
    let arg = (1.0 / lambda2 - 1.0) / std::f64::consts::E;
    let mut roots = vec![lambert_w(Branch::Principal, arg)?];
    if lambda2 > 1.0 {
        // arg in (-1/e, 0): the lower branch also has a real solution in z.
        if let Ok(z) = lambert_w(Branch::Lower, arg) {
            roots.push(z);
        }
    }

    let mut out = Vec::new();
    for z in roots {
        let s = (z + 1.0) / lambda1;
        if s < 0.0 {
            continue; // no real phi for this z
        }
        let r = s.sqrt();
        for factor in [1.0 + r, 1.0 - r] {
            if factor > 0.0 {
                let phi = factor.ln();
                let p = BcpParams::new(lambda1, lambda2, phi)?;
                out.push(Extremum { phi, corr: correlation(&p) });
            }
        }
    }
    out.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    out.dedup_by(|a, b| (a.phi - b.phi).abs() < 1e-12);
    Ok(out)
}

/// Joint mode of the distribution: the integer pair maximizing the pmf.
///
/// Uses the factorization `p(y1, y2) = Pois(y1; lambda1) Pois(y2; mu2 e^{phi y1})`:
/// for each `y1` in a tail-bounded window the best `y2` is the Poisson mode of
/// the conditional mean. Ties break to the lexicographically smallest pair.
pub fn joint_mode(p: &BcpParams) -> Result<(u64, u64)> {
    let max_y1 = (p.lambda1 + 12.0 * p.lambda1.sqrt() + 20.0).ceil() as u64;
    let mut best: Option<((u64, u64), f64)> = None;
    for y1 in 0..=max_y1 {
        // The conditional factor satisfies log Pois(y2; m) <= 0, so the
        // first margin alone bounds this y1's best value; skipping hopeless
        // y1 also avoids evaluating the pmf at astronomically large y2,
        // where float cancellation would corrupt the comparison.
        let bound = poisson::log_pmf(y1, p.lambda1);
        if matches!(best, Some((_, b)) if bound <= b + 1e-9) {
            continue;
        }
        let log_cond_mean = p.log_mu2() + p.phi * y1 as f64;
        if log_cond_mean > 43.0 {
            // Conditional mean beyond ~1e18: mode search leaves integer range.
            return Err(Error::Overflow(format!(
                "joint_mode: conditional mean overflows integer range at y1 = {y1}"
            )));
        }
        let m = log_cond_mean.exp();
        let y2 = poisson::mode(m);
        let lp = poisson::log_pmf(y1, p.lambda1) + poisson::log_pmf(y2, m);
        // Ties (up to rounding) keep the lexicographically smaller pair,
        // i.e. the earlier y1 since we scan in increasing order.
        match best {
            Some((_, b)) if lp <= b + 1e-9 => {}
            _ => best = Some(((y1, y2), lp)),
        }
    }
    Ok(best.expect("nonempty search window").0)
}

/// Pmf over the rectangle `[0, max1] x [0, max2]`, row-major in `y1`.
///
/// Exposed so forecast consumers can build interval summaries on top of the
/// point (mode) prediction.
pub fn pmf_table(p: &BcpParams, max1: u64, max2: u64) -> Vec<Vec<f64>> {
    (0..=max1)
        .map(|x| (0..=max2).map(|y| log_pmf(x, y, p).exp()).collect())
        .collect()
}
