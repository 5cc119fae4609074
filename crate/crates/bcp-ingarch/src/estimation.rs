//! Conditional maximum likelihood for the BCP-INGARCH(1,1) model.
//!
//! The likelihood conditions on the first observation and an initial
//! conditional mean. The score is computed analytically through the
//! derivative recursions of the conditional-mean filter; maximization runs
//! in an unconstrained log-reparameterization with a soft stationarity
//! barrier.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::optim;
use crate::process::{lambda_update, stationarity_check, LambdaPath, ModelParams, SeriesPair};
use crate::{Error, Result};

const EXP_OVERFLOW: f64 = 709.0;
/// Soft barrier activates at `|A|_1 + |B|_1 = 1 - BARRIER_EPS`.
const BARRIER_EPS: f64 = 1e-3;

/// Rule for the conditional-mean value the filter starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaInit {
    /// Per-series sample means (the default; consistent under stationarity).
    SampleMean,
    /// A user-supplied positive pair.
    Fixed([f64; 2]),
}

/// Estimation choices the model itself leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub b_diagonal: bool,
    /// Freeze `phi` at this value (fit under the null when set to 0).
    pub phi_fixed: Option<f64>,
    pub lambda_init: LambdaInit,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    /// Number of starts: the moment start plus jittered restarts.
    pub multi_start: usize,
    pub barrier_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            b_diagonal: false,
            phi_fixed: None,
            lambda_init: LambdaInit::SampleMean,
            grad_tol: 1e-4,
            step_tol: 1e-11,
            max_iter: 500,
            multi_start: 3,
            barrier_weight: 1e4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_tol <= 0.0 || self.step_tol <= 0.0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.multi_start < 1 {
            return Err(Error::InvalidParameter("multi_start must be >= 1".into()));
        }
        Ok(())
    }

    /// Free-parameter layout implied by this configuration.
    pub fn layout(&self) -> Layout {
        Layout { b_diagonal: self.b_diagonal, include_phi: self.phi_fixed.is_none() }
    }
}

/// Free-parameter ordering: `(alpha1, alpha2, vec(B), omega1, omega2[, phi])`,
/// with `vec(B) = (b11, b12, b21, b22)` or `(b11, b22)` when B is diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub b_diagonal: bool,
    pub include_phi: bool,
}

impl Layout {
    pub fn dim(&self) -> usize {
        let nb = if self.b_diagonal { 2 } else { 4 };
        2 + nb + 2 + usize::from(self.include_phi)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = vec!["alpha1", "alpha2", "beta11"];
        if self.b_diagonal {
            v.push("beta22");
        } else {
            v.extend(["beta12", "beta21", "beta22"]);
        }
        v.extend(["omega1", "omega2"]);
        if self.include_phi {
            v.push("phi");
        }
        v
    }

    pub fn pack(&self, p: &ModelParams) -> Vec<f64> {
        let mut v = vec![p.a[0][0], p.a[1][1], p.b[0][0]];
        if self.b_diagonal {
            v.push(p.b[1][1]);
        } else {
            v.extend([p.b[0][1], p.b[1][0], p.b[1][1]]);
        }
        v.extend(p.omega);
        if self.include_phi {
            v.push(p.phi);
        }
        v
    }

    pub fn unpack(&self, v: &[f64], phi_fallback: f64) -> Result<ModelParams> {
        debug_assert_eq!(v.len(), self.dim());
        let (b, rest) = if self.b_diagonal {
            ([[v[2], 0.0], [0.0, v[3]]], &v[4..])
        } else {
            ([[v[2], v[3]], [v[4], v[5]]], &v[6..])
        };
        let phi = if self.include_phi { rest[2] } else { phi_fallback };
        ModelParams::new_diag_a([rest[0], rest[1]], [v[0], v[1]], b, self.b_diagonal, phi)
    }

    /// Index of `phi` in the free vector, if present.
    pub fn phi_index(&self) -> Option<usize> {
        self.include_phi.then(|| self.dim() - 1)
    }

    // Gradient slot of each lambda-derivative, per component.
    fn idx_alpha(&self, j: usize) -> usize {
        j
    }
    fn idx_beta(&self, j: usize, k: usize) -> Option<usize> {
        if self.b_diagonal {
            (j == k).then(|| 2 + j)
        } else {
            Some(2 + 2 * j + k)
        }
    }
    fn idx_omega(&self, j: usize) -> usize {
        if self.b_diagonal {
            4 + j
        } else {
            6 + j
        }
    }
}

/// Resolve the filter's starting conditional mean for a series.
pub fn resolve_lambda_init(s: &SeriesPair, rule: LambdaInit) -> Result<[f64; 2]> {
    match rule {
        LambdaInit::SampleMean => {
            let m = s.means();
            Ok([m[0].max(1e-3), m[1].max(1e-3)])
        }
        LambdaInit::Fixed(v) => {
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "lambda_init must be positive, got {v:?}"
                )));
            }
            Ok(v)
        }
    }
}

/// Run the conditional-mean recursion along observed data.
pub fn filter_lambda(p: &ModelParams, s: &SeriesPair, init: [f64; 2]) -> LambdaPath {
    let n = s.len();
    let mut lam1 = Vec::with_capacity(n);
    let mut lam2 = Vec::with_capacity(n);
    let mut lambda = init;
    lam1.push(lambda[0]);
    lam2.push(lambda[1]);
    for t in 1..n {
        lambda = lambda_update(lambda, [s.y1[t - 1], s.y2[t - 1]], p);
        lam1.push(lambda[0]);
        lam2.push(lambda[1]);
    }
    LambdaPath { lam1, lam2 }
}

/// Output of one likelihood/score pass.
pub(crate) struct Evaluation {
    /// Conditional log-likelihood (theta-dependent terms only); `-inf` when
    /// a term over/underflowed.
    pub loglik: f64,
    /// Analytic score over the free parameters, in theta space.
    pub score: DVector<f64>,
    /// Index `t` (1-based observation) of the first non-finite term.
    pub bad_index: Option<usize>,
    /// Per-observation scores `U_t`, rows aligned with t = 2..n.
    pub per_obs: Option<Vec<DVector<f64>>>,
}

/// Single pass computing the log-likelihood, the analytic score, and
/// optionally per-observation scores. Requires diagonal A.
pub(crate) fn evaluate(
    p: &ModelParams,
    s: &SeriesPair,
    init: [f64; 2],
    layout: Layout,
    want_per_obs: bool,
) -> Evaluation {
    debug_assert!(p.a_is_diagonal(), "analytic score requires diagonal A");
    let n = s.len();
    let dim = layout.dim();
    let phi = p.phi;
    let ephi = phi.exp();
    let u = ephi - 1.0;
    let alpha = p.a_diag();

    let mut loglik = 0.0f64;
    let mut score = DVector::<f64>::zeros(dim);
    let mut per_obs = want_per_obs.then(|| Vec::with_capacity(n - 1));
    let mut bad_index = None;

    // Derivative recursions per component: d lambda_j / d (omega_j, alpha_j,
    // beta_j1, beta_j2), initialized at zero (lambda_1 treated as constant).
    let mut d_omega = [0.0f64; 2];
    let mut d_alpha = [0.0f64; 2];
    let mut d_beta = [[0.0f64; 2]; 2];
    let mut lambda = init;
    let mut prev_lambda;

    for t in 1..n {
        prev_lambda = lambda;
        let prev_y = [s.y1[t - 1] as f64, s.y2[t - 1] as f64];
        lambda = lambda_update(lambda, [s.y1[t - 1], s.y2[t - 1]], p);
        for j in 0..2 {
            d_omega[j] = 1.0 + alpha[j] * d_omega[j];
            d_alpha[j] = prev_lambda[j] + alpha[j] * d_alpha[j];
            for k in 0..2 {
                d_beta[j][k] = prev_y[k] + alpha[j] * d_beta[j][k];
            }
        }

        let (y1, y2) = (s.y1[t] as f64, s.y2[t] as f64);
        let exponent = lambda[1].ln() - lambda[0] * u + phi * y1;
        if exponent > EXP_OVERFLOW {
            loglik = f64::NEG_INFINITY;
            bad_index = Some(t + 1);
            break;
        }
        let big_e = exponent.exp(); // lambda2 * exp(-lambda1 u + phi y1)
        let term = y1 * lambda[0].ln() + y2 * lambda[1].ln()
            - lambda[0] * (1.0 + y2 * u)
            - big_e
            + phi * y1 * y2;
        if !term.is_finite() {
            loglik = f64::NEG_INFINITY;
            bad_index = Some(t + 1);
            break;
        }
        loglik += term;

        let s1 = y1 / lambda[0] - 1.0 + u * (big_e - y2);
        let s2 = y2 / lambda[1] - big_e / lambda[1];
        let s3 = -y2 * lambda[0] * ephi - big_e * (y1 - lambda[0] * ephi) + y1 * y2;

        let sj = [s1, s2];
        let mut ut = want_per_obs.then(|| DVector::<f64>::zeros(dim));
        for j in 0..2 {
            let contributions = [
                (layout.idx_alpha(j), d_alpha[j]),
                (layout.idx_omega(j), d_omega[j]),
            ];
            for (idx, d) in contributions {
                let v = sj[j] * d;
                score[idx] += v;
                if let Some(ref mut row) = ut {
                    row[idx] += v;
                }
            }
            for k in 0..2 {
                if let Some(idx) = layout.idx_beta(j, k) {
                    let v = sj[j] * d_beta[j][k];
                    score[idx] += v;
                    if let Some(ref mut row) = ut {
                        row[idx] += v;
                    }
                }
            }
        }
        if let Some(pi) = layout.phi_index() {
            score[pi] += s3;
            if let Some(ref mut row) = ut {
                row[pi] += s3;
            }
        }
        if let (Some(rows), Some(row)) = (per_obs.as_mut(), ut) {
            rows.push(row);
        }
    }

    Evaluation { loglik, score, bad_index, per_obs }
}

/// Conditional log-likelihood, omitting theta-free `lgamma` terms.
/// Returns `-inf` when a term over/underflows.
pub fn log_likelihood(p: &ModelParams, s: &SeriesPair, init: [f64; 2]) -> f64 {
    let path = filter_lambda(p, s, init);
    let phi = p.phi;
    let u = phi.exp() - 1.0;
    let mut total = 0.0;
    for t in 1..s.len() {
        let (l1, l2) = (path.lam1[t], path.lam2[t]);
        let (y1, y2) = (s.y1[t] as f64, s.y2[t] as f64);
        let exponent = l2.ln() - l1 * u + phi * y1;
        if exponent > EXP_OVERFLOW {
            return f64::NEG_INFINITY;
        }
        let term =
            y1 * l1.ln() + y2 * l2.ln() - l1 * (1.0 + y2 * u) - exponent.exp() + phi * y1 * y2;
        if !term.is_finite() {
            return f64::NEG_INFINITY;
        }
        total += term;
    }
    total
}

/// Analytic score of the free parameters (theta space). `layout` selects
/// which entries are free; frozen parameters are omitted.
pub fn score(p: &ModelParams, s: &SeriesPair, init: [f64; 2], layout: Layout) -> Result<Vec<f64>> {
    if !p.a_is_diagonal() {
        return Err(Error::InvalidParameter(
            "score requires diagonal A (estimation restriction)".into(),
        ));
    }
    let ev = evaluate(p, s, init, layout, false);
    if let Some(t) = ev.bad_index {
        return Err(Error::Overflow(format!(
            "log-likelihood term non-finite at observation {t}"
        )));
    }
    Ok(ev.score.as_slice().to_vec())
}

/// Per-observation analytic scores `U_t`, t = 2..n, over the free params.
pub fn per_observation_scores(
    p: &ModelParams,
    s: &SeriesPair,
    init: [f64; 2],
    layout: Layout,
) -> Result<Vec<DVector<f64>>> {
    if !p.a_is_diagonal() {
        return Err(Error::InvalidParameter(
            "score requires diagonal A (estimation restriction)".into(),
        ));
    }
    let ev = evaluate(p, s, init, layout, true);
    if let Some(t) = ev.bad_index {
        return Err(Error::Overflow(format!(
            "log-likelihood term non-finite at observation {t}"
        )));
    }
    Ok(ev.per_obs.expect("requested per-observation scores"))
}

/// A conditional maximum likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ModelParams,
    pub loglik: f64,
    /// Inf-norm of the gradient in the transformed (unconstrained) space.
    pub gradient_norm: f64,
    pub converged: bool,
    /// Optimizer iterations used by the winning start.
    pub iterations: usize,
    pub stationarity_margin: f64,
    /// Number of likelihood terms: n - 1.
    pub n_used: usize,
    pub aic: f64,
    pub bic: f64,
    /// Fingerprint of the fitted data, for model-selection sanity checks.
    pub data_hash: u64,
    pub b_diagonal: bool,
    pub phi_fixed: Option<f64>,
    pub lambda_init_used: [f64; 2],
    pub free_names: Vec<String>,
}

impl FitResult {
    pub fn layout(&self) -> Layout {
        Layout { b_diagonal: self.b_diagonal, include_phi: self.phi_fixed.is_none() }
    }
}

// Transformed space: positives via log, phi identity.
fn to_unconstrained(theta: &[f64], layout: Layout) -> DVector<f64> {
    let mut v: Vec<f64> = theta.iter().map(|x| x.max(1e-12).ln()).collect();
    if let Some(pi) = layout.phi_index() {
        v[pi] = theta[pi];
    }
    DVector::from_vec(v)
}

fn from_unconstrained(v: &DVector<f64>, layout: Layout) -> Vec<f64> {
    let mut theta: Vec<f64> = v.iter().map(|x| x.exp()).collect();
    if let Some(pi) = layout.phi_index() {
        theta[pi] = v[pi];
    }
    theta
}

// Barrier on |A|_1 + |B|_1 and its theta-space gradient.
fn barrier(theta: &[f64], layout: Layout, weight: f64) -> (f64, Vec<f64>) {
    let na = theta[0].max(theta[1]);
    let (col0, col1, b_idx) = if layout.b_diagonal {
        (theta[2], theta[3], [[Some(2), None], [None, Some(3)]])
    } else {
        (
            theta[2] + theta[4],
            theta[3] + theta[5],
            [[Some(2), Some(3)], [Some(4), Some(5)]],
        )
    };
    let nb = col0.max(col1);
    let r = na + nb - (1.0 - BARRIER_EPS);
    let mut grad = vec![0.0; theta.len()];
    if r <= 0.0 {
        return (0.0, grad);
    }
    let coef = 2.0 * weight * r;
    grad[if theta[0] >= theta[1] { 0 } else { 1 }] += coef;
    let col = usize::from(col1 > col0);
    for j in 0..2 {
        if let Some(idx) = b_idx[j][col] {
            grad[idx] += coef;
        }
    }
    (weight * r * r, grad)
}

struct Objective<'a> {
    s: &'a SeriesPair,
    init: [f64; 2],
    layout: Layout,
    phi_fixed: f64,
    weight: f64,
}

impl Objective<'_> {
    // Negative penalized log-likelihood and gradient in unconstrained space.
    fn eval(&self, v: &DVector<f64>) -> (f64, DVector<f64>) {
        let theta = from_unconstrained(v, self.layout);
        let p = match self.layout.unpack(&theta, self.phi_fixed) {
            Ok(p) => p,
            Err(_) => return (f64::INFINITY, DVector::zeros(v.len())),
        };
        let ev = evaluate(&p, self.s, self.init, self.layout, false);
        if !ev.loglik.is_finite() {
            return (f64::INFINITY, DVector::zeros(v.len()));
        }
        let (pen, pen_grad) = barrier(&theta, self.layout, self.weight);
        let mut grad = DVector::<f64>::zeros(v.len());
        for i in 0..v.len() {
            let chain = if Some(i) == self.layout.phi_index() { 1.0 } else { theta[i] };
            grad[i] = (-ev.score[i] + pen_grad[i]) * chain;
        }
        (-ev.loglik + pen, grad)
    }
}

fn moment_start(s: &SeriesPair, layout: Layout, phi_fixed: f64) -> Vec<f64> {
    let m = s.means();
    let omega = [(0.2 * m[0]).max(1e-3), (0.2 * m[1]).max(1e-3)];
    let mut theta = vec![0.3, 0.3, 0.3];
    if layout.b_diagonal {
        theta.push(0.3);
    } else {
        theta.extend([0.05, 0.05, 0.3]);
    }
    theta.extend(omega);
    if layout.include_phi {
        theta.push(phi_fixed);
    }
    theta
}

fn jitter_start(base: &[f64], layout: Layout, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(base.len());
    for (i, v) in base.iter().enumerate() {
        if Some(i) == layout.phi_index() {
            out.push(v + 0.3 * standard_normal(rng));
        } else {
            out.push((v * (0.4 * standard_normal(rng)).exp()).clamp(1e-4, 5.0));
        }
    }
    out
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller; one value per call is plenty here.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Conditional maximum likelihood fit.
pub fn fit(s: &SeriesPair, cfg: &FitConfig) -> Result<FitResult> {
    fit_with_starts(s, cfg, &[])
}

/// Fit with additional warm starts tried alongside the configured ones.
pub fn fit_with_starts(
    s: &SeriesPair,
    cfg: &FitConfig,
    warm_starts: &[ModelParams],
) -> Result<FitResult> {
    cfg.validate()?;
    if s.len() < 20 {
        return Err(Error::Data(format!(
            "fit requires at least 20 observations, got {}",
            s.len()
        )));
    }
    let layout = cfg.layout();
    let phi_fixed = cfg.phi_fixed.unwrap_or(0.0);
    let init = resolve_lambda_init(s, cfg.lambda_init)?;
    let objective = Objective { s, init, layout, phi_fixed, weight: cfg.barrier_weight };
    let opts = optim::Options {
        grad_tol: cfg.grad_tol,
        step_tol: cfg.step_tol,
        max_iter: cfg.max_iter,
    };

    let base = moment_start(s, layout, phi_fixed);
    let mut starts: Vec<Vec<f64>> = warm_starts.iter().map(|p| layout.pack(p)).collect();
    starts.push(base.clone());
    // Jitter seed is fixed: fit is a pure function of its inputs.
    let mut rng = ChaCha12Rng::seed_from_u64(0xBC9_1A6C);
    for _ in 1..cfg.multi_start {
        starts.push(jitter_start(&base, layout, &mut rng));
    }

    let mut best: Option<optim::Solution> = None;
    for start in &starts {
        let sol = optim::bfgs(to_unconstrained(start, layout), |v| objective.eval(v), &opts);
        if !sol.f.is_finite() {
            continue;
        }
        match &best {
            Some(b) if b.f <= sol.f => {}
            _ => best = Some(sol),
        }
    }
    let Some(sol) = best else {
        return Err(Error::NonConvergence {
            reason: "all starts failed the line search".into(),
            best_loglik: f64::NEG_INFINITY,
        });
    };

    let theta = from_unconstrained(&sol.x, layout);
    let theta_hat = layout.unpack(&theta, phi_fixed)?;
    let loglik = log_likelihood(&theta_hat, s, init);
    let k = layout.dim() as f64;
    let n_used = s.len() - 1;
    Ok(FitResult {
        stationarity_margin: stationarity_check(&theta_hat).margin,
        theta_hat,
        loglik,
        gradient_norm: sol.grad_inf_norm,
        converged: sol.converged,
        iterations: sol.iterations,
        n_used,
        aic: -2.0 * loglik + 2.0 * k,
        bic: -2.0 * loglik + k * (n_used as f64).ln(),
        data_hash: s.fingerprint(),
        b_diagonal: cfg.b_diagonal,
        phi_fixed: cfg.phi_fixed,
        lambda_init_used: init,
        free_names: layout.names().iter().map(|s| s.to_string()).collect(),
    })
}
