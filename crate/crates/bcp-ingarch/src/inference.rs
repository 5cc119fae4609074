//! Standard errors, hypothesis tests for the correlation parameter, and
//! model-selection helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::estimation::{
    self, fit_with_starts, per_observation_scores, FitConfig, FitResult, Layout,
};
use crate::par;
use crate::process::{simulate, ModelParams, SeriesPair, DEFAULT_BURN_IN};
use crate::{Error, Result};

/// Which Fisher-information estimate backs a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeMethod {
    /// Outer product of per-observation scores.
    Outer,
    /// Negative mean per-observation Hessian (finite differences of the
    /// analytic score).
    Hessian,
    /// Parametric bootstrap.
    Bootstrap,
}

/// Standard errors aligned with the fit's free-parameter order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeResult {
    pub method: SeMethod,
    pub names: Vec<String>,
    pub se: Vec<f64>,
    /// Bootstrap replicate estimates (row per replica), when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<Vec<Vec<f64>>>,
    /// Replicas dropped for non-convergence.
    pub dropped: usize,
}

/// Outcome of a test of `H0: phi = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub null_fit: FitResult,
    /// Absent for the score test, which only fits under the null.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_fit: Option<FitResult>,
}

/// Upper-tail probability of the chi-square distribution with 1 df.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5, x / 2.0)
    }
}

/// Outer-product information estimate: mean of `U_t U_t^T` over t = 2..n.
pub fn info_outer(
    p: &ModelParams,
    s: &SeriesPair,
    init: [f64; 2],
    layout: Layout,
) -> Result<DMatrix<f64>> {
    let scores = per_observation_scores(p, s, init, layout)?;
    let k = layout.dim();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for u in &scores {
        m.syger(1.0, u, u, 1.0);
    }
    m /= scores.len() as f64;
    m.fill_lower_triangle_with_upper_triangle();
    Ok(m)
}

/// Per-observation Hessians by central finite differences of the analytic
/// per-observation score, symmetrized.
pub fn per_observation_hessians(
    p: &ModelParams,
    s: &SeriesPair,
    init: [f64; 2],
    layout: Layout,
) -> Result<Vec<DMatrix<f64>>> {
    let theta = layout.pack(p);
    let k = layout.dim();
    let n_terms = s.len() - 1;
    // columns[i][t] = dU_t / d theta_i
    let mut columns: Vec<Vec<DVector<f64>>> = Vec::with_capacity(k);
    for i in 0..k {
        let h = 1e-5 * theta[i].abs().max(1.0);
        let mut up = theta.clone();
        up[i] += h;
        let mut dn = theta.clone();
        // All free parameters except phi are constrained nonnegative; fall
        // back to a one-sided stencil at the boundary.
        dn[i] = if layout.phi_index() == Some(i) {
            theta[i] - h
        } else {
            (theta[i] - h).max(0.0)
        };
        let denom = up[i] - dn[i];
        let pu = layout.unpack(&up, p.phi)?;
        let pd = layout.unpack(&dn, p.phi)?;
        let su = per_observation_scores(&pu, s, init, layout)?;
        let sd = per_observation_scores(&pd, s, init, layout)?;
        columns.push((0..n_terms).map(|t| (&su[t] - &sd[t]) / denom).collect());
    }
    let mut out = Vec::with_capacity(n_terms);
    for t in 0..n_terms {
        let mut ht = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                ht[(i, j)] = columns[i][t][j];
            }
        }
        let sym = (&ht + ht.transpose()) / 2.0;
        out.push(sym);
    }
    Ok(out)
}

/// Negative-Hessian information estimate and a positive-definiteness flag
/// (false flags near-boundary or small-sample pathologies).
pub fn info_hessian(
    p: &ModelParams,
    s: &SeriesPair,
    init: [f64; 2],
    layout: Layout,
) -> Result<(DMatrix<f64>, bool)> {
    let hts = per_observation_hessians(p, s, init, layout)?;
    let k = layout.dim();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for ht in &hts {
        m -= ht;
    }
    m /= hts.len() as f64;
    let psd = m.clone().cholesky().is_some();
    Ok((m, psd))
}

fn invert_information(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.amax();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 1e-10 * max_eig.max(1.0) {
        return Err(Error::SingularInformation { min_eigenvalue: min_eig });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    Ok(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

/// Asymptotic standard errors `sqrt(diag(M^{-1}) / (n-1))` from the chosen
/// information estimate.
pub fn se_asymptotic(fit: &FitResult, s: &SeriesPair, method: SeMethod) -> Result<SeResult> {
    let layout = fit.layout();
    let init = fit.lambda_init_used;
    let m = match method {
        SeMethod::Outer => info_outer(&fit.theta_hat, s, init, layout)?,
        SeMethod::Hessian => info_hessian(&fit.theta_hat, s, init, layout)?.0,
        SeMethod::Bootstrap => {
            return Err(Error::InvalidParameter(
                "use se_bootstrap for the bootstrap method".into(),
            ))
        }
    };
    let inv = invert_information(&m)?;
    let n_used = fit.n_used as f64;
    let se: Vec<f64> = (0..layout.dim())
        .map(|i| (inv[(i, i)] / n_used).max(0.0).sqrt())
        .collect();
    Ok(SeResult { method, names: fit.free_names.clone(), se, replicates: None, dropped: 0 })
}

/// Parametric bootstrap standard errors: simulate `b` trajectories at the
/// fitted parameters, refit each (warm-started at the estimate), and take
/// the empirical SD of the estimates. Deterministic given `seed`.
pub fn se_bootstrap(fit: &FitResult, s: &SeriesPair, b: usize, seed: u64) -> Result<SeResult> {
    if !fit.converged {
        return Err(Error::NonConvergence {
            reason: "bootstrap requires a converged fit".into(),
            best_loglik: fit.loglik,
        });
    }
    let layout = fit.layout();
    let cfg = FitConfig {
        b_diagonal: fit.b_diagonal,
        phi_fixed: fit.phi_fixed,
        multi_start: 1,
        ..Default::default()
    };
    let n = s.len();
    let theta_hat = fit.theta_hat;

    let results: Vec<Option<Vec<f64>>> = par::indexed_map(b, |i| {
        let rep_seed = par::replica_seed(seed, i as u64);
        let sim = simulate(&theta_hat, n, DEFAULT_BURN_IN, None, rep_seed).ok()?;
        let refit = fit_with_starts(&sim.series, &cfg, &[theta_hat]).ok()?;
        refit.converged.then(|| layout.pack(&refit.theta_hat))
    });

    let replicates: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let dropped = b - replicates.len();
    if dropped * 5 > b {
        return Err(Error::BootstrapFailures { failed: dropped, total: b });
    }
    let k = layout.dim();
    let m = replicates.len() as f64;
    let mut se = vec![0.0; k];
    for i in 0..k {
        let mean = replicates.iter().map(|r| r[i]).sum::<f64>() / m;
        let var = replicates.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        se[i] = var.sqrt();
    }
    Ok(SeResult {
        method: SeMethod::Bootstrap,
        names: fit.free_names.clone(),
        se,
        replicates: Some(replicates),
        dropped,
    })
}

/// Likelihood ratio test of `H0: phi = 0`.
pub fn lrt_phi(s: &SeriesPair, cfg: &FitConfig) -> Result<TestResult> {
    let alt_cfg = FitConfig { phi_fixed: None, ..*cfg };
    let null_cfg = FitConfig { phi_fixed: Some(0.0), ..*cfg };
    let null_fit = estimation::fit(s, &null_cfg)?;
    let mut alt_fit = fit_with_starts(s, &alt_cfg, &[null_fit.theta_hat])?;
    let mut statistic = 2.0 * (alt_fit.loglik - null_fit.loglik);
    if statistic < -1e-6 {
        // Optimizer noise: refit the alternative warm-started at the null.
        alt_fit = fit_with_starts(s, &alt_cfg, &[null_fit.theta_hat, alt_fit.theta_hat])?;
        statistic = 2.0 * (alt_fit.loglik - null_fit.loglik);
    }
    if statistic < -1e-6 {
        return Err(Error::NonConvergence {
            reason: format!("negative LRT statistic {statistic} after refit"),
            best_loglik: alt_fit.loglik,
        });
    }
    let statistic = statistic.max(0.0);
    Ok(TestResult {
        statistic,
        df: 1,
        p_value: chi2_1_sf(statistic),
        null_fit,
        alt_fit: Some(alt_fit),
    })
}

/// Score test of `H0: phi = 0`; fits only under the null.
pub fn score_test_phi(s: &SeriesPair, cfg: &FitConfig) -> Result<TestResult> {
    let null_cfg = FitConfig { phi_fixed: Some(0.0), ..*cfg };
    let null_fit = estimation::fit(s, &null_cfg)?;
    // Full parameter vector including phi at the restricted estimate.
    let layout = Layout { b_diagonal: cfg.b_diagonal, include_phi: true };
    let init = null_fit.lambda_init_used;
    let u = estimation::score(&null_fit.theta_hat, s, init, layout)?;
    let (d_n, psd) = info_hessian(&null_fit.theta_hat, s, init, layout)?;
    if !psd {
        return Err(Error::InformationNotPd);
    }
    // Total information = (n-1) * D_n.
    let total_info = d_n * null_fit.n_used as f64;
    let inv = invert_information(&total_info).map_err(|_| Error::InformationNotPd)?;
    let uv = DVector::from_vec(u);
    let statistic = (uv.transpose() * inv * &uv)[(0, 0)];
    Ok(TestResult {
        statistic,
        df: 1,
        p_value: chi2_1_sf(statistic),
        null_fit,
        alt_fit: None,
    })
}

/// Correlation-bound diagnostic for the trivariate-reduction competitor
/// model: its covariance parameter must stay below
/// `phi_max = min((I - A)^{-1} omega)`, and its per-period correlation is
/// capped at `phi_max / sqrt(lambda1_t lambda2_t)` along the fitted path.
pub fn competitor_phi_bound(fit: &FitResult, s: &SeriesPair) -> Result<(f64, Vec<f64>)> {
    let p = &fit.theta_hat;
    let m = [
        [1.0 - p.a[0][0], -p.a[0][1]],
        [-p.a[1][0], 1.0 - p.a[1][1]],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let rho_a = p.a[0][0].max(p.a[1][1]); // diagonal A in fitted models
    if det.abs() < 1e-12 || rho_a >= 1.0 {
        return Err(Error::SingularInformation { min_eigenvalue: det });
    }
    let a1 = (m[1][1] * p.omega[0] - m[0][1] * p.omega[1]) / det;
    let a2 = (-m[1][0] * p.omega[0] + m[0][0] * p.omega[1]) / det;
    let phi_max = a1.min(a2);
    let path = estimation::filter_lambda(p, s, fit.lambda_init_used);
    let corr_path: Vec<f64> = (0..s.len())
        .map(|t| phi_max / (path.lam1[t] * path.lam2[t]).sqrt())
        .collect();
    Ok((phi_max, corr_path))
}

/// AIC and BIC orderings (indices into `fits`, best first, stable on ties).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ranking {
    pub by_aic: Vec<usize>,
    pub by_bic: Vec<usize>,
}

/// Rank fits on the same data by AIC and BIC.
pub fn model_select(fits: &[FitResult]) -> Result<Ranking> {
    if fits.is_empty() {
        return Err(Error::Data("model_select needs at least one fit".into()));
    }
    let hash = fits[0].data_hash;
    if fits.iter().any(|f| f.data_hash != hash) {
        return Err(Error::MixedData);
    }
    let mut by_aic: Vec<usize> = (0..fits.len()).collect();
    by_aic.sort_by(|&a, &b| fits[a].aic.total_cmp(&fits[b].aic));
    let mut by_bic: Vec<usize> = (0..fits.len()).collect();
    by_bic.sort_by(|&a, &b| fits[a].bic.total_cmp(&fits[b].bic));
    Ok(Ranking { by_aic, by_bic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::fit;

    fn near_zero_dynamics(omega: [f64; 2], phi: f64) -> ModelParams {
        ModelParams::new_diag_a(omega, [0.0, 0.0], [[0.0; 2]; 2], true, phi).unwrap()
    }

    #[test]
    fn chi2_tail_values() {
        assert_eq!(chi2_1_sf(0.0), 1.0);
        // 95th percentile of chi2_1 is 3.841458820694124.
        assert!((chi2_1_sf(3.841458820694124) - 0.05).abs() < 1e-10);
        assert!(chi2_1_sf(20.0) < 1e-4);
    }

    #[test]
    fn info_matrices_symmetric() {
        let p = ModelParams::new_diag_a(
            [1.0, 1.0],
            [0.3, 0.2],
            [[0.3, 0.1], [0.2, 0.2]],
            false,
            0.1,
        )
        .unwrap();
        let out = simulate(&p, 400, 300, None, 14).unwrap();
        let layout = Layout { b_diagonal: false, include_phi: true };
        let init = [2.0, 2.0];
        let s_n = info_outer(&p, &out.series, init, layout).unwrap();
        let (d_n, _) = info_hessian(&p, &out.series, init, layout).unwrap();
        for i in 0..layout.dim() {
            for j in 0..layout.dim() {
                assert!((s_n[(i, j)] - s_n[(j, i)]).abs() < 1e-12);
                assert!((d_n[(i, j)] - d_n[(j, i)]).abs() < 1e-12);
            }
        }
        // Outer product is PSD by construction.
        assert!(s_n.symmetric_eigen().eigenvalues.min() > -1e-10);
    }

    #[test]
    fn poisson_submodel_information() {
        // phi = 0, A = B = 0: the (omega1, omega1) information entry is the
        // Poisson Fisher information 1/omega1.
        let p = near_zero_dynamics([2.0, 3.0], 0.0);
        let out = simulate(&p, 30_000, 100, None, 55).unwrap();
        let layout = Layout { b_diagonal: true, include_phi: true };
        let init = [2.0, 3.0];
        let s_n = info_outer(&p, &out.series, init, layout).unwrap();
        let (d_n, _) = info_hessian(&p, &out.series, init, layout).unwrap();
        let w1 = layout.names().iter().position(|n| *n == "omega1").unwrap();
        assert!((s_n[(w1, w1)] - 0.5).abs() < 0.05, "S_n: {}", s_n[(w1, w1)]);
        assert!((d_n[(w1, w1)] - 0.5).abs() < 0.05, "D_n: {}", d_n[(w1, w1)]);
    }

    #[test]
    fn se_shrinks_with_sample_size() {
        let p = ModelParams::new_diag_a(
            [1.0, 0.5],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.7,
        )
        .unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let small = simulate(&p, 300, 300, None, 7).unwrap();
        let large = simulate(&p, 3000, 300, None, 7).unwrap();
        let fs = fit(&small.series, &cfg).unwrap();
        let fl = fit(&large.series, &cfg).unwrap();
        let ses = se_asymptotic(&fs, &small.series, SeMethod::Hessian).unwrap();
        let sel = se_asymptotic(&fl, &large.series, SeMethod::Hessian).unwrap();
        // Expect roughly sqrt(10) shrinkage; allow slack for sampling noise.
        let ratio = ses.se.iter().zip(&sel.se).map(|(a, b)| a / b).sum::<f64>() / ses.se.len() as f64;
        assert!(ratio > 1.8 && ratio < 6.0, "mean ratio {ratio}");
    }

    #[test]
    fn bootstrap_deterministic_and_agrees_with_asymptotic() {
        let p = ModelParams::new_diag_a(
            [1.0, 0.5],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.7,
        )
        .unwrap();
        let out = simulate(&p, 400, 300, None, 23).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let f = fit(&out.series, &cfg).unwrap();
        let a = se_bootstrap(&f, &out.series, 100, 77).unwrap();
        let b = se_bootstrap(&f, &out.series, 100, 77).unwrap();
        assert_eq!(a.se, b.se);
        assert_eq!(a.dropped, b.dropped);
        assert!(a.dropped * 5 <= 100);
        assert_eq!(a.replicates.as_ref().unwrap().len(), 100 - a.dropped);

        // Bootstrap and Hessian-based SEs estimate the same sampling
        // variability; the well-identified phi entry should agree closely.
        let asym = se_asymptotic(&f, &out.series, SeMethod::Hessian).unwrap();
        let phi_idx = f.layout().phi_index().unwrap();
        let (bp, ap) = (a.se[phi_idx], asym.se[phi_idx]);
        assert!(
            (bp - ap).abs() / ap < 0.35,
            "phi SE: bootstrap {bp} vs asymptotic {ap}"
        );
    }

    #[test]
    fn lrt_statistic_nonnegative_and_null_calibrated_p() {
        let p = ModelParams::new_diag_a(
            [1.0, 1.0],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.0,
        )
        .unwrap();
        let out = simulate(&p, 400, 300, None, 3).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let t = lrt_phi(&out.series, &cfg).unwrap();
        assert!(t.statistic >= 0.0);
        assert!((0.0..=1.0).contains(&t.p_value));
        assert_eq!(t.df, 1);
        assert!(t.alt_fit.is_some());
    }

    #[test]
    fn lrt_detects_strong_correlation() {
        let p = ModelParams::new_diag_a(
            [1.0, 0.5],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.7,
        )
        .unwrap();
        let out = simulate(&p, 500, 300, None, 5).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let lrt = lrt_phi(&out.series, &cfg).unwrap();
        assert!(lrt.p_value < 1e-6, "p = {}", lrt.p_value);
        let sc = score_test_phi(&out.series, &cfg).unwrap();
        assert!(sc.statistic >= 0.0);
        assert!(sc.p_value < 1e-3, "score p = {}", sc.p_value);
        assert!(sc.alt_fit.is_none());
    }

    #[test]
    fn competitor_bound_zero_a() {
        let p = near_zero_dynamics([2.0, 3.0], 0.1);
        let out = simulate(&p, 100, 0, None, 1).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let mut f = fit(&out.series, &cfg).unwrap();
        // Force exactly A = 0 to pin the closed form.
        f.theta_hat = near_zero_dynamics([2.0, 3.0], 0.1);
        let (phi_max, path) = competitor_phi_bound(&f, &out.series).unwrap();
        assert!((phi_max - 2.0).abs() < 1e-12);
        assert!(path.iter().all(|c| *c <= 1.0 + 1e-12));
    }

    #[test]
    fn model_select_nested_and_mixed_data() {
        let p = ModelParams::new_diag_a(
            [1.0, 1.0],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.3,
        )
        .unwrap();
        let out = simulate(&p, 400, 300, None, 8).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let alt = fit(&out.series, &cfg).unwrap();
        let null = fit(&out.series, &FitConfig { phi_fixed: Some(0.0), ..cfg }).unwrap();
        // Nested: AIC(H0) >= AIC(H1) - 2, since the LRT statistic is >= 0
        // and the models differ by one parameter.
        assert!(null.aic >= alt.aic - 2.0 - 1e-9);
        let ranking = model_select(&[null.clone(), alt.clone()]).unwrap();
        assert_eq!(ranking.by_aic.len(), 2);

        let other = simulate(&p, 400, 300, None, 9).unwrap();
        let other_fit = fit(&other.series, &cfg).unwrap();
        assert!(matches!(model_select(&[alt, other_fit]), Err(Error::MixedData)));
    }

    #[test]
    fn model_select_ties_stable() {
        let p = ModelParams::new_diag_a(
            [1.0, 1.0],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.3,
        )
        .unwrap();
        let out = simulate(&p, 200, 300, None, 2).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let f = fit(&out.series, &cfg).unwrap();
        let ranking = model_select(&[f.clone(), f]).unwrap();
        assert_eq!(ranking.by_aic, vec![0, 1]);
        assert_eq!(ranking.by_bic, vec![0, 1]);
    }
}
