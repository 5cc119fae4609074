//! Monte Carlo harness: sampling-distribution studies for the estimator,
//! its standard errors, and the tests of `H0: phi = 0`.
//!
//! Every study derives one independent sub-seed per replica from the master
//! seed, so results are reproducible and independent of the execution
//! schedule (parallel or sequential).

use serde::{Deserialize, Serialize};

use crate::estimation::{fit_with_starts, FitConfig};
use crate::inference::{lrt_phi, score_test_phi, se_asymptotic, se_bootstrap, SeMethod};
use crate::par;
use crate::process::{simulate, ModelParams, DEFAULT_BURN_IN};
use crate::{Error, Result};

fn too_many_failures(failed: usize, total: usize) -> bool {
    failed * 5 > total
}

/// Per-parameter summary of a point-estimation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McEstimation {
    pub names: Vec<String>,
    /// True values of the free parameters.
    pub truth: Vec<f64>,
    /// Converged replica estimates, one row per replica.
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Mean squared error around the true value.
    pub mse: Vec<f64>,
    pub failed: usize,
    pub replicas: usize,
    pub n: usize,
    pub seed: u64,
}

fn column_stats(rows: &[Vec<f64>], truth: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = truth.len();
    let m = rows.len() as f64;
    let mut mean = vec![0.0; k];
    let mut sd = vec![0.0; k];
    let mut mse = vec![0.0; k];
    for i in 0..k {
        mean[i] = rows.iter().map(|r| r[i]).sum::<f64>() / m;
        sd[i] = (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        mse[i] = rows.iter().map(|r| (r[i] - truth[i]).powi(2)).sum::<f64>() / m;
    }
    (mean, sd, mse)
}

/// Simulate `replicas` trajectories of length `n` at `truth`, fit each, and
/// summarize the sampling distribution of the estimator.
pub fn estimation_study(
    truth: &ModelParams,
    n: usize,
    replicas: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<McEstimation> {
    let layout = cfg.layout();
    let truth_vec = layout.pack(truth);
    let rows: Vec<Option<Vec<f64>>> = par::indexed_map(replicas, |i| {
        let rep_seed = par::replica_seed(seed, i as u64);
        let sim = simulate(truth, n, DEFAULT_BURN_IN, None, rep_seed).ok()?;
        let fit = fit_with_starts(&sim.series, cfg, &[*truth]).ok()?;
        fit.converged.then(|| layout.pack(&fit.theta_hat))
    });
    let estimates: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let failed = replicas - estimates.len();
    if too_many_failures(failed, replicas) {
        return Err(Error::BootstrapFailures { failed, total: replicas });
    }
    let (mean, sd, mse) = column_stats(&estimates, &truth_vec);
    Ok(McEstimation {
        names: layout.names().iter().map(|s| s.to_string()).collect(),
        truth: truth_vec,
        estimates,
        mean,
        sd,
        mse,
        failed,
        replicas,
        n,
        seed,
    })
}

/// Comparison of standard-error estimators against the empirical sampling
/// spread over Monte Carlo replicas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSeStudy {
    pub names: Vec<String>,
    /// Empirical SD of the estimates across replicas (the target).
    pub empirical_sd: Vec<f64>,
    /// Mean parametric-bootstrap SE across replicas.
    pub mean_bootstrap: Vec<f64>,
    /// Mean outer-product-information SE across replicas.
    pub mean_outer: Vec<f64>,
    /// Mean negative-Hessian-information SE across replicas.
    pub mean_hessian: Vec<f64>,
    pub failed: usize,
    pub replicas: usize,
    pub bootstrap_b: usize,
    pub n: usize,
    pub seed: u64,
}

/// Per replica: fit, then compute all three standard-error estimates.
pub fn se_study(
    truth: &ModelParams,
    n: usize,
    replicas: usize,
    bootstrap_b: usize,
    cfg: &FitConfig,
    seed: u64,
) -> Result<McSeStudy> {
    let layout = cfg.layout();
    let truth_vec = layout.pack(truth);
    // Two seed streams: even offsets drive the replica data, odd offsets the
    // nested bootstrap, so the two never collide.
    let rows: Vec<Option<[Vec<f64>; 4]>> = par::indexed_map(replicas, |i| {
        let data_seed = par::replica_seed(seed, 2 * i as u64);
        let boot_seed = par::replica_seed(seed, 2 * i as u64 + 1);
        let sim = simulate(truth, n, DEFAULT_BURN_IN, None, data_seed).ok()?;
        let fit = fit_with_starts(&sim.series, cfg, &[*truth]).ok()?;
        if !fit.converged {
            return None;
        }
        let boot = se_bootstrap(&fit, &sim.series, bootstrap_b, boot_seed).ok()?;
        let outer = se_asymptotic(&fit, &sim.series, SeMethod::Outer).ok()?;
        let hess = se_asymptotic(&fit, &sim.series, SeMethod::Hessian).ok()?;
        Some([layout.pack(&fit.theta_hat), boot.se, outer.se, hess.se])
    });
    let kept: Vec<[Vec<f64>; 4]> = rows.into_iter().flatten().collect();
    let failed = replicas - kept.len();
    if too_many_failures(failed, replicas) {
        return Err(Error::BootstrapFailures { failed, total: replicas });
    }
    let k = layout.dim();
    let m = kept.len() as f64;
    let estimates: Vec<Vec<f64>> = kept.iter().map(|r| r[0].clone()).collect();
    let (_, empirical_sd, _) = column_stats(&estimates, &truth_vec);
    let mean_of = |slot: usize| -> Vec<f64> {
        (0..k)
            .map(|i| kept.iter().map(|r| r[slot][i]).sum::<f64>() / m)
            .collect()
    };
    Ok(McSeStudy {
        names: layout.names().iter().map(|s| s.to_string()).collect(),
        empirical_sd,
        mean_bootstrap: mean_of(1),
        mean_outer: mean_of(2),
        mean_hessian: mean_of(3),
        failed,
        replicas,
        bootstrap_b,
        n,
        seed,
    })
}

/// Rejection rates of the two tests of `H0: phi = 0` over a grid of true
/// `phi` values (size at `phi = 0`, power elsewhere).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McPower {
    pub phi_grid: Vec<f64>,
    pub lrt_rate: Vec<f64>,
    pub score_rate: Vec<f64>,
    /// Replicas dropped per grid point (either test failed to run).
    pub failed: Vec<usize>,
    pub replicas: usize,
    pub level: f64,
    pub n: usize,
    pub seed: u64,
}

/// For each `phi` in the grid, simulate at `base` with that `phi` and record
/// how often each test rejects at `level`.
pub fn power_study(
    base: &ModelParams,
    phi_grid: &[f64],
    n: usize,
    replicas: usize,
    level: f64,
    cfg: &FitConfig,
    seed: u64,
) -> Result<McPower> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::InvalidParameter(format!("level must be in (0, 1), got {level}")));
    }
    let mut lrt_rate = Vec::with_capacity(phi_grid.len());
    let mut score_rate = Vec::with_capacity(phi_grid.len());
    let mut failed = Vec::with_capacity(phi_grid.len());
    for (g, &phi) in phi_grid.iter().enumerate() {
        let truth = ModelParams::new(base.omega, base.a, base.b, base.b_diagonal, phi)?;
        let outcomes: Vec<Option<(bool, bool)>> = par::indexed_map(replicas, |i| {
            let rep_seed = par::replica_seed(seed, (g * replicas + i) as u64);
            let sim = simulate(&truth, n, DEFAULT_BURN_IN, None, rep_seed).ok()?;
            let lrt = lrt_phi(&sim.series, cfg).ok()?;
            let score = score_test_phi(&sim.series, cfg).ok()?;
            Some((lrt.p_value < level, score.p_value < level))
        });
        let kept: Vec<(bool, bool)> = outcomes.into_iter().flatten().collect();
        let dropped = replicas - kept.len();
        if too_many_failures(dropped, replicas) {
            return Err(Error::BootstrapFailures { failed: dropped, total: replicas });
        }
        let m = kept.len() as f64;
        lrt_rate.push(kept.iter().filter(|r| r.0).count() as f64 / m);
        score_rate.push(kept.iter().filter(|r| r.1).count() as f64 / m);
        failed.push(dropped);
    }
    Ok(McPower {
        phi_grid: phi_grid.to_vec(),
        lrt_rate,
        score_rate,
        failed,
        replicas,
        level,
        n,
        seed,
    })
}
