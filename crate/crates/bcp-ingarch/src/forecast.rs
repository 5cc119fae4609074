//! One-step-ahead point forecasts and rolling out-of-sample evaluation.
//!
//! Point forecasts are modes: the joint mode of the one-step predictive
//! distribution, or (conditionally on the next count of the first
//! component) the mode of the second component's Poisson law.

use serde::{Deserialize, Serialize};

use crate::bcp::{self, BcpParams};
use crate::estimation::{fit_with_starts, filter_lambda, FitConfig};
use crate::process::{lambda_update, ModelParams, SeriesPair};
use crate::{poisson, Error, Result};

/// A single one-step-ahead forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Index of the forecast target (0-based; equals the length of the
    /// history the forecast was made from).
    pub t: usize,
    /// Predicted conditional means for the target period.
    pub lambda: [f64; 2],
    /// Joint-mode point forecast.
    pub y_hat: [u64; 2],
    /// Mode of the second component given the realized first-component
    /// count, when requested and available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y2_conditional: Option<u64>,
    /// Realized counts, when known (rolling evaluation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_obs: Option<[u64; 2]>,
}

/// Conditional means for the period following the last observation.
pub fn lambda_next(p: &ModelParams, s: &SeriesPair, init: [f64; 2]) -> [f64; 2] {
    let path = filter_lambda(p, s, init);
    let last = s.len() - 1;
    lambda_update(
        [path.lam1[last], path.lam2[last]],
        [s.y1[last], s.y2[last]],
        p,
    )
}

/// One-step-ahead joint-mode forecast from the end of `s`.
pub fn one_step(p: &ModelParams, s: &SeriesPair, init: [f64; 2]) -> Result<ForecastRecord> {
    let lambda = lambda_next(p, s, init);
    let dist = BcpParams::new(lambda[0], lambda[1], p.phi)?;
    let (y1, y2) = bcp::joint_mode(&dist)?;
    Ok(ForecastRecord {
        t: s.len(),
        lambda,
        y_hat: [y1, y2],
        y2_conditional: None,
        y_obs: None,
    })
}

/// Mode of the second component's one-step predictive law given the
/// realized first-component count `y1_next`.
pub fn conditional_one_step(p: &ModelParams, lambda: [f64; 2], y1_next: u64) -> Result<u64> {
    let dist = BcpParams::new(lambda[0], lambda[1], p.phi)?;
    let log_mean = bcp::mu2(&dist)?.ln() + p.phi * y1_next as f64;
    if log_mean > 43.0 {
        return Err(Error::Overflow(format!(
            "conditional mean exp({log_mean}) too large for mode search"
        )));
    }
    Ok(poisson::mode(log_mean.exp()))
}

/// One-step predictive pmf on the grid `[0, max1] x [0, max2]` (probability
/// scale), for interval construction downstream of the point forecast.
pub fn predictive_pmf(
    p: &ModelParams,
    lambda: [f64; 2],
    max1: u64,
    max2: u64,
) -> Result<Vec<Vec<f64>>> {
    let dist = BcpParams::new(lambda[0], lambda[1], p.phi)?;
    Ok(bcp::pmf_table(&dist, max1, max2))
}

/// Rolling one-step-ahead evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingEval {
    pub records: Vec<ForecastRecord>,
    /// Root mean squared forecast error per component.
    pub rmse: [f64; 2],
    /// Mean absolute forecast error per component.
    pub mae: [f64; 2],
    /// Cumulative RMSE after each forecast, per component.
    pub rmse_path: [Vec<f64>; 2],
    /// RMSE of the conditional second-component forecast, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_conditional: Option<f64>,
    /// MAE of the conditional second-component forecast, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_conditional: Option<f64>,
    /// Set when a refit failed mid-run: the prefix length at which the
    /// evaluation stopped and the underlying error. Earlier records and
    /// metrics cover the completed steps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<(usize, String)>,
}

/// Refit on each prefix of length `n0, n0+1, ..., n-1` (warm-started at the
/// previous estimate) and forecast the next observation. A refit failure on
/// the very first prefix is an error; a later failure stops the run and
/// returns the completed steps with `aborted` set.
pub fn rolling_eval(
    s: &SeriesPair,
    cfg: &FitConfig,
    n0: usize,
    conditional: bool,
) -> Result<RollingEval> {
    if n0 >= s.len() {
        return Err(Error::Data(format!(
            "rolling start {n0} must be below the series length {}",
            s.len()
        )));
    }
    let mut warm: Vec<ModelParams> = Vec::new();
    let mut records = Vec::with_capacity(s.len() - n0);
    let mut sq = [0.0f64; 2];
    let mut abs = [0.0f64; 2];
    let mut sq_cond = 0.0f64;
    let mut abs_cond = 0.0f64;
    let mut rmse_path = [Vec::new(), Vec::new()];
    let mut aborted = None;
    for origin in n0..s.len() {
        let step = || -> Result<(ForecastRecord, ModelParams)> {
            let prefix = s.prefix(origin)?;
            let f = fit_with_starts(&prefix, cfg, &warm)?;
            let mut rec = one_step(&f.theta_hat, &prefix, f.lambda_init_used)?;
            let y_obs = [s.y1[origin], s.y2[origin]];
            rec.y_obs = Some(y_obs);
            if conditional {
                rec.y2_conditional =
                    Some(conditional_one_step(&f.theta_hat, rec.lambda, y_obs[0])?);
            }
            Ok((rec, f.theta_hat))
        };
        let (rec, theta) = match step() {
            Ok(out) => out,
            Err(e) if records.is_empty() => {
                return Err(Error::RollingAborted { at: origin, source: Box::new(e) })
            }
            Err(e) => {
                aborted = Some((origin, e.to_string()));
                break;
            }
        };
        let y_obs = rec.y_obs.unwrap();
        if let Some(c) = rec.y2_conditional {
            let e2 = c as f64 - y_obs[1] as f64;
            sq_cond += e2 * e2;
            abs_cond += e2.abs();
        }
        let steps = (origin - n0 + 1) as f64;
        for j in 0..2 {
            let e = rec.y_hat[j] as f64 - y_obs[j] as f64;
            sq[j] += e * e;
            abs[j] += e.abs();
            rmse_path[j].push((sq[j] / steps).sqrt());
        }
        warm = vec![theta];
        records.push(rec);
    }
    let m = records.len() as f64;
    Ok(RollingEval {
        records,
        rmse: [(sq[0] / m).sqrt(), (sq[1] / m).sqrt()],
        mae: [abs[0] / m, abs[1] / m],
        rmse_path,
        rmse_conditional: conditional.then(|| (sq_cond / m).sqrt()),
        mae_conditional: conditional.then(|| abs_cond / m),
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::simulate;

    fn demo_params() -> ModelParams {
        ModelParams::new_diag_a(
            [1.0, 0.5],
            [0.4, 0.3],
            [[0.2, 0.0], [0.0, 0.4]],
            true,
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn lambda_next_matches_hand_recursion() {
        let p = ModelParams::new_diag_a([1.0, 1.0], [0.5, 0.0], [[0.0; 2]; 2], true, 0.0)
            .unwrap();
        let s = SeriesPair::new(vec![3, 1], vec![2, 4]).unwrap();
        // Filter from init (2.0, 2.0): lambda_2 = (1 + 0.5*2, 1) = (2, 1);
        // next = (1 + 0.5*2, 1) = (2, 1).
        let next = lambda_next(&p, &s, [2.0, 2.0]);
        assert_eq!(next, [2.0, 1.0]);
    }

    #[test]
    fn one_step_matches_joint_mode_of_predictive_law() {
        let p = demo_params();
        let out = simulate(&p, 200, 300, None, 11).unwrap();
        let rec = one_step(&p, &out.series, [1.0, 1.0]).unwrap();
        assert_eq!(rec.t, 200);
        let dist = BcpParams::new(rec.lambda[0], rec.lambda[1], p.phi).unwrap();
        assert_eq!(rec.y_hat, {
            let (a, b) = bcp::joint_mode(&dist).unwrap();
            [a, b]
        });
    }

    #[test]
    fn conditional_mode_is_poisson_mode_of_conditional_mean() {
        let p = demo_params();
        let lambda = [2.0, 3.0];
        let dist = BcpParams::new(2.0, 3.0, 0.7).unwrap();
        let mu2 = bcp::mu2(&dist).unwrap();
        for y1 in [0u64, 1, 3, 6] {
            let mode = conditional_one_step(&p, lambda, y1).unwrap();
            let mean = mu2 * (0.7 * y1 as f64).exp();
            assert_eq!(mode, poisson::mode(mean));
            // Modes are nondecreasing in the conditioning count for phi > 0.
            assert!(
                bcp::log_pmf(y1, 0, &dist).is_finite(),
                "sanity: pmf finite at y1 = {y1}"
            );
        }
    }

    #[test]
    fn conditional_mode_overflow_guarded() {
        let p = ModelParams::new_diag_a([1.0, 1.0], [0.1, 0.1], [[0.1, 0.0], [0.0, 0.1]], true, 1.5)
            .unwrap();
        let err = conditional_one_step(&p, [1.0, 2.0], 100).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
    }

    #[test]
    fn rolling_eval_metrics_consistent() {
        let p = demo_params();
        let out = simulate(&p, 140, 300, None, 21).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        let ev = rolling_eval(&out.series, &cfg, 120, true).unwrap();
        assert_eq!(ev.records.len(), 20);
        assert_eq!(ev.rmse_path[0].len(), 20);
        // The final point of the cumulative path equals the overall RMSE.
        for j in 0..2 {
            assert!((ev.rmse_path[j][19] - ev.rmse[j]).abs() < 1e-12);
            assert!(ev.mae[j] <= ev.rmse[j] + 1e-12); // Jensen
            assert!(ev.rmse[j].is_finite());
        }
        assert!(ev.rmse_conditional.unwrap().is_finite());
        // Records carry realizations and conditional forecasts.
        assert!(ev.records.iter().all(|r| r.y_obs.is_some()));
        assert!(ev.records.iter().all(|r| r.y2_conditional.is_some()));
        // Targets are consecutive.
        let ts: Vec<usize> = ev.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, (120..140).collect::<Vec<_>>());
    }

    #[test]
    fn rolling_eval_rejects_bad_start() {
        let p = demo_params();
        let out = simulate(&p, 60, 300, None, 4).unwrap();
        let cfg = FitConfig { b_diagonal: true, multi_start: 1, ..Default::default() };
        assert!(rolling_eval(&out.series, &cfg, 60, false).is_err());
        // A start below the minimum fitting length aborts with the prefix
        // length recorded.
        let err = rolling_eval(&out.series, &cfg, 5, false).unwrap_err();
        match err {
            Error::RollingAborted { at, .. } => assert_eq!(at, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
