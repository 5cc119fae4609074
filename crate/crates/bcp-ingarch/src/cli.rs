//! Command implementations behind the `bcp-ingarch` binary: CSV ingestion
//! with dispersion-based component assignment, and the
//! simulate/fit/se/test/forecast/montecarlo subcommands with
//! machine-readable outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bcp::BcpParams;
use crate::estimation::{self, FitConfig, FitResult};
use crate::forecast::{self, RollingEval};
use crate::inference::{self, SeMethod, SeResult, TestResult};
use crate::montecarlo;
use crate::process::{simulate, stationarity_check, ModelParams, SeriesPair};
use crate::{bcp, Error, Result};

/// Version tag stamped into every JSON document this module writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Output rendering: JSON documents only, or flat CSV summaries alongside
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutFormat {
    Json,
    Csv,
}

/// How to map input columns to model components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assign {
    /// The column with the larger dispersion index becomes component 2;
    /// ties keep input order.
    Auto,
    /// First input column is component 1.
    Keep,
    /// First input column is component 2.
    Swap,
}

/// A validated input series plus the record of how it was assembled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub series: SeriesPair,
    pub source: String,
    /// Dispersion index (sample variance / sample mean) per input column,
    /// in input order.
    pub dispersion: [f64; 2],
    /// True when input columns were exchanged, so component 1 is the
    /// second input column.
    pub swapped: bool,
    /// Human-readable account of the assignment decision.
    pub assignment_note: String,
}

fn dispersion_index(col: &[u64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().map(|v| *v as f64).sum::<f64>() / n;
    if mean == 0.0 || col.len() < 2 {
        return 0.0;
    }
    let var = col.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var / mean
}

fn parse_count(cell: &str, row: usize, col: usize) -> Result<u64> {
    cell.trim().parse::<u64>().map_err(|_| {
        Error::Data(format!(
            "row {row}, column {col}: expected a nonnegative integer, got {cell:?}"
        ))
    })
}

/// Read a two-column count CSV (optional header, optional leading
/// date/label column, configurable delimiter) and assign components.
///
/// Header and label column are auto-detected: a first row whose count cells
/// do not parse as integers is treated as a header, and a first column that
/// does not parse on data rows is carried through as labels.
pub fn ingest(path: &Path, delimiter: u8, assign: Assign) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)?;
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty input", path.display())));
    }
    let width = rows[0].len();
    if !(2..=3).contains(&width) {
        return Err(Error::Data(format!(
            "{}: expected 2 count columns (plus an optional date column), got {width} columns",
            path.display()
        )));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data(format!(
            "{}: rows have unequal lengths",
            path.display()
        )));
    }
    let has_labels = width == 3;
    let count_cols = [width - 2, width - 1];
    let header_rows = {
        let first = &rows[0];
        let looks_like_header = count_cols
            .iter()
            .any(|&c| first[c].trim().parse::<u64>().is_err());
        usize::from(looks_like_header)
    };
    let data = &rows[header_rows..];
    if data.is_empty() {
        return Err(Error::Data(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    let mut col1 = Vec::with_capacity(data.len());
    let mut col2 = Vec::with_capacity(data.len());
    let mut labels = has_labels.then(|| Vec::with_capacity(data.len()));
    for (i, row) in data.iter().enumerate() {
        let line = i + header_rows + 1; // 1-based position in the file
        col1.push(parse_count(&row[count_cols[0]], line, count_cols[0] + 1)?);
        col2.push(parse_count(&row[count_cols[1]], line, count_cols[1] + 1)?);
        if let Some(l) = labels.as_mut() {
            l.push(row[0].to_string());
        }
    }
    let dispersion = [dispersion_index(&col1), dispersion_index(&col2)];
    let (swapped, assignment_note) = match assign {
        Assign::Keep => (false, "assignment forced: keep input order".to_string()),
        Assign::Swap => (true, "assignment forced: swap input columns".to_string()),
        Assign::Auto => {
            if dispersion[0] > dispersion[1] {
                (
                    true,
                    format!(
                        "auto assignment: column 1 (D = {:.4}) exceeds column 2 (D = {:.4}); \
                         higher-dispersion column becomes component 2",
                        dispersion[0], dispersion[1]
                    ),
                )
            } else {
                (
                    false,
                    format!(
                        "auto assignment: column 2 (D = {:.4}) >= column 1 (D = {:.4}); \
                         input order kept",
                        dispersion[1], dispersion[0]
                    ),
                )
            }
        }
    };
    let (y1, y2) = if swapped { (col2, col1) } else { (col1, col2) };
    let mut series = SeriesPair::new(y1, y2)?;
    series.labels = labels;
    Ok(Dataset {
        series,
        source: path.display().to_string(),
        dispersion,
        swapped,
        assignment_note,
    })
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(doc)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn read_params(path: &Path) -> Result<ModelParams> {
    let raw: ModelParams = serde_json::from_str(&fs::read_to_string(path)?)?;
    // Re-validate: the file may contain arbitrary numbers.
    ModelParams::new(raw.omega, raw.a, raw.b, raw.b_diagonal, raw.phi)
}

/// Simulate a trajectory and write `series.csv`, `lambda.csv`, and
/// `manifest.json` into `out`.
pub fn cmd_simulate(
    params_path: &Path,
    n: usize,
    burn_in: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let p = read_params(params_path)?;
    let sim = simulate(&p, n, burn_in, None, seed)?;
    fs::create_dir_all(out)?;

    let series_path = out.join("series.csv");
    let mut w = csv::Writer::from_path(&series_path)?;
    w.write_record(["t", "y1", "y2"])?;
    for t in 0..n {
        w.write_record([
            t.to_string(),
            sim.series.y1[t].to_string(),
            sim.series.y2[t].to_string(),
        ])?;
    }
    w.flush()?;

    let lambda_path = out.join("lambda.csv");
    let mut w = csv::Writer::from_path(&lambda_path)?;
    w.write_record(["t", "lambda1", "lambda2"])?;
    for t in 0..n {
        w.write_record([
            t.to_string(),
            format!("{:.17e}", sim.lambda.lam1[t]),
            format!("{:.17e}", sim.lambda.lam2[t]),
        ])?;
    }
    w.flush()?;

    let manifest_path = out.join("manifest.json");
    write_json(
        &manifest_path,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "params": p,
            "n": n,
            "burn_in": burn_in,
            "seed": seed,
            "stationarity": sim.stationarity,
        }),
    )?;
    Ok(vec![series_path, lambda_path, manifest_path])
}

/// One fitted model plus the diagnostics the fit subcommand reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub fit: FitResult,
    /// Second fit with the other B restriction, under `--both`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_b: Option<FitResult>,
}

/// The part of a `Dataset` worth echoing into result documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n: usize,
    pub dispersion: [f64; 2],
    pub swapped: bool,
    pub assignment_note: String,
}

impl DatasetSummary {
    fn from(d: &Dataset) -> Self {
        Self {
            source: d.source.clone(),
            n: d.series.len(),
            dispersion: d.dispersion,
            swapped: d.swapped,
            assignment_note: d.assignment_note.clone(),
        }
    }
}

/// Per-period contemporaneous correlation along the fitted mean path,
/// written as `correlation_path.csv`.
fn write_correlation_path(fit: &FitResult, s: &SeriesPair, path: &Path) -> Result<()> {
    let lp = estimation::filter_lambda(&fit.theta_hat, s, fit.lambda_init_used);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "lambda1", "lambda2", "correlation"])?;
    for t in 0..s.len() {
        let corr = BcpParams::new(lp.lam1[t], lp.lam2[t], fit.theta_hat.phi)
            .map(|d| bcp::correlation(&d))
            .unwrap_or(f64::NAN);
        w.write_record([
            t.to_string(),
            format!("{:.17e}", lp.lam1[t]),
            format!("{:.17e}", lp.lam2[t]),
            format!("{:.17e}", corr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flat `parameter,estimate` rendering of a fit, with fit statistics as
/// trailing pseudo-parameters.
fn write_fit_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let layout = fit.layout();
    let values = layout.pack(&fit.theta_hat);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "estimate"])?;
    for (name, v) in layout.names().iter().zip(&values) {
        w.write_record([name.to_string(), format!("{v:.17e}")])?;
    }
    for (name, v) in [("loglik", fit.loglik), ("aic", fit.aic), ("bic", fit.bic)] {
        w.write_record([name.to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Fit the model and write `fit.json` plus `correlation_path.csv` (and a
/// flat `fit.csv` under the csv format).
pub fn cmd_fit(
    dataset: &Dataset,
    cfg: &FitConfig,
    both: bool,
    format: OutFormat,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let fit = estimation::fit(&dataset.series, cfg)?;
    let alternative_b = both
        .then(|| {
            let other = FitConfig { b_diagonal: !cfg.b_diagonal, ..*cfg };
            estimation::fit(&dataset.series, &other)
        })
        .transpose()?;
    fs::create_dir_all(out)?;
    let fit_path = out.join("fit.json");
    let corr_path = out.join("correlation_path.csv");
    write_correlation_path(&fit, &dataset.series, &corr_path)?;
    let mut written = vec![fit_path.clone(), corr_path];
    if format == OutFormat::Csv {
        let flat = out.join("fit.csv");
        write_fit_csv(&flat, &fit)?;
        written.push(flat);
    }
    write_json(
        &fit_path,
        &FitDocument {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSummary::from(dataset),
            fit,
            alternative_b,
        },
    )?;
    Ok(written)
}

/// Standard errors document written by the se subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeDocument {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub fit: FitResult,
    pub se: SeResult,
}

/// Fit, compute standard errors by the requested method, write `se.json`.
pub fn cmd_se(
    dataset: &Dataset,
    cfg: &FitConfig,
    method: SeMethod,
    bootstrap_b: usize,
    seed: u64,
    format: OutFormat,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let fit = estimation::fit(&dataset.series, cfg)?;
    let mut se = match method {
        SeMethod::Bootstrap => inference::se_bootstrap(&fit, &dataset.series, bootstrap_b, seed)?,
        m => inference::se_asymptotic(&fit, &dataset.series, m)?,
    };
    // Replicate-level output would dwarf the document; keep the summary.
    se.replicates = None;
    fs::create_dir_all(out)?;
    let path = out.join("se.json");
    let mut written = vec![path.clone()];
    if format == OutFormat::Csv {
        let flat = out.join("se.csv");
        let estimates = fit.layout().pack(&fit.theta_hat);
        let mut w = csv::Writer::from_path(&flat)?;
        w.write_record(["parameter", "estimate", "se"])?;
        for i in 0..se.names.len() {
            w.write_record([
                se.names[i].clone(),
                format!("{:.17e}", estimates[i]),
                format!("{:.17e}", se.se[i]),
            ])?;
        }
        w.flush()?;
        written.push(flat);
    }
    write_json(
        &path,
        &SeDocument {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSummary::from(dataset),
            fit,
            se,
        },
    )?;
    Ok(written)
}

/// Both tests of `H0: phi = 0` on the same data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestDocument {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub lrt: TestResult,
    /// Absent when the score test's information matrix is not positive
    /// definite; `score_error` then says so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_error: Option<String>,
}

/// Run the likelihood-ratio and score tests, write `test.json`.
pub fn cmd_test(
    dataset: &Dataset,
    cfg: &FitConfig,
    format: OutFormat,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let lrt = inference::lrt_phi(&dataset.series, cfg)?;
    let (score, score_error) = match inference::score_test_phi(&dataset.series, cfg) {
        Ok(t) => (Some(t), None),
        Err(e @ Error::InformationNotPd) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    fs::create_dir_all(out)?;
    let path = out.join("test.json");
    let mut written = vec![path.clone()];
    if format == OutFormat::Csv {
        let flat = out.join("test.csv");
        let mut w = csv::Writer::from_path(&flat)?;
        w.write_record(["test", "statistic", "df", "p_value"])?;
        let mut row = |name: &str, t: &TestResult| -> Result<()> {
            w.write_record([
                name.to_string(),
                format!("{:.17e}", t.statistic),
                t.df.to_string(),
                format!("{:.17e}", t.p_value),
            ])?;
            Ok(())
        };
        row("lrt", &lrt)?;
        if let Some(t) = &score {
            row("score", t)?;
        }
        w.flush()?;
        written.push(flat);
    }
    write_json(
        &path,
        &TestDocument {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSummary::from(dataset),
            lrt,
            score,
            score_error,
        },
    )?;
    Ok(written)
}

/// Forecast document: either a single one-step forecast from the end of the
/// series, or a rolling evaluation when a start index is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastDocument {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub fit: FitResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_step: Option<forecast::ForecastRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rolling: Option<RollingEval>,
}

/// Fit and forecast; write `forecast.json` (and run a rolling evaluation
/// when `n0` is given).
pub fn cmd_forecast(
    dataset: &Dataset,
    cfg: &FitConfig,
    n0: Option<usize>,
    conditional: bool,
    format: OutFormat,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let fit = estimation::fit(&dataset.series, cfg)?;
    let (one_step, rolling) = match n0 {
        None => {
            let mut rec = forecast::one_step(&fit.theta_hat, &dataset.series, fit.lambda_init_used)?;
            if conditional {
                // Without the realized next first-component count, condition
                // on the joint-mode prediction for it.
                rec.y2_conditional =
                    Some(forecast::conditional_one_step(&fit.theta_hat, rec.lambda, rec.y_hat[0])?);
            }
            (Some(rec), None)
        }
        Some(n0) => (None, Some(forecast::rolling_eval(&dataset.series, cfg, n0, conditional)?)),
    };
    fs::create_dir_all(out)?;
    let path = out.join("forecast.json");
    let mut written = vec![path.clone()];
    if format == OutFormat::Csv {
        let flat = out.join("forecast.csv");
        let mut w = csv::Writer::from_path(&flat)?;
        w.write_record([
            "t", "lambda1", "lambda2", "y1_hat", "y2_hat", "y2_conditional", "y1_obs", "y2_obs",
        ])?;
        let records: Vec<&forecast::ForecastRecord> = match (&one_step, &rolling) {
            (Some(r), _) => vec![r],
            (None, Some(ev)) => ev.records.iter().collect(),
            (None, None) => vec![],
        };
        let opt = |v: Option<u64>| v.map_or_else(String::new, |x| x.to_string());
        for r in records {
            w.write_record([
                r.t.to_string(),
                format!("{:.17e}", r.lambda[0]),
                format!("{:.17e}", r.lambda[1]),
                r.y_hat[0].to_string(),
                r.y_hat[1].to_string(),
                opt(r.y2_conditional),
                opt(r.y_obs.map(|y| y[0])),
                opt(r.y_obs.map(|y| y[1])),
            ])?;
        }
        w.flush()?;
        written.push(flat);
    }
    write_json(
        &path,
        &ForecastDocument {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSummary::from(dataset),
            fit,
            one_step,
            rolling,
        },
    )?;
    Ok(written)
}

/// Which Monte Carlo study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStudy {
    Estimation,
    Se,
    Power,
}

/// Settings for `cmd_montecarlo`.
#[derive(Debug, Clone)]
pub struct McArgs {
    pub study: McStudy,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub bootstrap_b: usize,
    pub phi_grid: Vec<f64>,
    pub level: f64,
}

fn write_summary_csv(path: &Path, out: &montecarlo::McEstimation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "mean", "sd", "mse"])?;
    for i in 0..out.names.len() {
        w.write_record([
            out.names[i].clone(),
            format!("{:.17e}", out.mean[i]),
            format!("{:.17e}", out.sd[i]),
            format!("{:.17e}", out.mse[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_estimates_csv(path: &Path, out: &montecarlo::McEstimation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["replica".to_string()];
    header.extend(out.names.iter().cloned());
    w.write_record(&header)?;
    for (r, row) in out.estimates.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Run a Monte Carlo study at the parameters in `params_path`; write a JSON
/// document plus CSV summaries.
pub fn cmd_montecarlo(
    params_path: &Path,
    cfg: &FitConfig,
    args: &McArgs,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let truth = read_params(params_path)?;
    // Fail early on unstable inputs rather than after the replicas.
    let st = stationarity_check(&truth);
    if !st.satisfied {
        return Err(Error::NonstationaryMean);
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    match args.study {
        McStudy::Estimation => {
            let res = montecarlo::estimation_study(&truth, args.n, args.replicas, cfg, args.seed)?;
            let summary = out.join("mc_summary.csv");
            let estimates = out.join("mc_estimates.csv");
            let doc = out.join("mc.json");
            write_summary_csv(&summary, &res)?;
            write_estimates_csv(&estimates, &res)?;
            write_json(&doc, &json!({ "schema_version": SCHEMA_VERSION, "study": "estimation", "result": res }))?;
            written.extend([summary, estimates, doc]);
        }
        McStudy::Se => {
            let res = montecarlo::se_study(
                &truth,
                args.n,
                args.replicas,
                args.bootstrap_b,
                cfg,
                args.seed,
            )?;
            let summary = out.join("mc_se_summary.csv");
            let mut w = csv::Writer::from_path(&summary)?;
            w.write_record(["parameter", "empirical_sd", "bootstrap", "outer", "hessian"])?;
            for i in 0..res.names.len() {
                w.write_record([
                    res.names[i].clone(),
                    format!("{:.17e}", res.empirical_sd[i]),
                    format!("{:.17e}", res.mean_bootstrap[i]),
                    format!("{:.17e}", res.mean_outer[i]),
                    format!("{:.17e}", res.mean_hessian[i]),
                ])?;
            }
            w.flush()?;
            let doc = out.join("mc.json");
            write_json(&doc, &json!({ "schema_version": SCHEMA_VERSION, "study": "se", "result": res }))?;
            written.extend([summary, doc]);
        }
        McStudy::Power => {
            if args.phi_grid.is_empty() {
                return Err(Error::InvalidParameter(
                    "the power study needs a nonempty --phi-grid".into(),
                ));
            }
            let res = montecarlo::power_study(
                &truth,
                &args.phi_grid,
                args.n,
                args.replicas,
                args.level,
                cfg,
                args.seed,
            )?;
            let summary = out.join("mc_power.csv");
            let mut w = csv::Writer::from_path(&summary)?;
            w.write_record(["phi", "lrt_rate", "score_rate", "failed"])?;
            for i in 0..res.phi_grid.len() {
                w.write_record([
                    format!("{:.17e}", res.phi_grid[i]),
                    format!("{:.17e}", res.lrt_rate[i]),
                    format!("{:.17e}", res.score_rate[i]),
                    res.failed[i].to_string(),
                ])?;
            }
            w.flush()?;
            let doc = out.join("mc.json");
            write_json(&doc, &json!({ "schema_version": SCHEMA_VERSION, "study": "power", "result": res }))?;
            written.extend([summary, doc]);
        }
    }
    Ok(written)
}
