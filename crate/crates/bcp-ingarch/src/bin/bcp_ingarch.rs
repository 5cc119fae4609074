//! Command-line front end for the BCP-INGARCH library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bcp_ingarch::cli::{self, Assign, McArgs, McStudy};
use bcp_ingarch::estimation::FitConfig;
use bcp_ingarch::inference::SeMethod;
use bcp_ingarch::par;

#[derive(Parser)]
#[command(
    name = "bcp-ingarch",
    about = "Bivariate conditional Poisson INGARCH(1,1): simulation, fitting, \
             inference, forecasting, and Monte Carlo studies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct IoArgs {
    /// Input CSV with two count columns (optional header and leading
    /// date column).
    #[arg(long)]
    input: PathBuf,
    /// CSV field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Component assignment: auto (higher dispersion index becomes
    /// component 2), keep input order, or swap.
    #[arg(long, value_enum, default_value_t = AssignArg::Auto)]
    assign: AssignArg,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output rendering: json documents only, or flat csv summaries
    /// alongside them.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for cli::OutFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => cli::OutFormat::Json,
            FormatArg::Csv => cli::OutFormat::Csv,
        }
    }
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Restrict the count-feedback matrix B to be diagonal (default).
    #[arg(long, conflicts_with = "b_full")]
    b_diagonal: bool,
    /// Estimate a full 2x2 count-feedback matrix B.
    #[arg(long)]
    b_full: bool,
    /// Number of optimizer starts (first from moment matching, the rest
    /// jittered deterministically).
    #[arg(long, default_value_t = 3)]
    multi_start: usize,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            b_diagonal: !self.b_full,
            multi_start: self.multi_start.max(1),
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AssignArg {
    Auto,
    Keep,
    Swap,
}

impl From<AssignArg> for Assign {
    fn from(a: AssignArg) -> Self {
        match a {
            AssignArg::Auto => Assign::Auto,
            AssignArg::Keep => Assign::Keep,
            AssignArg::Swap => Assign::Swap,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeMethodArg {
    Outer,
    Hessian,
    Bootstrap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyArg {
    Estimation,
    Se,
    Power,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory; writes series.csv, lambda.csv, manifest.json.
    Simulate {
        /// JSON file with the model parameters.
        #[arg(long)]
        params: PathBuf,
        /// Series length to keep after burn-in.
        #[arg(long)]
        n: usize,
        /// Pre-sample iterations discarded before recording.
        #[arg(long, default_value_t = 300)]
        burn_in: usize,
        /// Master RNG seed.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit the model by conditional maximum likelihood; writes fit.json and
    /// correlation_path.csv.
    Fit {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Also fit the other B restriction and report both AIC/BIC.
        #[arg(long)]
        both: bool,
    },
    /// Standard errors for a fitted model; writes se.json.
    Se {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, value_enum, default_value_t = SeMethodArg::Outer)]
        se_method: SeMethodArg,
        /// Bootstrap replicas (bootstrap method only).
        #[arg(long = "bootstrap-B", default_value_t = 500)]
        bootstrap_b: usize,
        /// Master RNG seed (required by the bootstrap).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Likelihood-ratio and score tests of zero correlation; writes
    /// test.json.
    Test {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// One-step-ahead forecast, or a rolling out-of-sample evaluation when
    /// --n0 is given; writes forecast.json.
    Forecast {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Rolling-evaluation start: refit on each prefix of length n0..n-1
        /// and forecast the next observation.
        #[arg(long)]
        n0: Option<usize>,
        /// Also forecast the second component conditionally on the first.
        #[arg(long)]
        conditional: bool,
    },
    /// Monte Carlo studies of the estimator, its standard errors, or the
    /// tests; writes CSV summaries and mc.json.
    Montecarlo {
        /// JSON file with the true model parameters.
        #[arg(long)]
        params: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, value_enum, default_value_t = StudyArg::Estimation)]
        study: StudyArg,
        /// Series length per replica.
        #[arg(long)]
        n: usize,
        /// Number of Monte Carlo replicas.
        #[arg(long)]
        replicas: usize,
        /// Master RNG seed.
        #[arg(long)]
        seed: u64,
        /// Bootstrap replicas inside the SE study.
        #[arg(long = "bootstrap-B", default_value_t = 500)]
        bootstrap_b: usize,
        /// Comma-separated grid of true correlation parameters for the
        /// power study.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi_grid: Vec<f64>,
        /// Nominal test level for the power study.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> bcp_ingarch::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate { params, n, burn_in, seed, out } => {
            cli::cmd_simulate(&params, n, burn_in, seed, &out)
        }
        Command::Fit { io, fit, both } => {
            let d = cli::ingest(&io.input, io.delimiter as u8, io.assign.into())?;
            cli::cmd_fit(&d, &fit.config(), both, io.format.into(), &io.out)
        }
        Command::Se { io, fit, se_method, bootstrap_b, seed } => {
            let d = cli::ingest(&io.input, io.delimiter as u8, io.assign.into())?;
            let method = match se_method {
                SeMethodArg::Outer => SeMethod::Outer,
                SeMethodArg::Hessian => SeMethod::Hessian,
                SeMethodArg::Bootstrap => SeMethod::Bootstrap,
            };
            cli::cmd_se(&d, &fit.config(), method, bootstrap_b, seed, io.format.into(), &io.out)
        }
        Command::Test { io, fit } => {
            let d = cli::ingest(&io.input, io.delimiter as u8, io.assign.into())?;
            cli::cmd_test(&d, &fit.config(), io.format.into(), &io.out)
        }
        Command::Forecast { io, fit, n0, conditional } => {
            let d = cli::ingest(&io.input, io.delimiter as u8, io.assign.into())?;
            cli::cmd_forecast(&d, &fit.config(), n0, conditional, io.format.into(), &io.out)
        }
        Command::Montecarlo {
            params,
            fit,
            study,
            n,
            replicas,
            seed,
            bootstrap_b,
            phi_grid,
            level,
            out,
        } => {
            let args = McArgs {
                study: match study {
                    StudyArg::Estimation => McStudy::Estimation,
                    StudyArg::Se => McStudy::Se,
                    StudyArg::Power => McStudy::Power,
                },
                n,
                replicas,
                seed,
                bootstrap_b,
                phi_grid,
                level,
            };
            cli::cmd_montecarlo(&params, &fit.config(), &args, &out)
        }
    }
}

fn main() -> ExitCode {
    par::init_threads_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
