//! Bivariate conditional Poisson (BCP) INGARCH(1,1) processes.
//!
//! The library covers the full modeling workflow for pairs of correlated
//! count time series: the BCP distribution itself (pmf, sampling, moments,
//! correlation extrema, joint mode), process simulation, conditional
//! maximum likelihood estimation with analytic scores, standard errors
//! (outer-product, Hessian, parametric bootstrap), likelihood-ratio and
//! score tests for contemporaneous correlation, one-step-ahead forecasting
//! with rolling out-of-sample evaluation, and a Monte Carlo harness.

pub mod bcp;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod inference;
pub mod lambert;
pub mod montecarlo;
pub mod par;
pub mod poisson;
pub mod process;

mod optim;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
