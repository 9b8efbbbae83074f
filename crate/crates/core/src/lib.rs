//! Susceptible-depletion modulation ("epimodulation") of epidemic forecasts.
//!
//! A base forecaster's k-step trajectory is multiplied by
//! `exp(-theta * cumulative forecast burden)`, and `theta` is chosen by
//! rolling-origin cross-validation over the forecaster's own past errors.
//! The crate also carries the pieces needed to test that idea end to end: a
//! deterministic SIR simulator for synthetic truth, three peak-blind
//! baseline forecasters, proper scoring rules, and a backtest harness that
//! reads and writes hub-style CSV files.

pub mod domain;
pub mod epimod;
pub mod forecasters;
pub mod harness;
pub mod optim;
pub mod scoring;
pub mod sir;

pub use domain::{align, validate_series, Cadence, DomainError, EpidemicSeries, ForecastSet, QuantileLevel, ScoreRecord};
pub use epimod::{
    estimate_theta, modulate, modulate_quantiles, prediction_error, ModulationError, ModulationMode, Theta,
    ThetaEstimate, ThetaOptions, Window,
};
pub use forecasters::{fit, ForecastError, ForecasterKind, ForecasterSpec, FittedModel};
