//! Backtest harness: scenarios, plans, CSV I/O and the rolling-origin loop.

pub mod backtest;
pub mod config;
pub mod io;
pub mod modulate_file;
pub mod scenario;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::domain::DomainError;
use crate::epimod::ModulationError;
use crate::scoring::ScoreError;
use crate::sir::SirError;

pub use backtest::{
    run_backtest, run_backtest_on, score_forecast, BacktestPlan, BacktestResult, CellFailure,
    ModelRun, OriginSchedule, PlanModel, ThetaTraceRow, TruthSource,
};
pub use config::{load_plan, parse_plan};
pub use io::{ingest_hub_forecasts, ingest_truth_csv, HubForecast};
pub use modulate_file::{modulate_file, modulate_forecasts, ModulateFileOptions, ModulatedFile};
pub use scenario::{Scenario, SCENARIOS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("dates for location {0} are not increasing")]
    NonMonotoneDates(String),
    #[error("line {line}: unparseable target `{target}`")]
    UnparseableTarget { line: u64, target: String },
    #[error("forecast {forecast_date} for {location} has inconsistent horizons")]
    InconsistentHorizons {
        forecast_date: NaiveDate,
        location: String,
    },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("no retrospective origin with realized truth for {location} at {forecast_date}")]
    NoRetrospectiveOrigins {
        location: String,
        forecast_date: NaiveDate,
    },
    #[error("no truth for location {0}")]
    MissingTruth(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("no admissible origin: {0}")]
    NoOrigins(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
