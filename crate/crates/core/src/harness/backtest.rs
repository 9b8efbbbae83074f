//! Rolling-origin backtest: at each scheduled origin, fit the base model on
//! the data up to the origin, re-estimate theta from that location's own
//! retrospective forecasts, and score both the base and modulated forecasts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::domain::{align, EpidemicSeries, ForecastSet, ScoreRecord};
use crate::epimod::{
    estimate_theta_from_forecasts, modulate_forecast_set, ModulationMode, ThetaEstimate, ThetaOptions,
};
use crate::forecasters::{self, ForecasterSpec};
use crate::scoring::{wis_breakdown, WisConfig};

use super::io::{write_hub_forecasts, write_score_records, write_theta_trace, HubForecast};
use super::{ingest_truth_csv, HarnessError, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginSchedule {
    EveryPeriod,
    /// Every n-th period, counted from the first admissible origin.
    Every(usize),
}

impl OriginSchedule {
    fn step(self) -> usize {
        match self {
            OriginSchedule::EveryPeriod => 1,
            OriginSchedule::Every(n) => n.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    File(PathBuf),
    Scenario(String),
}

/// One base forecaster in a plan, with its modulation switch.
#[derive(Debug, Clone)]
pub struct PlanModel {
    pub spec: ForecasterSpec,
    pub modulate: bool,
}

#[derive(Debug, Clone)]
pub struct BacktestPlan {
    pub truth: TruthSource,
    pub models: Vec<PlanModel>,
    pub k: usize,
    pub schedule: OriginSchedule,
    /// First origin (number of observations) considered; defaults to the
    /// forecaster's minimum history.
    pub first_origin: Option<usize>,
    pub mode: ModulationMode,
    pub wis: WisConfig,
    pub theta: ThetaOptions,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl BacktestPlan {
    pub fn new(truth: TruthSource, specs: Vec<ForecasterSpec>, k: usize) -> Self {
        Self {
            truth,
            models: specs
                .into_iter()
                .map(|spec| PlanModel {
                    spec,
                    modulate: true,
                })
                .collect(),
            k,
            schedule: OriginSchedule::Every(7),
            first_origin: None,
            mode: ModulationMode::default(),
            wis: WisConfig::default(),
            theta: ThetaOptions::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTraceRow {
    pub forecast_date: NaiveDate,
    pub location: String,
    pub estimate: ThetaEstimate,
}

/// Failure of one (location, origin, model) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub model: String,
    pub location: String,
    pub origin_index: usize,
    pub message: String,
}

/// Base and modulated outputs of one model across all locations.
#[derive(Debug, Clone, Default)]
pub struct ModelRun {
    pub name: String,
    pub base: Vec<ForecastSet>,
    pub modulated: Vec<ForecastSet>,
    pub theta_trace: Vec<ThetaTraceRow>,
    pub base_scores: Vec<ScoreRecord>,
    pub modulated_scores: Vec<ScoreRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct BacktestResult {
    pub runs: Vec<ModelRun>,
    pub failures: Vec<CellFailure>,
}

/// Scores a forecast set against truth at every horizon with realized data.
pub fn score_forecast(truth: &EpidemicSeries, fs: &ForecastSet, wis: &WisConfig) -> Vec<ScoreRecord> {
    let Ok(pairs) = align(truth, fs) else {
        return Vec::new();
    };
    pairs
        .into_iter()
        .enumerate()
        .map(|(j, (observed, predicted))| {
            let h = j + 1;
            let mut record = ScoreRecord::point(fs.origin_date, &fs.location, h, observed, predicted);
            if fs.quantiles.is_some() {
                if let Ok(b) = wis_breakdown(observed, &fs.quantiles_at(h), wis) {
                    record.wis = Some(b.wis);
                    record.interval_scores = Some(
                        b.interval_scores
                            .iter()
                            .filter_map(|&(alpha, s)| {
                                crate::domain::QuantileLevel::new(alpha).ok().map(|a| (a, s))
                            })
                            .collect(),
                    );
                }
            }
            record
        })
        .collect()
}

struct Cell {
    base: ForecastSet,
    modulated: ForecastSet,
    theta: ThetaEstimate,
}

fn run_location(
    truth: &EpidemicSeries,
    model: &PlanModel,
    plan: &BacktestPlan,
) -> (Vec<Cell>, Vec<CellFailure>) {
    let k = plan.k;
    let len = truth.len();
    let min = model.spec.kind.min_history();
    let first = plan.first_origin.unwrap_or(min).max(min);
    let step = plan.schedule.step();
    let origins: Vec<usize> = (first..len).step_by(step).collect();

    // Forecasts at every origin any cell needs, each fitted exactly once:
    // retrospective origins up to `len - 1 - k` plus the scheduled ones.
    let needed: Vec<usize> = if model.modulate {
        let retro_end = (len - 1).saturating_sub(k);
        let mut v: Vec<usize> = (min..=retro_end).collect();
        v.extend(origins.iter().copied().filter(|&t| t > retro_end));
        v
    } else {
        origins.clone()
    };
    let fitted: BTreeMap<usize, Result<ForecastSet, String>> = needed
        .par_iter()
        .map(|&t| {
            let res = forecasters::fit(&model.spec, &truth.prefix(t))
                .map(|m| m.forecast(k))
                .map_err(|e| e.to_string());
            (t, res)
        })
        .collect();

    let results: Vec<Result<Cell, CellFailure>> = origins
        .par_iter()
        .map(|&t| {
            let fail = |message: String| CellFailure {
                model: model.spec.to_string(),
                location: truth.location.clone(),
                origin_index: t,
                message,
            };
            let base = fitted[&t].clone().map_err(fail)?;
            let history = truth.prefix(t);
            if !model.modulate {
                return Ok(Cell {
                    modulated: base.clone(),
                    base,
                    theta: ThetaEstimate::unestimated(history.max_value()),
                });
            }
            let retro: Vec<ForecastSet> = (min..=t.saturating_sub(k))
                .filter(|&s| s + k <= t)
                .filter_map(|s| fitted.get(&s).and_then(|r| r.as_ref().ok()).cloned())
                .collect();
            let theta = if retro.is_empty() {
                let mut e = ThetaEstimate::unestimated(history.max_value());
                if let Some(value) = plan.theta.fixed_theta {
                    e.theta.value = value;
                }
                e
            } else {
                estimate_theta_from_forecasts(&history, &retro, plan.mode, &plan.theta)
                    .map_err(|e| fail(e.to_string()))?
            };
            let burden: f64 = history.values.iter().sum();
            let modulated = modulate_forecast_set(&base, theta.theta, plan.mode, burden)
                .map_err(|e| fail(e.to_string()))?;
            Ok(Cell {
                base,
                modulated,
                theta,
            })
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => cells.push(c),
            Err(f) => {
                log::warn!(
                    "{} {} origin {}: {}",
                    f.model,
                    f.location,
                    f.origin_index,
                    f.message
                );
                failures.push(f);
            }
        }
    }
    (cells, failures)
}

/// Runs the plan over already-loaded truth, one series per location.
/// Locations are processed independently; outputs are sorted by
/// (location, origin) so the result does not depend on scheduling.
pub fn run_backtest_on(truth: &BTreeMap<String, EpidemicSeries>, plan: &BacktestPlan) -> BacktestResult {
    let mut result = BacktestResult::default();
    for model in &plan.models {
        let mut run = ModelRun {
            name: model.spec.to_string(),
            ..ModelRun::default()
        };
        for series in truth.values() {
            let (cells, failures) = run_location(series, model, plan);
            result.failures.extend(failures);
            for cell in cells {
                run.base_scores
                    .extend(score_forecast(series, &cell.base, &plan.wis));
                run.modulated_scores
                    .extend(score_forecast(series, &cell.modulated, &plan.wis));
                run.theta_trace.push(ThetaTraceRow {
                    forecast_date: cell.base.origin_date,
                    location: series.location.clone(),
                    estimate: cell.theta,
                });
                run.base.push(cell.base);
                run.modulated.push(cell.modulated);
            }
        }
        result.runs.push(run);
    }
    result
}

impl BacktestPlan {
    /// Checks the plan against the loaded truth.
    pub fn validate(&self, truth: &BTreeMap<String, EpidemicSeries>) -> Result<(), HarnessError> {
        let config = |key: &str, message: &str| HarnessError::Config {
            key: key.to_string(),
            message: message.to_string(),
        };
        if self.k == 0 {
            return Err(config("forecast.horizons", "must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(config("forecast.models", "no forecaster given"));
        }
        let longest = truth.values().map(EpidemicSeries::len).max().unwrap_or(0);
        for m in &self.models {
            let first = self.first_origin.unwrap_or(0).max(m.spec.kind.min_history());
            if first >= longest {
                return Err(HarnessError::NoOrigins(format!(
                    "{} needs more than {first} observations, longest series has {longest}",
                    m.spec
                )));
            }
        }
        Ok(())
    }
}

/// Loads the plan's truth: a CSV file or a seeded simulation scenario.
pub fn load_truth(plan: &BacktestPlan) -> Result<BTreeMap<String, EpidemicSeries>, HarnessError> {
    match &plan.truth {
        TruthSource::File(path) => ingest_truth_csv(path),
        TruthSource::Scenario(name) => {
            let scenario =
                Scenario::by_name(name).ok_or_else(|| HarnessError::UnknownScenario(name.clone()))?;
            let series = scenario.generate(plan.seed)?;
            Ok(BTreeMap::from([(series.location.clone(), series)]))
        }
    }
}

/// Worker count from `EPIMOD_THREADS`, if set to a positive integer.
fn thread_cap() -> Option<usize> {
    std::env::var("EPIMOD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs a plan end to end and, when the plan names an output directory,
/// writes `<model>/base/{forecasts,scores}.csv` and
/// `<model>/epimod/{forecasts,scores,theta}.csv` beneath it.
pub fn run_backtest(plan: &BacktestPlan) -> Result<BacktestResult, HarnessError> {
    let truth = load_truth(plan)?;
    plan.validate(&truth)?;
    let result = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::NoOrigins(format!("thread pool: {e}")))?
            .install(|| run_backtest_on(&truth, plan)),
        None => run_backtest_on(&truth, plan),
    };
    if let Some(dir) = &plan.output_dir {
        write_run(dir, &result)?;
    }
    Ok(result)
}

pub fn write_run(dir: &Path, result: &BacktestResult) -> Result<(), HarnessError> {
    for run in &result.runs {
        let wrap = |sets: &[ForecastSet]| -> Vec<HubForecast> {
            sets.iter().cloned().map(HubForecast::from_set).collect()
        };
        let base = dir.join(&run.name).join("base");
        let modulated = dir.join(&run.name).join("epimod");
        write_hub_forecasts(&base.join("forecasts.csv"), &wrap(&run.base))?;
        write_score_records(&base.join("scores.csv"), &run.base_scores)?;
        write_hub_forecasts(&modulated.join("forecasts.csv"), &wrap(&run.modulated))?;
        write_score_records(&modulated.join("scores.csv"), &run.modulated_scores)?;
        write_theta_trace(&modulated.join("theta.csv"), &run.theta_trace)?;
    }
    Ok(())
}
