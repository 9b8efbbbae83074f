//! Epimodulation of forecasts read from a hub-format file, with theta
//! estimated from the file's own earlier forecasts.

use std::collections::BTreeMap;
use std::path::Path;

use super::backtest::ThetaTraceRow;
use super::io::{ingest_hub_forecasts, ingest_truth_csv, write_hub_forecasts, HubForecast};
use super::HarnessError;
use crate::domain::{EpidemicSeries, ForecastSet};
use crate::epimod::{
    estimate_theta_from_forecasts, modulate_forecast_set, ModulationMode, Theta, ThetaEstimate,
    ThetaOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModulateFileOptions {
    pub mode: ModulationMode,
    pub theta: ThetaOptions,
    /// Only use retrospective forecasts whose targets were all observed
    /// before the forecast being modulated was made, and only the truth
    /// available at that time. By default every forecast from the same or
    /// an earlier origin whose targets appear in the truth file is used.
    pub strict_realtime: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ModulatedFile {
    pub forecasts: Vec<HubForecast>,
    pub theta_trace: Vec<ThetaTraceRow>,
}

/// Modulates every forecast in `forecasts` against `truth`.
pub fn modulate_forecasts(
    forecasts: &[HubForecast],
    truth: &BTreeMap<String, EpidemicSeries>,
    options: &ModulateFileOptions,
) -> Result<ModulatedFile, HarnessError> {
    let mut rebased: Vec<HubForecast> = Vec::with_capacity(forecasts.len());
    for hub in forecasts {
        let series = truth
            .get(&hub.set.location)
            .ok_or_else(|| HarnessError::MissingTruth(hub.set.location.clone()))?;
        let mut hub = hub.clone();
        hub.set.rebase(series)?;
        rebased.push(hub);
    }

    let mut out = ModulatedFile::default();
    for hub in &rebased {
        let fs = &hub.set;
        let series = &truth[&fs.location];
        let origin = fs.origin_index;
        let (history, retro_cutoff) = if options.strict_realtime {
            (series.prefix(origin), origin)
        } else {
            (series.clone(), series.len())
        };
        let retro: Vec<ForecastSet> = rebased
            .iter()
            .map(|h| &h.set)
            .filter(|r| {
                r.location == fs.location
                    && r.origin_index <= origin
                    && r.origin_index + r.horizon_count() <= retro_cutoff
            })
            .cloned()
            .collect();
        let estimate = match (options.theta.fixed_theta, retro.is_empty()) {
            (Some(value), true) => ThetaEstimate {
                theta: Theta::new(value, positive_scale(&history))?,
                ..ThetaEstimate::unestimated(history.max_value())
            },
            (None, true) => {
                return Err(HarnessError::NoRetrospectiveOrigins {
                    location: fs.location.clone(),
                    forecast_date: hub.forecast_date,
                })
            }
            (_, false) => estimate_theta_from_forecasts(&history, &retro, options.mode, &options.theta)?,
        };
        let prior: f64 = series.values[..origin.min(series.len())].iter().sum();
        let modulated = modulate_forecast_set(fs, estimate.theta, options.mode, prior)?;
        out.theta_trace.push(ThetaTraceRow {
            forecast_date: hub.forecast_date,
            location: fs.location.clone(),
            estimate,
        });
        out.forecasts.push(HubForecast {
            set: modulated,
            ..hub.clone()
        });
    }
    Ok(out)
}

fn positive_scale(s: &EpidemicSeries) -> f64 {
    let m = s.max_value();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Reads both files, modulates, and writes the result in the input schema.
pub fn modulate_file(
    forecasts_path: &Path,
    truth_path: &Path,
    out_path: &Path,
    options: &ModulateFileOptions,
) -> Result<ModulatedFile, HarnessError> {
    let forecasts = ingest_hub_forecasts(forecasts_path)?;
    let truth = ingest_truth_csv(truth_path)?;
    let result = modulate_forecasts(&forecasts, &truth, options)?;
    write_hub_forecasts(out_path, &result.forecasts)?;
    Ok(result)
}
