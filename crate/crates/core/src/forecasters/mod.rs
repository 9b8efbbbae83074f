//! Peak-blind baseline forecasters and their Gaussian quantile bands.

pub mod arima;
pub mod holt;
pub mod spline;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::domain::{Cadence, DomainError, EpidemicSeries, ForecastSet, QuantileLevel};

pub use arima::{ArimaConfig, ArimaFit};
pub use holt::{HoltConfig, HoltFit};
pub use spline::{SplineConfig, SplineFit};

/// The 23 quantile levels used by the forecast hubs.
pub const HUB_QUANTILES: [f64; 23] = [
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7,
    0.75, 0.8, 0.85, 0.9, 0.95, 0.975, 0.99,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("{kind} needs at least {needed} observations, got {found}")]
    InsufficientHistory {
        kind: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("no external forecast issued at origin {0}")]
    NoExternalForecast(usize),
    #[error("quantile levels must be strictly increasing inside (0, 1)")]
    InvalidQuantileLevels,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone)]
pub enum ForecasterKind {
    Arima(ArimaConfig),
    Holt(HoltConfig),
    Spline(SplineConfig),
    /// Forecasts produced elsewhere, looked up by origin index.
    External(Arc<Vec<ForecastSet>>),
}

impl ForecasterKind {
    pub fn name(&self) -> &'static str {
        match self {
            ForecasterKind::Arima(_) => "arima",
            ForecasterKind::Holt(_) => "holt",
            ForecasterKind::Spline(_) => "spline",
            ForecasterKind::External(_) => "external",
        }
    }

    pub fn min_history(&self) -> usize {
        match self {
            ForecasterKind::Arima(_) => 10,
            ForecasterKind::Holt(_) => 4,
            ForecasterKind::Spline(_) => 8,
            ForecasterKind::External(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    pub quantile_levels: Option<Vec<f64>>,
}

impl ForecasterSpec {
    pub fn new(kind: ForecasterKind) -> Self {
        Self {
            kind,
            quantile_levels: None,
        }
    }

    pub fn arima() -> Self {
        Self::new(ForecasterKind::Arima(ArimaConfig::default()))
    }

    pub fn holt() -> Self {
        Self::new(ForecasterKind::Holt(HoltConfig::default()))
    }

    pub fn spline() -> Self {
        Self::new(ForecasterKind::Spline(SplineConfig::default()))
    }

    pub fn external(forecasts: Vec<ForecastSet>) -> Self {
        Self::new(ForecasterKind::External(Arc::new(forecasts)))
    }

    pub fn with_quantiles(mut self, levels: &[f64]) -> Self {
        self.quantile_levels = Some(levels.to_vec());
        self
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if let Some(levels) = &self.quantile_levels {
            let in_range = levels.iter().all(|&q| q > 0.0 && q < 1.0);
            let increasing = levels.windows(2).all(|w| w[0] < w[1]);
            if !in_range || !increasing {
                return Err(ForecastError::InvalidQuantileLevels);
            }
        }
        Ok(())
    }
}

impl fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

#[derive(Debug, Clone)]
pub enum FittedKind {
    Arima(ArimaFit),
    Holt(HoltFit),
    Spline(SplineFit),
    External(ForecastSet),
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ForecasterSpec,
    pub fitted: FittedKind,
    pub sigma: f64,
    pub training_len: usize,
    pub location: String,
    pub cadence: Cadence,
    pub origin_date: NaiveDate,
}

/// Fits a forecaster on the whole of `history`.
pub fn fit(spec: &ForecasterSpec, history: &EpidemicSeries) -> Result<FittedModel, ForecastError> {
    spec.validate()?;
    let n = history.len();
    let needed = spec.kind.min_history();
    if n < needed {
        return Err(ForecastError::InsufficientHistory {
            kind: spec.kind.name(),
            needed,
            found: n,
        });
    }
    let values = &history.values;
    let (fitted, sigma) = match &spec.kind {
        ForecasterKind::Arima(cfg) => {
            let f = arima::fit(values, cfg);
            let s = f.sigma();
            (FittedKind::Arima(f), s)
        }
        ForecasterKind::Holt(cfg) => {
            let f = holt::fit(values, cfg);
            let s = f.sigma(n);
            (FittedKind::Holt(f), s)
        }
        ForecasterKind::Spline(cfg) => {
            let f = spline::fit(values, cfg);
            let s = f.sigma(n);
            (FittedKind::Spline(f), s)
        }
        ForecasterKind::External(all) => {
            let fs = all
                .iter()
                .find(|fs| fs.origin_index == n && fs.location == history.location)
                .ok_or(ForecastError::NoExternalForecast(n))?;
            (FittedKind::External(fs.clone()), 0.0)
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        fitted,
        sigma: if sigma.is_finite() { sigma } else { 0.0 },
        training_len: n,
        location: history.location.clone(),
        cadence: history.cadence,
        origin_date: history.end_date(),
    })
}

impl FittedModel {
    /// Raw (unclipped) point path.
    pub fn mean_path(&self, k: usize) -> Vec<f64> {
        match &self.fitted {
            FittedKind::Arima(f) => f.predict(k),
            FittedKind::Holt(f) => f.predict(k),
            FittedKind::Spline(f) => f.predict(k),
            FittedKind::External(fs) => {
                let mut p = fs.point.clone();
                p.truncate(k);
                p
            }
        }
    }

    /// k-step forecast: point clipped at zero, and if requested, quantiles
    /// `max(0, point + z_q * sigma * sqrt(h))`.
    pub fn forecast(&self, k: usize) -> ForecastSet {
        if let FittedKind::External(fs) = &self.fitted {
            let mut out = fs.clone();
            out.point.truncate(k);
            if let Some(qs) = out.quantiles.as_mut() {
                for v in qs.values_mut() {
                    v.truncate(k);
                }
            }
            return out;
        }
        let point: Vec<f64> = self.mean_path(k).into_iter().map(|v| v.max(0.0)).collect();
        let quantiles = self.spec.quantile_levels.as_ref().map(|levels| {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            levels
                .iter()
                .map(|&q| {
                    let z = normal.inverse_cdf(q);
                    let path = point
                        .iter()
                        .enumerate()
                        .map(|(j, &m)| {
                            let spread = self.sigma * ((j + 1) as f64).sqrt();
                            (m + z * spread).max(0.0)
                        })
                        .collect();
                    (QuantileLevel::new(q).expect("validated level"), path)
                })
                .collect::<BTreeMap<_, _>>()
        });
        ForecastSet {
            location: self.location.clone(),
            origin_index: self.training_len,
            origin_date: self.origin_date,
            cadence: self.cadence,
            point,
            quantiles,
        }
    }
}
