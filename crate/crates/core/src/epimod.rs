//! Epimodulation: scaling a forecast trajectory by a susceptible-depletion
//! factor `exp(-theta * forecast burden)`, and estimating `theta` by
//! rolling-origin cross-validation of the base forecaster's past errors.
//!
//! `theta` is stored as a raw value together with a scale (the largest
//! observed count at estimation time); the exponent uses
//! `theta' = value / scale` so that the search interval does not depend on
//! the magnitude of the counts.

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{DomainError, EpidemicSeries, ForecastSet};
use crate::forecasters::{self, ForecastError, ForecasterSpec};
use crate::optim::golden_section;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModulationError {
    #[error("forecast value at horizon {0} is negative or non-finite")]
    NegativeForecastInput(usize),
    #[error("theta must be finite and >= 0 with a positive scale")]
    InvalidTheta,
    #[error("forecast set carries no quantiles")]
    NoQuantiles,
    #[error("forecast origin {origin} plus {k} horizons runs past truth of length {len}")]
    OriginBeyondTruth { origin: usize, k: usize, len: usize },
    #[error("truth of length {len} admits no forecast origin (needs {needed})")]
    InsufficientHistory { len: usize, needed: usize },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub value: f64,
    pub scale: f64,
}

impl Theta {
    pub const ZERO: Theta = Theta {
        value: 0.0,
        scale: 1.0,
    };

    pub fn new(value: f64, scale: f64) -> Result<Self, ModulationError> {
        let theta = Self { value, scale };
        theta.validate()?;
        Ok(theta)
    }

    /// Theta acting directly on raw counts.
    pub fn raw(scaled: f64) -> Self {
        Self {
            value: scaled,
            scale: 1.0,
        }
    }

    /// The rate applied to raw counts in the exponent.
    pub fn scaled(&self) -> f64 {
        self.value / self.scale
    }

    fn validate(&self) -> Result<(), ModulationError> {
        let ok = self.value.is_finite()
            && self.value >= 0.0
            && self.scale.is_finite()
            && self.scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModulationError::InvalidTheta)
        }
    }
}

/// How the forecast burden in the exponent accumulates across horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Horizon `j` uses the running sum of forecasts through `j`.
    #[default]
    Cumulative,
    /// Every horizon uses the sum over the whole forecast window.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModulationMode {
    pub window: Window,
    /// Adds the observed counts before the origin to the burden.
    pub include_history: bool,
}

impl ModulationMode {
    pub fn cumulative() -> Self {
        Self::default()
    }

    pub fn total() -> Self {
        Self {
            window: Window::Total,
            include_history: false,
        }
    }
}

/// Exponent sums per horizon, before multiplying by theta.
fn burdens(point: &[f64], window: Window, prior: f64) -> Vec<f64> {
    match window {
        Window::Cumulative => {
            let mut acc = prior;
            point
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        }
        Window::Total => {
            let total = prior + point.iter().sum::<f64>();
            vec![total; point.len()]
        }
    }
}

fn check_nonnegative(point: &[f64]) -> Result<(), ModulationError> {
    match point.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(j) => Err(ModulationError::NegativeForecastInput(j + 1)),
        None => Ok(()),
    }
}

/// Modulates a point trajectory. `history_burden` is ignored unless the
/// mode includes history.
pub fn modulate_with_history(
    point: &[f64],
    theta: Theta,
    mode: ModulationMode,
    history_burden: f64,
) -> Result<Vec<f64>, ModulationError> {
    check_nonnegative(point)?;
    theta.validate()?;
    if theta.value == 0.0 {
        return Ok(point.to_vec());
    }
    let rate = theta.scaled();
    let prior = if mode.include_history {
        history_burden
    } else {
        0.0
    };
    Ok(point
        .iter()
        .zip(burdens(point, mode.window, prior))
        .map(|(v, b)| v * (-rate * b).exp())
        .collect())
}

pub fn modulate(point: &[f64], theta: Theta, mode: ModulationMode) -> Result<Vec<f64>, ModulationError> {
    modulate_with_history(point, theta, mode, 0.0)
}

/// Modulates the point and every quantile trajectory (each with its own
/// burden), then sorts each horizon's quantile values so levels stay
/// monotone.
pub fn modulate_quantiles(
    fs: &ForecastSet,
    theta: Theta,
    mode: ModulationMode,
) -> Result<ForecastSet, ModulationError> {
    if fs.quantiles.is_none() {
        return Err(ModulationError::NoQuantiles);
    }
    modulate_forecast_set(fs, theta, mode, 0.0)
}

/// Like [`modulate_quantiles`] but also accepts point-only sets.
pub fn modulate_forecast_set(
    fs: &ForecastSet,
    theta: Theta,
    mode: ModulationMode,
    history_burden: f64,
) -> Result<ForecastSet, ModulationError> {
    let mut out = fs.clone();
    out.point = modulate_with_history(&fs.point, theta, mode, history_burden)?;
    if let Some(qs) = out.quantiles.as_mut() {
        for values in qs.values_mut() {
            *values = modulate_with_history(values, theta, mode, history_burden)?;
        }
        for h in 0..fs.horizon_count() {
            let mut column: Vec<f64> = qs.values().map(|v| v[h]).collect();
            column.sort_by(f64::total_cmp);
            for (values, sorted) in qs.values_mut().zip(column) {
                values[h] = sorted;
            }
        }
    }
    Ok(out)
}

/// Flattened (forecast, burden, observed) triples for every horizon of
/// every retrospective forecast. The objective is evaluated many times per
/// estimate, so it is laid out once.
#[derive(Debug, Clone, Default)]
struct ErrorTerms {
    forecast: Vec<f64>,
    burden: Vec<f64>,
    observed: Vec<f64>,
}

impl ErrorTerms {
    fn build(
        truth: &EpidemicSeries,
        forecasts: &[ForecastSet],
        mode: ModulationMode,
    ) -> Result<Self, ModulationError> {
        let mut terms = ErrorTerms::default();
        let len = truth.len();
        for fs in forecasts {
            let k = fs.horizon_count();
            if fs.origin_index + k > len {
                return Err(ModulationError::OriginBeyondTruth {
                    origin: fs.origin_index,
                    k,
                    len,
                });
            }
            check_nonnegative(&fs.point)?;
            let prior = if mode.include_history {
                truth.values[..fs.origin_index].iter().sum()
            } else {
                0.0
            };
            terms.forecast.extend_from_slice(&fs.point);
            terms.burden.extend(burdens(&fs.point, mode.window, prior));
            terms
                .observed
                .extend_from_slice(&truth.values[fs.origin_index..fs.origin_index + k]);
        }
        Ok(terms)
    }

    fn sse(&self, rate: f64) -> f64 {
        if rate == 0.0 {
            return self
                .forecast
                .iter()
                .zip(&self.observed)
                .map(|(f, y)| (f - y) * (f - y))
                .sum();
        }
        self.forecast
            .iter()
            .zip(&self.burden)
            .zip(&self.observed)
            .map(|((f, b), y)| {
                let e = f * (-rate * b).exp() - y;
                e * e
            })
            .sum()
    }
}

/// Sum over origins and horizons of squared error between the modulated
/// retrospective forecasts and the truth. Every forecast must be fully
/// covered by the truth.
pub fn prediction_error(
    truth: &EpidemicSeries,
    forecasts: &[ForecastSet],
    theta: Theta,
    mode: ModulationMode,
) -> Result<f64, ModulationError> {
    theta.validate()?;
    let terms = ErrorTerms::build(truth, forecasts, mode)?;
    Ok(terms.sse(theta.scaled()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptions {
    /// Skip the search and report diagnostics for this theta value
    /// (expressed in the same units as [`Theta::value`]).
    pub fixed_theta: Option<f64>,
    /// The scaled search interval is `[0, bracket_multiplier / max(truth)]`.
    pub bracket_multiplier: f64,
    pub coarse_points: usize,
    /// Number of coarse-grid brackets refined by golden-section search.
    pub restarts: usize,
    pub xtol: f64,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self {
            fixed_theta: None,
            bracket_multiplier: 10.0,
            coarse_points: 64,
            restarts: 3,
            xtol: 1e-12,
        }
    }
}

impl ThetaOptions {
    pub fn fixed(value: f64) -> Self {
        Self {
            fixed_theta: Some(value),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub theta: Theta,
    pub objective_at_optimum: f64,
    pub objective_at_zero: f64,
    pub origins_used: usize,
    /// Search interval for the scaled rate `theta.value / theta.scale`.
    pub bracket: (f64, f64),
}

impl ThetaEstimate {
    /// Estimate reported when no retrospective origin exists yet.
    pub fn unestimated(scale: f64) -> Self {
        Self {
            theta: Theta {
                value: 0.0,
                scale: if scale > 0.0 { scale } else { 1.0 },
            },
            objective_at_optimum: 0.0,
            objective_at_zero: 0.0,
            origins_used: 0,
            bracket: (0.0, 0.0),
        }
    }
}

/// Minimizes the cross-validated prediction error over theta using the
/// given retrospective forecasts, which must all be fully realized in
/// `truth`. The scale is the largest value in `truth`.
pub fn estimate_theta_from_forecasts(
    truth: &EpidemicSeries,
    forecasts: &[ForecastSet],
    mode: ModulationMode,
    options: &ThetaOptions,
) -> Result<ThetaEstimate, ModulationError> {
    let max = truth.max_value();
    let scale = if max > 0.0 { max } else { 1.0 };
    let terms = ErrorTerms::build(truth, forecasts, mode)?;
    let upper = options.bracket_multiplier / scale;
    let objective_at_zero = terms.sse(0.0);

    if let Some(value) = options.fixed_theta {
        let theta = Theta::new(value, scale)?;
        return Ok(ThetaEstimate {
            theta,
            objective_at_optimum: terms.sse(theta.scaled()),
            objective_at_zero,
            origins_used: forecasts.len(),
            bracket: (theta.scaled(), theta.scaled()),
        });
    }

    let rate = minimize_rate(|r| terms.sse(r), upper, options);
    let objective = terms.sse(rate);
    let (rate, objective) = if objective < objective_at_zero * (1.0 - 1e-10) {
        (rate, objective)
    } else {
        (0.0, objective_at_zero)
    };
    Ok(ThetaEstimate {
        theta: Theta {
            value: rate * scale,
            scale,
        },
        objective_at_optimum: objective,
        objective_at_zero,
        origins_used: forecasts.len(),
        bracket: (0.0, upper),
    })
}

/// Coarse grid over `[0, upper]`, then golden-section refinement of the
/// brackets around the best few grid points.
fn minimize_rate<F: Fn(f64) -> f64>(f: F, upper: f64, options: &ThetaOptions) -> f64 {
    if !(upper > 0.0) {
        return 0.0;
    }
    let n = options.coarse_points.max(3);
    let grid: Vec<f64> = (0..n).map(|i| upper * i as f64 / (n - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();

    // Prefer local minima of the grid; the best of them seeds the search.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] <= values[i - 1];
            let right = i == n - 1 || values[i] <= values[i + 1];
            left && right
        })
        .collect();
    candidates.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    candidates.truncate(options.restarts.max(1));

    let mut best = (0.0, values[0]);
    for i in candidates {
        if values[i] < best.1 {
            best = (grid[i], values[i]);
        }
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(n - 1)];
        let m = golden_section(&f, lo, hi, options.xtol * upper.max(1e-300), 200);
        if m.value < best.1 {
            best = (m.x, m.value);
        }
    }
    best.0
}

/// Fits `spec` at every origin in `origins` on the truth prefix and returns
/// the k-step forecasts. Origins where fitting fails are skipped.
pub fn retrospective_forecasts(
    truth: &EpidemicSeries,
    spec: &ForecasterSpec,
    k: usize,
    origins: std::ops::RangeInclusive<usize>,
) -> Vec<ForecastSet> {
    let origins: Vec<usize> = origins.collect();
    origins
        .par_iter()
        .filter_map(|&t| {
            let model = forecasters::fit(spec, &truth.prefix(t)).ok()?;
            let fs = model.forecast(k);
            (fs.horizon_count() == k).then_some(fs)
        })
        .collect()
}

/// Cross-validated theta for `spec` on `truth`: forecasts are made at every
/// admissible origin `min_history..=len - k` and the modulated error is
/// minimized over theta.
pub fn estimate_theta(
    truth: &EpidemicSeries,
    spec: &ForecasterSpec,
    k: usize,
    mode: ModulationMode,
    options: &ThetaOptions,
) -> Result<ThetaEstimate, ModulationError> {
    let min = spec.kind.min_history();
    let len = truth.len();
    if k == 0 || len < min + k {
        return Err(ModulationError::InsufficientHistory {
            len,
            needed: min + k,
        });
    }
    let forecasts = retrospective_forecasts(truth, spec, k, min..=len - k);
    if forecasts.is_empty() {
        return Err(ModulationError::InsufficientHistory {
            len,
            needed: min + k,
        });
    }
    estimate_theta_from_forecasts(truth, &forecasts, mode, options)
}
