//! Shared domain types: truth series, forecast sets and score records.
//!
//! Index convention used throughout the crate: a forecast with
//! `origin_index = T` was conditioned on `values[0..T]`, and horizon `h`
//! targets `values[T - 1 + h]`. The origin date is the date of the last
//! observation used, `values[T - 1]`.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("series is empty")]
    EmptySeries,
    #[error("negative value at index {0}")]
    NegativeValue(usize),
    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error("forecast origin {origin} lies beyond truth of length {len}")]
    OriginBeyondTruth { origin: usize, len: usize },
    #[error("horizon count must be at least 1")]
    EmptyForecast,
    #[error("trajectory length {found} does not match horizon count {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("quantile level {0} outside (0, 1)")]
    InvalidQuantileLevel(f64),
    #[error("quantile values decrease between levels at horizon {horizon}")]
    QuantileCrossing { horizon: usize },
    #[error("invalid forecast value at horizon {horizon}")]
    InvalidForecastValue { horizon: usize },
    #[error("date {date} is not on the series grid")]
    DateOffGrid { date: NaiveDate },
}

/// Observation cadence. Weekly series step by seven days from the start date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cadence {
    Daily,
    Weekly,
}

impl Cadence {
    pub fn days(self) -> i64 {
        match self {
            Cadence::Daily => 1,
            Cadence::Weekly => 7,
        }
    }

    pub fn step(self) -> Duration {
        Duration::days(self.days())
    }
}

/// Gapless, nonnegative count series for one location.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicSeries {
    pub location: String,
    pub cadence: Cadence,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl EpidemicSeries {
    /// Builds a series and validates it.
    pub fn new(
        location: impl Into<String>,
        cadence: Cadence,
        start_date: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self, DomainError> {
        validate_series(Self {
            location: location.into(),
            cadence,
            start_date,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64 * self.cadence.days())
    }

    /// Inverse of [`date_at`](Self::date_at). Dates before the start or off
    /// the cadence grid have no index.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        let step = self.cadence.days();
        if offset < 0 || offset % step != 0 {
            return None;
        }
        Some((offset / step) as usize)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.len().saturating_sub(1))
    }

    /// The first `len` observations. `len` is clamped to `1..=self.len()`.
    pub fn prefix(&self, len: usize) -> EpidemicSeries {
        let len = len.clamp(1, self.len());
        EpidemicSeries {
            location: self.location.clone(),
            cadence: self.cadence,
            start_date: self.start_date,
            values: self.values[..len].to_vec(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks every series invariant and hands the series back untouched.
pub fn validate_series(series: EpidemicSeries) -> Result<EpidemicSeries, DomainError> {
    if series.values.is_empty() {
        return Err(DomainError::EmptySeries);
    }
    for (i, &v) in series.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(DomainError::NonFiniteValue(i));
        }
        if v < 0.0 {
            return Err(DomainError::NegativeValue(i));
        }
    }
    Ok(series)
}

/// A quantile level used as a map key. Levels are compared by their bit
/// pattern after validation, which is a total order on values in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(level: f64) -> Result<Self, DomainError> {
        if level.is_finite() && level > 0.0 && level < 1.0 {
            Ok(Self(level))
        } else {
            Err(DomainError::InvalidQuantileLevel(level))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for QuantileLevel {}

impl PartialOrd for QuantileLevel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuantileLevel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A k-step point trajectory plus optional quantile trajectories issued at
/// one origin for one location.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub location: String,
    pub origin_index: usize,
    pub origin_date: NaiveDate,
    pub cadence: Cadence,
    pub point: Vec<f64>,
    pub quantiles: Option<BTreeMap<QuantileLevel, Vec<f64>>>,
}

impl ForecastSet {
    pub fn horizon_count(&self) -> usize {
        self.point.len()
    }

    pub fn target_date(&self, horizon: usize) -> NaiveDate {
        self.origin_date + Duration::days(horizon as i64 * self.cadence.days())
    }

    /// Quantile values at one horizon (1-based), ordered by level.
    pub fn quantiles_at(&self, horizon: usize) -> Vec<(f64, f64)> {
        self.quantiles
            .as_ref()
            .map(|qs| {
                qs.iter()
                    .map(|(level, values)| (level.value(), values[horizon - 1]))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Resolves `origin_index` from `origin_date` against a truth series.
    /// Forecasts read from hub files carry dates only.
    pub fn rebase(&mut self, truth: &EpidemicSeries) -> Result<(), DomainError> {
        let last = truth
            .index_of(self.origin_date)
            .ok_or(DomainError::DateOffGrid {
                date: self.origin_date,
            })?;
        self.origin_index = last + 1;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let k = self.point.len();
        if k == 0 {
            return Err(DomainError::EmptyForecast);
        }
        for (h, &v) in self.point.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(DomainError::InvalidForecastValue { horizon: h + 1 });
            }
        }
        let Some(qs) = &self.quantiles else {
            return Ok(());
        };
        for (level, values) in qs {
            QuantileLevel::new(level.value())?;
            if values.len() != k {
                return Err(DomainError::LengthMismatch {
                    expected: k,
                    found: values.len(),
                });
            }
            for (h, &v) in values.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(DomainError::InvalidForecastValue { horizon: h + 1 });
                }
            }
        }
        for h in 0..k {
            let mut prev = f64::NEG_INFINITY;
            for values in qs.values() {
                if values[h] < prev {
                    return Err(DomainError::QuantileCrossing { horizon: h + 1 });
                }
                prev = values[h];
            }
        }
        Ok(())
    }

    /// True when every horizon's quantiles are non-decreasing in level.
    pub fn is_monotone(&self) -> bool {
        match &self.quantiles {
            None => true,
            Some(qs) => (0..self.point.len()).all(|h| {
                qs.values()
                    .map(|v| v[h])
                    .collect::<Vec<_>>()
                    .windows(2)
                    .all(|w| w[0] <= w[1])
            }),
        }
    }
}

/// Evaluation of one (origin, location, horizon) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub origin_date: NaiveDate,
    pub location: String,
    pub horizon: usize,
    pub observed: f64,
    pub predicted_point: f64,
    pub absolute_error: f64,
    pub wis: Option<f64>,
    pub interval_scores: Option<BTreeMap<QuantileLevel, f64>>,
}

impl ScoreRecord {
    pub fn point(
        origin_date: NaiveDate,
        location: impl Into<String>,
        horizon: usize,
        observed: f64,
        predicted_point: f64,
    ) -> Self {
        Self {
            origin_date,
            location: location.into(),
            horizon,
            observed,
            predicted_point,
            absolute_error: (predicted_point - observed).abs(),
            wis: None,
            interval_scores: None,
        }
    }
}

/// Pairs each forecast horizon with its realized truth, stopping where the
/// truth ends. Returns `(observed, predicted)` in horizon order.
pub fn align(truth: &EpidemicSeries, fs: &ForecastSet) -> Result<Vec<(f64, f64)>, DomainError> {
    let len = truth.len();
    if fs.origin_index > len {
        return Err(DomainError::OriginBeyondTruth {
            origin: fs.origin_index,
            len,
        });
    }
    let available = (len - fs.origin_index).min(fs.horizon_count());
    Ok((0..available)
        .map(|j| (truth.values[fs.origin_index + j], fs.point[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn series(values: Vec<f64>) -> EpidemicSeries {
        EpidemicSeries {
            location: "US".into(),
            cadence: Cadence::Daily,
            start_date: date(2021, 1, 1),
            values,
        }
    }

    fn forecast(origin_index: usize, k: usize) -> ForecastSet {
        ForecastSet {
            location: "US".into(),
            origin_index,
            origin_date: date(2021, 1, 1),
            cadence: Cadence::Daily,
            point: vec![1.0; k],
            quantiles: None,
        }
    }

    #[test]
    fn validate_accepts_and_rejects() {
        let ok = series(vec![0.0, 1.0, 2.0]);
        assert_eq!(validate_series(ok.clone()).unwrap(), ok);
        assert_eq!(
            validate_series(series(vec![1.0, -3.0])),
            Err(DomainError::NegativeValue(1))
        );
        assert_eq!(validate_series(series(vec![])), Err(DomainError::EmptySeries));
        assert_eq!(
            validate_series(series(vec![1.0, f64::NAN])),
            Err(DomainError::NonFiniteValue(1))
        );
    }

    #[test]
    fn align_truncates_at_truth_end() {
        let truth = series((0..10).map(f64::from).collect());
        let pairs = align(&truth, &forecast(8, 4)).unwrap();
        assert_eq!(pairs, vec![(8.0, 1.0), (9.0, 1.0)]);
        assert!(align(&truth, &forecast(10, 4)).unwrap().is_empty());
        assert_eq!(
            align(&truth, &forecast(11, 4)),
            Err(DomainError::OriginBeyondTruth { origin: 11, len: 10 })
        );
    }

    #[test]
    fn weekly_dates_step_seven_days() {
        let mut s = series(vec![1.0; 5]);
        s.cadence = Cadence::Weekly;
        assert_eq!(s.date_at(2), date(2021, 1, 15));
        assert_eq!(s.index_of(date(2021, 1, 15)), Some(2));
        assert_eq!(s.index_of(date(2021, 1, 16)), None);
        assert_eq!(s.index_of(date(2020, 12, 25)), None);
    }

    #[test]
    fn rebase_uses_last_observed_date() {
        let truth = series(vec![1.0; 10]);
        let mut fs = forecast(0, 3);
        fs.origin_date = date(2021, 1, 5);
        fs.rebase(&truth).unwrap();
        assert_eq!(fs.origin_index, 5);
        assert_eq!(fs.target_date(1), truth.date_at(5));
    }

    #[test]
    fn forecast_validation_catches_crossing() {
        let mut fs = forecast(3, 2);
        let mut qs = BTreeMap::new();
        qs.insert(QuantileLevel::new(0.25).unwrap(), vec![1.0, 5.0]);
        qs.insert(QuantileLevel::new(0.75).unwrap(), vec![2.0, 4.0]);
        fs.quantiles = Some(qs);
        assert_eq!(fs.validate(), Err(DomainError::QuantileCrossing { horizon: 2 }));
        assert!(!fs.is_monotone());
        assert!(QuantileLevel::new(1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn valid_series_round_trip(values in prop::collection::vec(0.0f64..1e6, 1..50)) {
                let s = series(values);
                prop_assert_eq!(validate_series(s.clone()).unwrap(), s);
            }

            #[test]
            fn date_index_bijection(i in 0usize..5000, weekly in any::<bool>()) {
                let mut s = series(vec![1.0]);
                if weekly { s.cadence = Cadence::Weekly; }
                prop_assert_eq!(s.index_of(s.date_at(i)), Some(i));
            }

            #[test]
            fn align_bounded(len in 1usize..40, origin in 0usize..40, k in 1usize..30) {
                let truth = series(vec![2.0; len]);
                match align(&truth, &forecast(origin, k)) {
                    Ok(pairs) => prop_assert_eq!(pairs.len(), k.min(len - origin)),
                    Err(_) => prop_assert!(origin > len),
                }
            }
        }
    }
}
