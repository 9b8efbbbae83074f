//! Scoring rules (MAE, interval score, WIS) and base-versus-model
//! comparison tables.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDate;
use thiserror::Error;

use crate::domain::ScoreRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("no values to score")]
    EmptyInput,
    #[error("quantile levels cannot be paired into central intervals around a median")]
    AsymmetricQuantiles,
    #[error("baseline score must be positive")]
    ZeroBaseline,
    #[error("base and model runs share no (origin, location, horizon) keys")]
    NoOverlap,
    #[error("invalid interval: alpha {alpha}, lower {lower}, upper {upper}")]
    InvalidInterval { alpha: f64, lower: f64, upper: f64 },
}

/// Mean absolute error over `(observed, predicted)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64, ScoreError> {
    if pairs.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let total: f64 = pairs.iter().map(|(y, p)| (p - y).abs()).sum();
    Ok(total / pairs.len() as f64)
}

/// Central `(1 - alpha)` prediction interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSpec {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalSpec {
    pub fn new(alpha: f64, lower: f64, upper: f64) -> Result<Self, ScoreError> {
        if !(alpha > 0.0 && alpha < 1.0) || !(lower <= upper) {
            return Err(ScoreError::InvalidInterval {
                alpha,
                lower,
                upper,
            });
        }
        Ok(Self {
            alpha,
            lower,
            upper,
        })
    }
}

/// Width plus `2 / alpha` times the distance by which `y` escapes the
/// interval.
pub fn interval_score(y: f64, spec: &IntervalSpec) -> f64 {
    let width = spec.upper - spec.lower;
    if y < spec.lower {
        width + 2.0 / spec.alpha * (spec.lower - y)
    } else if y > spec.upper {
        width + 2.0 / spec.alpha * (y - spec.upper)
    } else {
        width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightConvention {
    /// `(|y - m| + sum alpha_k IS_k) / (K + 1)`, exactly as commonly typeset
    /// without the one-half weights.
    PaperLiteral,
    /// `(|y - m| / 2 + sum (alpha_k / 2) IS_k) / (K + 1/2)`.
    #[default]
    StandardHalfAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WisConfig {
    pub weight_convention: WeightConvention,
    pub includes_median: bool,
}

impl Default for WisConfig {
    fn default() -> Self {
        Self {
            weight_convention: WeightConvention::StandardHalfAlpha,
            includes_median: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WisBreakdown {
    pub wis: f64,
    pub median: Option<f64>,
    /// `(alpha, interval score)` from the widest interval inward.
    pub interval_scores: Vec<(f64, f64)>,
}

const LEVEL_TOL: f64 = 1e-9;

/// Pairs `(level, value)` quantiles into central intervals. Returns the
/// median value (if present) and the intervals.
fn central_intervals(quantiles: &[(f64, f64)]) -> Result<(Option<f64>, Vec<IntervalSpec>), ScoreError> {
    let mut qs = quantiles.to_vec();
    qs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let median = qs
        .iter()
        .find(|(q, _)| (q - 0.5).abs() < LEVEL_TOL)
        .map(|&(_, v)| v);
    let tails: Vec<(f64, f64)> = qs
        .iter()
        .copied()
        .filter(|(q, _)| (q - 0.5).abs() >= LEVEL_TOL)
        .collect();
    let n = tails.len();
    if !n.is_multiple_of(2) {
        return Err(ScoreError::AsymmetricQuantiles);
    }
    let mut intervals = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let (ql, lower) = tails[i];
        let (qu, upper) = tails[n - 1 - i];
        if ql >= 0.5 || (ql + qu - 1.0).abs() > LEVEL_TOL {
            return Err(ScoreError::AsymmetricQuantiles);
        }
        let spec = IntervalSpec::new(2.0 * ql, lower, upper)
            .map_err(|_| ScoreError::AsymmetricQuantiles)?;
        intervals.push(spec);
    }
    Ok((median, intervals))
}

/// Weighted interval score of one horizon's quantile forecast.
pub fn wis_breakdown(y: f64, quantiles: &[(f64, f64)], cfg: &WisConfig) -> Result<WisBreakdown, ScoreError> {
    let (median, intervals) = central_intervals(quantiles)?;
    if cfg.includes_median && median.is_none() {
        return Err(ScoreError::AsymmetricQuantiles);
    }
    if intervals.is_empty() && !cfg.includes_median {
        return Err(ScoreError::EmptyInput);
    }
    let scores: Vec<(f64, f64)> = intervals
        .iter()
        .map(|s| (s.alpha, interval_score(y, s)))
        .collect();
    let k = scores.len() as f64;
    let median_err = match (cfg.includes_median, median) {
        (true, Some(m)) => Some((y - m).abs()),
        _ => None,
    };
    let wis = match cfg.weight_convention {
        WeightConvention::PaperLiteral => {
            let sum: f64 = scores.iter().map(|(a, s)| a * s).sum();
            match median_err {
                Some(e) => (e + sum) / (k + 1.0),
                None => sum / k,
            }
        }
        WeightConvention::StandardHalfAlpha => {
            let sum: f64 = scores.iter().map(|(a, s)| 0.5 * a * s).sum();
            match median_err {
                Some(e) => (0.5 * e + sum) / (k + 0.5),
                None => sum / k,
            }
        }
    };
    Ok(WisBreakdown {
        wis,
        median,
        interval_scores: scores,
    })
}

pub fn wis(y: f64, quantiles: &[(f64, f64)], cfg: &WisConfig) -> Result<f64, ScoreError> {
    wis_breakdown(y, quantiles, cfg).map(|b| b.wis)
}

/// Relative reduction of `model_score` against `base_score`, in percent.
pub fn percent_improvement(base_score: f64, model_score: f64) -> Result<f64, ScoreError> {
    if !(base_score > 0.0) {
        return Err(ScoreError::ZeroBaseline);
    }
    Ok((base_score - model_score) / base_score * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Mae,
    Wis,
}

impl Metric {
    fn of(self, r: &ScoreRecord) -> Option<f64> {
        match self {
            Metric::Mae => Some(r.absolute_error),
            Metric::Wis => r.wis,
        }
    }
}

/// Subset of records to average over. Dates filter on the forecast origin
/// and are inclusive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregationWindow {
    pub label: String,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub locations: Option<Vec<String>>,
    pub horizons: Option<Vec<usize>>,
}

impl AggregationWindow {
    pub fn overall() -> Self {
        Self {
            label: "overall".to_string(),
            ..Self::default()
        }
    }

    pub fn dates(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            label: label.into(),
            start: Some(start),
            end: Some(end),
            ..Self::default()
        }
    }

    pub fn horizon(label: impl Into<String>, h: usize) -> Self {
        Self {
            label: label.into(),
            horizons: Some(vec![h]),
            ..Self::default()
        }
    }

    pub fn contains(&self, r: &ScoreRecord) -> bool {
        self.start.is_none_or(|s| r.origin_date >= s)
            && self.end.is_none_or(|e| r.origin_date <= e)
            && self
                .locations
                .as_ref()
                .is_none_or(|ls| ls.contains(&r.location))
            && self
                .horizons
                .as_ref()
                .is_none_or(|hs| hs.contains(&r.horizon))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub label: String,
    pub base_mean: f64,
    pub model_mean: f64,
    pub abs_reduction: f64,
    pub pct_improvement: Option<f64>,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
    pub unmatched_base: usize,
    pub unmatched_model: usize,
    /// Records dropped because their observed value is missing.
    pub missing_truth: usize,
}

type Key = (NaiveDate, String, usize);

fn key(r: &ScoreRecord) -> Key {
    (r.origin_date, r.location.clone(), r.horizon)
}

/// Mean score of each run over each window, restricted to keys present in
/// both runs.
pub fn aggregate(
    base: &[ScoreRecord],
    model: &[ScoreRecord],
    windows: &[AggregationWindow],
    metric: Metric,
) -> Result<AggregateTable, ScoreError> {
    let mut missing_truth = 0;
    let mut index: HashMap<Key, &ScoreRecord> = HashMap::with_capacity(model.len());
    for r in model {
        if r.observed.is_finite() {
            index.insert(key(r), r);
        } else {
            missing_truth += 1;
        }
    }
    let mut matched: Vec<(&ScoreRecord, f64, f64)> = Vec::new();
    let mut unmatched_base = 0;
    for b in base {
        if !b.observed.is_finite() {
            missing_truth += 1;
            continue;
        }
        match index.get(&key(b)) {
            Some(m) => match (metric.of(b), metric.of(m)) {
                (Some(x), Some(y)) => matched.push((b, x, y)),
                _ => unmatched_base += 1,
            },
            None => unmatched_base += 1,
        }
    }
    if matched.is_empty() {
        return Err(ScoreError::NoOverlap);
    }
    let matched_keys: HashSet<Key> = matched.iter().map(|(r, _, _)| key(r)).collect();
    let unmatched_model = index.len() - matched_keys.len();

    let rows = windows
        .iter()
        .map(|w| {
            let sel: Vec<_> = matched.iter().filter(|(r, _, _)| w.contains(r)).collect();
            let n = sel.len();
            let (bs, ms) = sel
                .iter()
                .fold((0.0, 0.0), |(a, b), (_, x, y)| (a + x, b + y));
            let (base_mean, model_mean) = if n > 0 {
                (bs / n as f64, ms / n as f64)
            } else {
                (f64::NAN, f64::NAN)
            };
            AggregateRow {
                label: w.label.clone(),
                base_mean,
                model_mean,
                abs_reduction: base_mean - model_mean,
                pct_improvement: percent_improvement(base_mean, model_mean).ok(),
                n_records: n,
            }
        })
        .collect();
    Ok(AggregateTable {
        rows,
        unmatched_base,
        unmatched_model,
        missing_truth,
    })
}

/// Mean base and model score grouped by an arbitrary key, for plot-ready
/// per-date, per-horizon and per-location summaries.
pub fn grouped_means<K, F>(
    base: &[ScoreRecord],
    model: &[ScoreRecord],
    metric: Metric,
    group: F,
) -> BTreeMap<K, (f64, f64, usize)>
where
    K: Ord,
    F: Fn(&ScoreRecord) -> K,
{
    let index: HashMap<Key, &ScoreRecord> = model.iter().map(|r| (key(r), r)).collect();
    let mut acc: BTreeMap<K, (f64, f64, usize)> = BTreeMap::new();
    for b in base {
        let Some(m) = index.get(&key(b)) else { continue };
        let (Some(x), Some(y)) = (metric.of(b), metric.of(m)) else {
            continue;
        };
        if !b.observed.is_finite() {
            continue;
        }
        let e = acc.entry(group(b)).or_insert((0.0, 0.0, 0));
        e.0 += x;
        e.1 += y;
        e.2 += 1;
    }
    for v in acc.values_mut() {
        v.0 /= v.2 as f64;
        v.1 /= v.2 as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 1, d).unwrap()
    }

    #[test]
    fn mae_arithmetic() {
        assert_eq!(mae(&[(10.0, 12.0), (20.0, 16.0)]).unwrap(), 3.0);
        assert_eq!(mae(&[(20.0, 16.0), (10.0, 12.0)]).unwrap(), 3.0);
        assert_eq!(mae(&[(5.0, 5.0)]).unwrap(), 0.0);
        assert_eq!(mae(&[]), Err(ScoreError::EmptyInput));
    }

    #[test]
    fn interval_score_branches() {
        let s = IntervalSpec::new(0.2, 5.0, 10.0).unwrap();
        assert_eq!(interval_score(7.0, &s), 5.0);
        assert_eq!(interval_score(12.0, &s), 25.0);
        assert_eq!(interval_score(4.0, &s), 15.0);
    }

    #[test]
    fn interval_score_is_continuous_at_bounds() {
        let s = IntervalSpec::new(0.1, 2.0, 3.0).unwrap();
        for b in [2.0, 3.0] {
            let left = interval_score(b - 1e-12, &s);
            let right = interval_score(b + 1e-12, &s);
            assert!((left - interval_score(b, &s)).abs() < 1e-9);
            assert!((right - interval_score(b, &s)).abs() < 1e-9);
        }
    }

    #[test]
    fn wis_hand_examples() {
        let q = [(0.1, 5.0), (0.5, 8.0), (0.9, 10.0)];
        let literal = WisConfig {
            weight_convention: WeightConvention::PaperLiteral,
            includes_median: true,
        };
        assert!((wis(8.0, &q, &literal).unwrap() - 0.5).abs() < 1e-12);
        assert!((wis(8.0, &q, &WisConfig::default()).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let flat = [(0.1, 8.0), (0.5, 8.0), (0.9, 8.0)];
        assert_eq!(wis(8.0, &flat, &literal).unwrap(), 0.0);
        assert_eq!(wis(8.0, &flat, &WisConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn wis_median_only_is_absolute_error() {
        let q = [(0.5, 3.0)];
        for convention in [WeightConvention::PaperLiteral, WeightConvention::StandardHalfAlpha] {
            let cfg = WisConfig {
                weight_convention: convention,
                includes_median: true,
            };
            assert_eq!(wis(7.5, &q, &cfg).unwrap(), 4.5);
        }
    }

    #[test]
    fn wis_rejects_unpaired_levels() {
        let q = [(0.1, 1.0), (0.5, 2.0), (0.8, 3.0)];
        assert_eq!(wis(2.0, &q, &WisConfig::default()), Err(ScoreError::AsymmetricQuantiles));
        let no_median = [(0.1, 1.0), (0.9, 3.0)];
        assert_eq!(
            wis(2.0, &no_median, &WisConfig::default()),
            Err(ScoreError::AsymmetricQuantiles)
        );
    }

    #[test]
    fn percent_improvement_arithmetic() {
        assert_eq!(percent_improvement(10.0, 9.0).unwrap(), 10.0);
        assert_eq!(percent_improvement(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(percent_improvement(0.0, 1.0), Err(ScoreError::ZeroBaseline));
        // 4.7 absolute at 12.5% implies a baseline near 37.6.
        let base = 4.7 / 0.125;
        assert!((percent_improvement(base, base - 4.7).unwrap() - 12.5).abs() < 1e-9);
        assert!((base - 37.6).abs() < 1e-9);
        for (b, m) in [(3.0, 1.7), (0.3, 0.9), (1e4, 12.0)] {
            let pi = percent_improvement(b, m).unwrap();
            assert!((pi - 100.0 * (1.0 - m / b)).abs() <= 1e-12 * pi.abs().max(1.0));
        }
    }

    fn rec(d: u32, loc: &str, h: usize, err: f64) -> ScoreRecord {
        ScoreRecord::point(date(d), loc, h, 10.0, 10.0 + err)
    }

    #[test]
    fn aggregate_windows() {
        let base = vec![rec(1, "a", 1, 2.0), rec(1, "a", 4, 4.0), rec(8, "b", 4, 6.0)];
        let model = vec![rec(1, "a", 1, 1.0), rec(1, "a", 4, 4.0), rec(8, "b", 4, 3.0)];
        let windows = vec![
            AggregationWindow::overall(),
            AggregationWindow::horizon("h4", 4),
            AggregationWindow::dates("early", date(1), date(2)),
        ];
        let t = aggregate(&base, &model, &windows, Metric::Mae).unwrap();
        assert_eq!(t.rows[0].n_records, 3);
        assert_eq!(t.rows[0].base_mean, 4.0);
        assert_eq!(t.rows[1].n_records, 2);
        assert_eq!(t.rows[1].base_mean, 5.0);
        assert_eq!(t.rows[1].model_mean, 3.5);
        assert_eq!(t.rows[2].n_records, 2);

        let identical = aggregate(&base, &base, &windows, Metric::Mae).unwrap();
        assert!(identical.rows.iter().all(|r| r.pct_improvement == Some(0.0)));

        let single = aggregate(&base[..1], &model[..1], &windows[..1], Metric::Mae).unwrap();
        assert_eq!(single.rows[0].pct_improvement, Some(50.0));
    }

    #[test]
    fn aggregate_reports_mismatches() {
        let base = vec![rec(1, "a", 1, 2.0), rec(2, "a", 1, 2.0)];
        let model = vec![rec(1, "a", 1, 1.0), rec(3, "a", 1, 1.0)];
        let t = aggregate(&base, &model, &[AggregationWindow::overall()], Metric::Mae).unwrap();
        assert_eq!(t.unmatched_base, 1);
        assert_eq!(t.unmatched_model, 1);
        assert_eq!(
            aggregate(&base[1..], &model[1..], &[AggregationWindow::overall()], Metric::Mae),
            Err(ScoreError::NoOverlap)
        );
    }
}
