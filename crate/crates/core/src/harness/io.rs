//! CSV ingestion and emission: truth series, hub-format forecasts, score
//! records, aggregate tables, theta traces and plot-ready reports.
//!
//! Every emitted float uses fixed six-decimal formatting so that repeated
//! runs produce identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate};

use super::backtest::ThetaTraceRow;
use super::HarnessError;
use crate::domain::{Cadence, EpidemicSeries, ForecastSet, QuantileLevel, ScoreRecord};
use crate::scoring::{AggregateTable, Metric};

pub const TRUTH_HEADER: [&str; 3] = ["date", "location", "value"];
pub const HUB_HEADER: [&str; 7] = [
    "forecast_date",
    "target",
    "target_end_date",
    "location",
    "type",
    "quantile",
    "value",
];
pub const THETA_HEADER: [&str; 7] = [
    "forecast_date",
    "location",
    "theta",
    "theta_scaled",
    "objective_zero",
    "objective_opt",
    "origins_used",
];
pub const SCORE_HEADER: [&str; 7] = [
    "origin_date",
    "location",
    "horizon",
    "observed",
    "predicted",
    "absolute_error",
    "wis",
];

pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn open_writer(path: &Path) -> Result<csv::Writer<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Column positions of `names` in the header, failing on the first missing one.
fn columns<const N: usize>(
    reader: &mut csv::Reader<File>,
    names: [&str; N],
) -> Result<[usize; N], HarnessError> {
    let headers = reader.headers()?.clone();
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })?;
    }
    Ok(out)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate, HarnessError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| HarnessError::Parse {
        line,
        message: format!("invalid date `{s}`"),
    })
}

fn parse_value(s: &str, line: u64) -> Result<f64, HarnessError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(HarnessError::Parse {
            line,
            message: format!("invalid value `{s}`"),
        }),
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

/// Reads a `date,location,value` file into one gapless series per location.
///
/// Rows of a location must appear in increasing date order. Empty or `NA`
/// values and dates missing from the cadence grid are gaps: interior gaps
/// are linearly interpolated (with a warning), leading and trailing gaps
/// are dropped. The cadence is weekly when every step is a multiple of
/// seven days, daily otherwise.
pub fn ingest_truth_csv(path: &Path) -> Result<BTreeMap<String, EpidemicSeries>, HarnessError> {
    let mut reader = open_reader(path)?;
    let [c_date, c_loc, c_value] = columns(&mut reader, TRUTH_HEADER)?;
    let mut rows: BTreeMap<String, Vec<(NaiveDate, Option<f64>, u64)>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let date = parse_date(&rec[c_date], line)?;
        let location = rec[c_loc].to_string();
        let raw = &rec[c_value];
        let value = if is_missing(raw) {
            None
        } else {
            Some(parse_value(raw, line)?)
        };
        if !seen.insert((date, location.clone())) {
            return Err(HarnessError::Parse {
                line,
                message: format!("duplicate row for {location} on {date}"),
            });
        }
        let entries = rows.entry(location.clone()).or_default();
        if entries.last().is_some_and(|(prev, _, _)| *prev >= date) {
            return Err(HarnessError::NonMonotoneDates(location));
        }
        entries.push((date, value, line));
    }
    let mut out = BTreeMap::new();
    for (location, entries) in rows {
        if let Some(series) = assemble_series(&location, &entries)? {
            out.insert(location, series);
        }
    }
    Ok(out)
}

fn assemble_series(
    location: &str,
    entries: &[(NaiveDate, Option<f64>, u64)],
) -> Result<Option<EpidemicSeries>, HarnessError> {
    let observed: Vec<_> = entries.iter().filter(|e| e.1.is_some()).collect();
    let (Some(first), Some(last)) = (observed.first(), observed.last()) else {
        log::warn!("{location}: no observed values, dropped");
        return Ok(None);
    };
    let gaps: Vec<i64> = entries.windows(2).map(|w| (w[1].0 - w[0].0).num_days()).collect();
    let cadence = if !gaps.is_empty() && gaps.iter().all(|g| g % 7 == 0) {
        Cadence::Weekly
    } else {
        Cadence::Daily
    };
    let step = cadence.days();
    let n = ((last.0 - first.0).num_days() / step) as usize + 1;
    let mut values: Vec<Option<f64>> = vec![None; n];
    for &(date, value, line) in entries {
        if date < first.0 || date > last.0 {
            continue;
        }
        let offset = (date - first.0).num_days();
        if offset % step != 0 {
            return Err(HarnessError::Parse {
                line,
                message: format!("date {date} is off the {cadence:?} grid"),
            });
        }
        values[(offset / step) as usize] = value;
    }
    let filled = values.iter().filter(|v| v.is_none()).count();
    if filled > 0 {
        log::warn!("{location}: interpolated {filled} missing value(s)");
    }
    let values = interpolate(&values);
    let series = EpidemicSeries::new(location, cadence, first.0, values)?;
    Ok(Some(series))
}

/// Linear interpolation across interior `None`s; both ends must be `Some`.
fn interpolate(values: &[Option<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut last_known = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            let prev = values[last_known].unwrap_or(v);
            let span = (i - last_known) as f64;
            for (j, slot) in out.iter_mut().enumerate().take(i).skip(last_known + 1) {
                let w = (j - last_known) as f64 / span;
                *slot = prev + w * (v - prev);
            }
            out[i] = v;
            last_known = i;
        }
    }
    out
}

pub fn write_truth_csv<'a>(
    path: &Path,
    series: impl IntoIterator<Item = &'a EpidemicSeries>,
) -> Result<(), HarnessError> {
    let mut w = open_writer(path)?;
    w.write_record(TRUTH_HEADER)?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([s.date_at(i).to_string(), s.location.clone(), fmt6(*v)])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// A forecast set as it appears in a hub file.
#[derive(Debug, Clone, PartialEq)]
pub struct HubForecast {
    /// Submission date, which may differ from the origin date.
    pub forecast_date: NaiveDate,
    /// Whether the file carried explicit point rows for this set.
    pub has_point_rows: bool,
    pub set: ForecastSet,
}

impl HubForecast {
    /// Wraps a set produced in-house, dated at its origin.
    pub fn from_set(set: ForecastSet) -> Self {
        Self {
            forecast_date: set.origin_date,
            has_point_rows: true,
            set,
        }
    }
}

/// Parses `"<N> day ahead inc hosp"` or `"<N> wk ahead inc hosp"`.
pub fn parse_target(target: &str) -> Option<(usize, Cadence)> {
    let mut parts = target.split_whitespace();
    let h: usize = parts.next()?.parse().ok().filter(|&h| h >= 1)?;
    let cadence = match parts.next()? {
        "day" => Cadence::Daily,
        "wk" => Cadence::Weekly,
        _ => return None,
    };
    let rest: Vec<&str> = parts.collect();
    (rest == ["ahead", "inc", "hosp"]).then_some((h, cadence))
}

pub fn format_target(h: usize, cadence: Cadence) -> String {
    let unit = match cadence {
        Cadence::Daily => "day",
        Cadence::Weekly => "wk",
    };
    format!("{h} {unit} ahead inc hosp")
}

#[derive(Default)]
struct HubGroup {
    cadence: Option<Cadence>,
    /// horizon -> (target_end_date, point, level -> value)
    horizons: BTreeMap<usize, (NaiveDate, Option<f64>, BTreeMap<QuantileLevel, f64>)>,
}

/// Reads hub-format rows and groups them by `(forecast_date, location)`.
///
/// The origin date is one period before the 1-step target end date. Point
/// values fall back to the 0.5 quantile when a set has no point rows.
/// Quantile crossings are repaired by sorting each horizon.
pub fn ingest_hub_forecasts(path: &Path) -> Result<Vec<HubForecast>, HarnessError> {
    let mut reader = open_reader(path)?;
    let [c_fd, c_target, c_end, c_loc, c_type, c_q, c_value] = columns(&mut reader, HUB_HEADER)?;
    let mut groups: BTreeMap<(NaiveDate, String), HubGroup> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let forecast_date = parse_date(&rec[c_fd], line)?;
        let target = &rec[c_target];
        let (h, cadence) = parse_target(target).ok_or_else(|| HarnessError::UnparseableTarget {
            line,
            target: target.to_string(),
        })?;
        let end = parse_date(&rec[c_end], line)?;
        let location = rec[c_loc].to_string();
        let value = parse_value(&rec[c_value], line)?;
        let inconsistent = || HarnessError::InconsistentHorizons {
            forecast_date,
            location: location.clone(),
        };
        let group = groups.entry((forecast_date, location.clone())).or_default();
        if *group.cadence.get_or_insert(cadence) != cadence {
            return Err(inconsistent());
        }
        let slot = group
            .horizons
            .entry(h)
            .or_insert_with(|| (end, None, BTreeMap::new()));
        if slot.0 != end {
            return Err(inconsistent());
        }
        match &rec[c_type] {
            "point" => {
                if slot.1.replace(value).is_some() {
                    return Err(HarnessError::Parse {
                        line,
                        message: "duplicate point row".to_string(),
                    });
                }
            }
            "quantile" => {
                let level = rec[c_q]
                    .parse::<f64>()
                    .ok()
                    .and_then(|q| QuantileLevel::new(q).ok())
                    .ok_or_else(|| HarnessError::Parse {
                        line,
                        message: format!("invalid quantile level `{}`", &rec[c_q]),
                    })?;
                if slot.2.insert(level, value).is_some() {
                    return Err(HarnessError::Parse {
                        line,
                        message: "duplicate quantile row".to_string(),
                    });
                }
            }
            other => {
                return Err(HarnessError::Parse {
                    line,
                    message: format!("unknown row type `{other}`"),
                })
            }
        }
    }
    let mut repaired = 0;
    let mut out = Vec::with_capacity(groups.len());
    for ((forecast_date, location), group) in groups {
        let (hub, n) = assemble_hub(forecast_date, location, group)?;
        repaired += n;
        out.push(hub);
    }
    if repaired > 0 {
        log::warn!("{}: repaired quantile crossing at {repaired} horizon(s)", path.display());
    }
    Ok(out)
}

fn assemble_hub(
    forecast_date: NaiveDate,
    location: String,
    group: HubGroup,
) -> Result<(HubForecast, usize), HarnessError> {
    let inconsistent = || HarnessError::InconsistentHorizons {
        forecast_date,
        location: location.clone(),
    };
    let cadence = group.cadence.ok_or_else(inconsistent)?;
    let k = group.horizons.len();
    if group.horizons.keys().copied().ne(1..=k) {
        return Err(inconsistent());
    }
    let origin_date = group.horizons[&1].0 - cadence.step();
    let levels: Vec<QuantileLevel> = group.horizons[&1].2.keys().copied().collect();
    let has_point_rows = group.horizons[&1].1.is_some();
    let mut point = Vec::with_capacity(k);
    let mut quantiles: BTreeMap<QuantileLevel, Vec<f64>> =
        levels.iter().map(|&l| (l, Vec::with_capacity(k))).collect();
    let mut repaired = 0;
    for (&h, (end, p, qs)) in &group.horizons {
        let expected_end = origin_date + Duration::days(h as i64 * cadence.days());
        let same_levels = qs.keys().eq(levels.iter());
        if *end != expected_end || !same_levels || p.is_some() != has_point_rows {
            return Err(inconsistent());
        }
        let mut column: Vec<f64> = qs.values().copied().collect();
        if column.windows(2).any(|w| w[0] > w[1]) {
            column.sort_by(f64::total_cmp);
            repaired += 1;
        }
        for (l, v) in levels.iter().zip(&column) {
            quantiles.get_mut(l).expect("level present").push(*v);
        }
        let median = levels
            .iter()
            .position(|l| (l.value() - 0.5).abs() < 1e-9)
            .map(|i| column[i]);
        point.push(p.or(median).ok_or_else(inconsistent)?);
    }
    let set = ForecastSet {
        location,
        origin_index: 0,
        origin_date,
        cadence,
        point,
        quantiles: (!levels.is_empty()).then_some(quantiles),
    };
    Ok((
        HubForecast {
            forecast_date,
            has_point_rows,
            set,
        },
        repaired,
    ))
}

/// Writes hub rows sorted by forecast date, location, horizon, then point
/// before quantiles in increasing level.
pub fn write_hub_forecasts(path: &Path, forecasts: &[HubForecast]) -> Result<(), HarnessError> {
    let mut sorted: Vec<&HubForecast> = forecasts.iter().collect();
    sorted.sort_by(|a, b| {
        (a.forecast_date, &a.set.location).cmp(&(b.forecast_date, &b.set.location))
    });
    let mut w = open_writer(path)?;
    w.write_record(HUB_HEADER)?;
    for hub in sorted {
        let fs = &hub.set;
        let fd = hub.forecast_date.to_string();
        for h in 1..=fs.horizon_count() {
            let target = format_target(h, fs.cadence);
            let end = fs.target_date(h).to_string();
            if hub.has_point_rows || fs.quantiles.is_none() {
                w.write_record([
                    fd.as_str(),
                    &target,
                    &end,
                    &fs.location,
                    "point",
                    "",
                    &fmt6(fs.point[h - 1]),
                ])?;
            }
            for (level, value) in fs.quantiles_at(h) {
                w.write_record([
                    fd.as_str(),
                    &target,
                    &end,
                    &fs.location,
                    "quantile",
                    &level.to_string(),
                    &fmt6(value),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn opt6(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

pub fn write_score_records(path: &Path, records: &[ScoreRecord]) -> Result<(), HarnessError> {
    let mut sorted: Vec<&ScoreRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.origin_date, &a.location, a.horizon).cmp(&(b.origin_date, &b.location, b.horizon))
    });
    let mut w = open_writer(path)?;
    w.write_record(SCORE_HEADER)?;
    for r in sorted {
        w.write_record([
            r.origin_date.to_string(),
            r.location.clone(),
            r.horizon.to_string(),
            fmt6(r.observed),
            fmt6(r.predicted_point),
            fmt6(r.absolute_error),
            opt6(r.wis),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_score_records(path: &Path) -> Result<Vec<ScoreRecord>, HarnessError> {
    let mut reader = open_reader(path)?;
    let [c_date, c_loc, c_h, c_obs, c_pred, c_ae, c_wis] = columns(&mut reader, SCORE_HEADER)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let num = |i: usize| -> Result<f64, HarnessError> {
            rec[i].parse::<f64>().map_err(|_| HarnessError::Parse {
                line,
                message: format!("invalid number `{}`", &rec[i]),
            })
        };
        let horizon = rec[c_h].parse::<usize>().map_err(|_| HarnessError::Parse {
            line,
            message: format!("invalid horizon `{}`", &rec[c_h]),
        })?;
        let mut r = ScoreRecord::point(
            parse_date(&rec[c_date], line)?,
            &rec[c_loc],
            horizon,
            num(c_obs)?,
            num(c_pred)?,
        );
        r.absolute_error = num(c_ae)?;
        r.wis = if rec[c_wis].is_empty() {
            None
        } else {
            Some(num(c_wis)?)
        };
        out.push(r);
    }
    Ok(out)
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Mae => "mae",
        Metric::Wis => "wis",
    }
}

/// Renders an aggregate table as CSV text.
pub fn score_table_csv(model: &str, table: &AggregateTable, metric: Metric) -> Result<String, HarnessError> {
    let m = metric_name(metric);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "window".to_string(),
        "model".to_string(),
        format!("base_{m}"),
        format!("model_{m}"),
        "abs_reduction".to_string(),
        "pct_improvement".to_string(),
        "n_records".to_string(),
    ])?;
    for row in &table.rows {
        w.write_record([
            row.label.clone(),
            model.to_string(),
            fmt6(row.base_mean),
            fmt6(row.model_mean),
            fmt6(row.abs_reduction),
            opt6(row.pct_improvement),
            row.n_records.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::io(Path::new("<memory>"), e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_score_table(
    path: &Path,
    model: &str,
    table: &AggregateTable,
    metric: Metric,
) -> Result<(), HarnessError> {
    write_text(path, &score_table_csv(model, table, metric)?)
}

pub fn write_theta_trace(path: &Path, rows: &[ThetaTraceRow]) -> Result<(), HarnessError> {
    let mut sorted: Vec<&ThetaTraceRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (a.forecast_date, &a.location).cmp(&(b.forecast_date, &b.location)));
    let mut w = open_writer(path)?;
    w.write_record(THETA_HEADER)?;
    for r in sorted {
        let e = &r.estimate;
        w.write_record([
            r.forecast_date.to_string(),
            r.location.clone(),
            fmt6(e.theta.value),
            format!("{:.6e}", e.theta.scaled()),
            fmt6(e.objective_at_zero),
            fmt6(e.objective_at_optimum),
            e.origins_used.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// One row of a plot-ready report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub grouping: &'static str,
    pub key: String,
    pub base_mean: f64,
    pub model_mean: f64,
    pub n_records: usize,
}

pub fn write_report(path: &Path, rows: &[ReportRow], metric: Metric) -> Result<(), HarnessError> {
    let m = metric_name(metric);
    let mut w = open_writer(path)?;
    w.write_record([
        "grouping".to_string(),
        "key".to_string(),
        format!("base_{m}"),
        format!("model_{m}"),
        format!("{m}_reduction"),
        "n_records".to_string(),
    ])?;
    for r in rows {
        w.write_record([
            r.grouping.to_string(),
            r.key.clone(),
            fmt6(r.base_mean),
            fmt6(r.model_mean),
            fmt6(r.base_mean - r.model_mean),
            r.n_records.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Writes a small text file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}
