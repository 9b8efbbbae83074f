//! Plain-text backtest configuration.
//!
//! One `key = value` per line; `#` starts a comment. Keys are grouped by a
//! dotted prefix, and a `[section]` line sets that prefix for the lines
//! below it, so `[truth]` followed by `scenario = two-wave` is the same as
//! `truth.scenario = two-wave`.
//!
//! | key | values | default |
//! |---|---|---|
//! | `truth.file` | path, relative to the config file | |
//! | `truth.scenario` | `two-wave`, `single-wave` | |
//! | `truth.seed` | integer | `0` |
//! | `forecast.models` | comma list of `arima`, `holt`, `spline` | `arima` |
//! | `forecast.horizons` | k ≥ 1 | `28` |
//! | `forecast.quantiles` | `hub`, `none`, or a comma list of levels | `hub` |
//! | `holt.damping` | phi in (0, 1] | undamped |
//! | `origins.schedule` | `weekly`, `daily`, `every:N` | `weekly` |
//! | `origins.first` | first origin as a count of observations | model minimum |
//! | `modulation.enabled` | `true`/`false` | `true` |
//! | `modulation.<model>` | `true`/`false`, overrides the above per model | |
//! | `modulation.window` | `cumulative`, `total` | `cumulative` |
//! | `modulation.include_history` | `true`/`false` | `false` |
//! | `modulation.fixed_theta` | theta ≥ 0 | estimated |
//! | `scoring.wis` | `standard`, `literal` | `standard` |
//! | `output.dir` | path, relative to the config file | `out` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::backtest::{BacktestPlan, OriginSchedule, PlanModel, TruthSource};
use super::scenario::Scenario;
use super::HarnessError;
use crate::epimod::{ModulationMode, ThetaOptions, Window};
use crate::forecasters::{ForecasterSpec, HoltConfig, ForecasterKind, HUB_QUANTILES};
use crate::scoring::{WeightConvention, WisConfig};

const KNOWN_KEYS: [&str; 15] = [
    "truth.file",
    "truth.scenario",
    "truth.seed",
    "forecast.models",
    "forecast.horizons",
    "forecast.quantiles",
    "holt.damping",
    "origins.schedule",
    "origins.first",
    "modulation.enabled",
    "modulation.window",
    "modulation.include_history",
    "modulation.fixed_theta",
    "scoring.wis",
    "output.dir",
];
const MODEL_NAMES: [&str; 3] = ["arima", "holt", "spline"];

fn err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Splits config text into a key map, rejecting malformed lines, unknown
/// keys and repeated keys.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut prefix = String::new();
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            prefix = format!("{}.", section.trim());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(line, format!("line {} is not `key = value`", n + 1)));
        };
        let key = format!("{prefix}{}", k.trim());
        let known = KNOWN_KEYS.contains(&key.as_str())
            || key
                .strip_prefix("modulation.")
                .is_some_and(|m| MODEL_NAMES.contains(&m));
        if !known {
            return Err(err(&key, "unknown key"));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(err(&key, "given more than once"));
        }
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, HarnessError> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(err(key, format!("expected true/false, got `{v}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse()
        .map_err(|_| err(key, format!("invalid number `{v}`")))
}

/// Builds a plan from config text. Relative paths resolve against `base_dir`.
pub fn parse_plan(text: &str, base_dir: &Path) -> Result<BacktestPlan, HarnessError> {
    let entries = parse_entries(text)?;
    let get = |k: &str| entries.get(k).map(String::as_str);
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };

    let truth = match (get("truth.file"), get("truth.scenario")) {
        (Some(_), Some(_)) => {
            return Err(err("truth.scenario", "give either truth.file or truth.scenario"))
        }
        (Some(f), None) => TruthSource::File(resolve(f)),
        (None, Some(s)) => {
            if Scenario::by_name(s).is_none() {
                return Err(err("truth.scenario", format!("unknown scenario `{s}`")));
            }
            TruthSource::Scenario(s.to_string())
        }
        (None, None) => return Err(err("truth.file", "no truth source given")),
    };

    let k: usize = match get("forecast.horizons") {
        Some(v) => parse_num("forecast.horizons", v)?,
        None => 28,
    };
    if k == 0 {
        return Err(err("forecast.horizons", "must be at least 1"));
    }

    let levels: Option<Vec<f64>> = match get("forecast.quantiles").unwrap_or("hub") {
        "hub" => Some(HUB_QUANTILES.to_vec()),
        "none" => None,
        list => Some(
            list.split(',')
                .map(|q| parse_num("forecast.quantiles", q.trim()))
                .collect::<Result<_, _>>()?,
        ),
    };

    let damping = get("holt.damping")
        .map(|v| parse_num::<f64>("holt.damping", v))
        .transpose()?;
    if damping.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
        return Err(err("holt.damping", "must lie in (0, 1]"));
    }

    let default_modulation = match get("modulation.enabled") {
        Some(v) => parse_bool("modulation.enabled", v)?,
        None => true,
    };
    let mut models = Vec::new();
    for name in get("forecast.models").unwrap_or("arima").split(',') {
        let name = name.trim();
        let mut spec = match name {
            "arima" => ForecasterSpec::arima(),
            "holt" => ForecasterSpec::new(ForecasterKind::Holt(HoltConfig { damping })),
            "spline" => ForecasterSpec::spline(),
            other => return Err(err("forecast.models", format!("unknown model `{other}`"))),
        };
        if let Some(levels) = &levels {
            spec = spec.with_quantiles(levels);
        }
        spec.validate()
            .map_err(|e| err("forecast.quantiles", e.to_string()))?;
        let key = format!("modulation.{name}");
        let modulate = match get(&key) {
            Some(v) => parse_bool(&key, v)?,
            None => default_modulation,
        };
        models.push(PlanModel { spec, modulate });
    }

    let schedule = match get("origins.schedule").unwrap_or("weekly") {
        "weekly" => OriginSchedule::Every(7),
        "daily" => OriginSchedule::EveryPeriod,
        other => match other.strip_prefix("every:") {
            Some(n) => match parse_num::<usize>("origins.schedule", n)? {
                0 => return Err(err("origins.schedule", "step must be at least 1")),
                n => OriginSchedule::Every(n),
            },
            None => return Err(err("origins.schedule", format!("unknown schedule `{other}`"))),
        },
    };
    let first_origin = get("origins.first")
        .map(|v| parse_num("origins.first", v))
        .transpose()?;

    let window = match get("modulation.window").unwrap_or("cumulative") {
        "cumulative" => Window::Cumulative,
        "total" => Window::Total,
        other => return Err(err("modulation.window", format!("unknown window `{other}`"))),
    };
    let include_history = match get("modulation.include_history") {
        Some(v) => parse_bool("modulation.include_history", v)?,
        None => false,
    };
    let theta = match get("modulation.fixed_theta") {
        Some(v) => {
            let t: f64 = parse_num("modulation.fixed_theta", v)?;
            if !(t.is_finite() && t >= 0.0) {
                return Err(err("modulation.fixed_theta", "must be finite and nonnegative"));
            }
            ThetaOptions::fixed(t)
        }
        None => ThetaOptions::default(),
    };

    let weight_convention = match get("scoring.wis").unwrap_or("standard") {
        "standard" => WeightConvention::StandardHalfAlpha,
        "literal" => WeightConvention::PaperLiteral,
        other => return Err(err("scoring.wis", format!("unknown convention `{other}`"))),
    };
    let seed = get("truth.seed")
        .map(|v| parse_num("truth.seed", v))
        .transpose()?
        .unwrap_or(0);

    Ok(BacktestPlan {
        truth,
        models,
        k,
        schedule,
        first_origin,
        mode: ModulationMode {
            window,
            include_history,
        },
        wis: WisConfig {
            weight_convention,
            includes_median: true,
        },
        theta,
        seed,
        output_dir: Some(resolve(get("output.dir").unwrap_or("out"))),
    })
}

pub fn load_plan(path: &Path) -> Result<BacktestPlan, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_plan(&text, base)
}
