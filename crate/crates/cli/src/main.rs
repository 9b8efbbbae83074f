//! Command-line front end for simulation, backtesting, file modulation and
//! scoring.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand, ValueEnum};

use epimod::harness::io::{
    read_score_records, score_table_csv, write_report, write_score_table, write_theta_trace, write_truth_csv,
    ReportRow,
};
use epimod::harness::{load_plan, modulate_file, run_backtest, ModulateFileOptions, Scenario, SCENARIOS};
use epimod::scoring::{aggregate, grouped_means, AggregationWindow, Metric};
use epimod::{ModulationMode, ScoreRecord, ThetaOptions, Window};

#[derive(Parser)]
#[command(name = "epimod", version, about = "Susceptible-depletion modulation of epidemic forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a named scenario and write it as a truth CSV.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the expected counts without observation noise.
        #[arg(long)]
        no_noise: bool,
    },
    /// Run a backtest described by a key-value config file.
    Backtest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Epimodulate a hub-format forecast file.
    Modulate {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use this theta instead of estimating it.
        #[arg(long)]
        fixed_theta: Option<f64>,
        #[arg(long, value_enum, default_value_t = WindowArg::Cumulative)]
        window: WindowArg,
        #[arg(long)]
        include_history: bool,
        /// Estimate theta only from forecasts fully observed before each origin.
        #[arg(long)]
        strict_realtime: bool,
        /// Also write the per-forecast theta trace here.
        #[arg(long)]
        theta_trace: Option<PathBuf>,
    },
    /// Compare two runs' score records over date windows.
    Score {
        /// Base run directory or score CSV.
        #[arg(long)]
        base: PathBuf,
        /// Model run directory or score CSV.
        #[arg(long)]
        model: PathBuf,
        /// `start:end` or `label=start:end`, inclusive origin dates; repeatable.
        #[arg(long)]
        window: Vec<String>,
        #[arg(long, value_enum, default_value_t = MetricArg::Mae)]
        metric: MetricArg,
        /// Name written in the model column.
        #[arg(long)]
        name: Option<String>,
        /// Output CSV; the table goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-date, per-horizon and per-location score reductions.
    Report {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Mae)]
        metric: MetricArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Cumulative,
    Total,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mae,
    Wis,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mae => Metric::Mae,
            MetricArg::Wis => Metric::Wis,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand) {
                let _ = Cli::command().print_help();
            }
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            scenario,
            out,
            seed,
            no_noise,
        } => {
            let Some(mut sc) = Scenario::by_name(&scenario) else {
                bail!("unknown scenario `{scenario}` (known: {})", SCENARIOS.join(", "));
            };
            sc.poisson_noise = !no_noise;
            let series = sc.generate(seed)?;
            write_truth_csv(&out, [&series])?;
        }
        Command::Backtest { config } => {
            let plan = load_plan(&config)?;
            let result = run_backtest(&plan)?;
            if !result.failures.is_empty() {
                log::warn!("{} cell(s) failed and were skipped", result.failures.len());
            }
            if let Some(dir) = &plan.output_dir {
                log::info!("artifacts written to {}", dir.display());
            }
        }
        Command::Modulate {
            forecasts,
            truth,
            out,
            fixed_theta,
            window,
            include_history,
            strict_realtime,
            theta_trace,
        } => {
            let options = ModulateFileOptions {
                mode: ModulationMode {
                    window: match window {
                        WindowArg::Cumulative => Window::Cumulative,
                        WindowArg::Total => Window::Total,
                    },
                    include_history,
                },
                theta: match fixed_theta {
                    Some(t) => ThetaOptions::fixed(t),
                    None => ThetaOptions::default(),
                },
                strict_realtime,
            };
            let result = modulate_file(&forecasts, &truth, &out, &options)?;
            if let Some(path) = theta_trace {
                write_theta_trace(&path, &result.theta_trace)?;
            }
        }
        Command::Score {
            base,
            model,
            window,
            metric,
            name,
            out,
        } => {
            let base_records = load_scores(&base)?;
            let model_records = load_scores(&model)?;
            let mut windows = vec![AggregationWindow::overall()];
            for w in &window {
                windows.push(parse_window(w)?);
            }
            let table = aggregate(&base_records, &model_records, &windows, metric.into())?;
            let name = name.unwrap_or_else(|| run_name(&model));
            match out {
                Some(path) => write_score_table(&path, &name, &table, metric.into())?,
                None => print!("{}", score_table_csv(&name, &table, metric.into())?),
            }
        }
        Command::Report {
            base,
            model,
            metric,
            out,
        } => {
            let b = load_scores(&base)?;
            let m = load_scores(&model)?;
            let metric: Metric = metric.into();
            let mut rows = Vec::new();
            let mut push = |grouping: &'static str, groups: Vec<(String, (f64, f64, usize))>| {
                rows.extend(groups.into_iter().map(|(key, (bm, mm, n))| ReportRow {
                    grouping,
                    key,
                    base_mean: bm,
                    model_mean: mm,
                    n_records: n,
                }));
            };
            push(
                "date",
                grouped_means(&b, &m, metric, |r| r.origin_date)
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            );
            push(
                "horizon",
                grouped_means(&b, &m, metric, |r| r.horizon)
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            );
            push(
                "location",
                grouped_means(&b, &m, metric, |r| r.location.clone())
                    .into_iter()
                    .collect(),
            );
            if rows.is_empty() {
                bail!("no matching score records between the two runs");
            }
            write_report(&out, &rows, metric)?;
        }
    }
    Ok(())
}

/// Accepts a score CSV or a run directory containing `scores.csv`.
fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = if path.is_dir() {
        path.join("scores.csv")
    } else {
        path.to_path_buf()
    };
    read_score_records(&file).with_context(|| format!("reading scores from {}", file.display()))
}

fn run_name(path: &Path) -> String {
    let dir = if path.is_dir() { Some(path) } else { path.parent() };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string())
}

fn parse_window(spec: &str) -> Result<AggregationWindow> {
    let (label, range) = match spec.split_once('=') {
        Some((l, r)) => (l.to_string(), r),
        None => (spec.to_string(), spec),
    };
    let Some((start, end)) = range.split_once(':') else {
        bail!("window `{spec}` is not start:end");
    };
    let date = |s: &str| {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .with_context(|| format!("window `{spec}`: invalid date `{s}`"))
    };
    let (start, end) = (date(start)?, date(end)?);
    if end < start {
        bail!("window `{spec}` ends before it starts");
    }
    Ok(AggregationWindow::dates(label, start, end))
}
