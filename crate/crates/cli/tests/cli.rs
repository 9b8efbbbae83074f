use std::path::Path;
use std::process::{Command, Output};

fn epimod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epimod"))
        .args(args)
        .env("EPIMOD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path) -> std::path::PathBuf {
    let truth = dir.join("truth.csv");
    let out = epimod(&["simulate", "--scenario", "two-wave", "--seed", "1", "--out", p(&truth)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    truth
}

fn write_config(dir: &Path, name: &str, out_dir: &str) -> std::path::PathBuf {
    let cfg = dir.join(name);
    std::fs::write(
        &cfg,
        format!(
            "[truth]\nfile = truth.csv\n\n[forecast]\nmodels = holt\nhorizons = 14\n\n[output]\ndir = {out_dir}\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn simulate_then_backtest_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let cfg = write_config(dir.path(), "plan.cfg", "run");
    let out = epimod(&["backtest", "--config", p(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "run/holt/base/forecasts.csv",
        "run/holt/base/scores.csv",
        "run/holt/epimod/forecasts.csv",
        "run/holt/epimod/scores.csv",
        "run/holt/epimod/theta.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let theta = std::fs::read_to_string(dir.path().join("run/holt/epimod/theta.csv")).unwrap();
    assert!(theta.starts_with(
        "forecast_date,location,theta,theta_scaled,objective_zero,objective_opt,origins_used\n"
    ));
}

#[test]
fn repeated_backtests_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    for (cfg, out_dir) in [("a.cfg", "a"), ("b.cfg", "b")] {
        let cfg = write_config(dir.path(), cfg, out_dir);
        assert!(epimod(&["backtest", "--config", p(&cfg)]).status.success());
    }
    for f in ["base/forecasts.csv", "epimod/forecasts.csv", "epimod/scores.csv", "epimod/theta.csv"] {
        let a = std::fs::read(dir.path().join("a/holt").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b/holt").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn score_and_report_tables() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let cfg = write_config(dir.path(), "plan.cfg", "run");
    assert!(epimod(&["backtest", "--config", p(&cfg)]).status.success());
    let base = dir.path().join("run/holt/base");
    let model = dir.path().join("run/holt/epimod");
    let out = epimod(&[
        "score",
        "--base",
        p(&base),
        "--model",
        p(&model),
        "--window",
        "peak=2020-07-01:2020-08-31",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "window,model,base_mae,model_mae,abs_reduction,pct_improvement,n_records"
    );
    assert!(lines[1].starts_with("overall,epimod,"));
    assert!(lines[2].starts_with("peak,epimod,"));

    let report = dir.path().join("report.csv");
    let out = epimod(&["report", "--base", p(&base), "--model", p(&model), "--out", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("grouping,key,base_mae,model_mae,mae_reduction,n_records\n"));
    for g in ["date,", "horizon,", "location,"] {
        assert!(text.lines().any(|l| l.starts_with(g)), "no {g} rows");
    }
}

#[test]
fn modulate_with_zero_theta_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let cfg = write_config(dir.path(), "plan.cfg", "run");
    assert!(epimod(&["backtest", "--config", p(&cfg)]).status.success());
    let input = dir.path().join("run/holt/base/forecasts.csv");
    let output = dir.path().join("modulated.csv");
    let out = epimod(&[
        "modulate",
        "--forecasts",
        p(&input),
        "--truth",
        p(&dir.path().join("truth.csv")),
        "--out",
        p(&output),
        "--fixed-theta",
        "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&output).unwrap());
}

#[test]
fn unknown_subcommand_fails_with_help() {
    let out = epimod(&["frobnicate"]);
    assert!(!out.status.success());
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(text.contains("Usage"));
    assert!(text.contains("backtest"));
}

#[test]
fn config_error_names_the_key_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "truth.scenario = two-wave\nforecast.horizons = zero\n").unwrap();
    let out = epimod(&["backtest", "--config", p(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("forecast.horizons"), "{err}");
}

#[test]
fn missing_input_file_is_a_one_line_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = epimod(&[
        "modulate",
        "--forecasts",
        p(&dir.path().join("nope.csv")),
        "--truth",
        p(&dir.path().join("nope.csv")),
        "--out",
        p(&dir.path().join("o.csv")),
    ]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}
