use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;

use epimod::domain::{Cadence, EpidemicSeries, ForecastSet, QuantileLevel};
use epimod::epimod::{estimate_theta, modulate, modulate_quantiles, prediction_error};
use epimod::forecasters::ForecasterSpec;
use epimod::scoring::{interval_score, mae, percent_improvement, wis, IntervalSpec, WeightConvention, WisConfig};
use epimod::sir::{simulate_trajectory, SirParams};
use epimod::{ModulationMode, Theta, ThetaOptions};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 3, 1).unwrap()
}

fn mode_strategy() -> impl Strategy<Value = ModulationMode> {
    (any::<bool>(), any::<bool>()).prop_map(|(total, include_history)| {
        let mut m = if total {
            ModulationMode::total()
        } else {
            ModulationMode::cumulative()
        };
        m.include_history = include_history;
        m
    })
}

/// A forecast set with `levels` quantile columns sorted per horizon.
fn set_strategy() -> impl Strategy<Value = ForecastSet> {
    (1usize..20, 1usize..6).prop_flat_map(|(k, n_levels)| {
        (
            prop::collection::vec(0.0f64..5e3, k),
            prop::collection::vec(prop::collection::vec(0.0f64..5e3, n_levels), k),
        )
            .prop_map(move |(point, mut columns)| {
                for c in columns.iter_mut() {
                    c.sort_by(f64::total_cmp);
                }
                let quantiles: BTreeMap<QuantileLevel, Vec<f64>> = (0..n_levels)
                    .map(|l| {
                        let q = (l + 1) as f64 / (n_levels + 1) as f64;
                        (
                            QuantileLevel::new(q).unwrap(),
                            columns.iter().map(|c| c[l]).collect(),
                        )
                    })
                    .collect();
                ForecastSet {
                    location: "L".to_string(),
                    origin_index: 5,
                    origin_date: start(),
                    cadence: Cadence::Daily,
                    point,
                    quantiles: Some(quantiles),
                }
            })
    })
}

proptest! {
    #[test]
    fn zero_theta_is_identity_in_every_mode(set in set_strategy(), mode in mode_strategy(), scale in 0.1f64..1e4) {
        let theta = Theta::new(0.0, scale).unwrap();
        prop_assert_eq!(modulate(&set.point, theta, mode).unwrap(), set.point.clone());
        prop_assert_eq!(modulate_quantiles(&set, theta, mode).unwrap(), set);
    }

    #[test]
    fn modulation_factor_is_in_unit_interval(set in set_strategy(), mode in mode_strategy(), value in 0.0f64..20.0) {
        let theta = Theta::new(value, 1e3).unwrap();
        let out = modulate(&set.point, theta, mode).unwrap();
        for (o, b) in out.iter().zip(&set.point) {
            prop_assert!(*o >= 0.0 && *o <= *b);
        }
    }

    #[test]
    fn modulated_quantiles_stay_monotone(set in set_strategy(), mode in mode_strategy(), value in 0.0f64..20.0) {
        let out = modulate_quantiles(&set, Theta::new(value, 1e3).unwrap(), mode).unwrap();
        prop_assert!(out.is_monotone());
        prop_assert!(out.validate().is_ok());
    }

    #[test]
    fn prediction_error_at_zero_is_plain_sse(
        values in prop::collection::vec(0.0f64..1e3, 12..30),
        forecasts in prop::collection::vec(prop::collection::vec(0.0f64..1e3, 4), 1..6),
        mode in mode_strategy(),
    ) {
        let truth = EpidemicSeries::new("L", Cadence::Daily, start(), values.clone()).unwrap();
        let sets: Vec<ForecastSet> = forecasts
            .iter()
            .enumerate()
            .map(|(i, point)| ForecastSet {
                location: "L".to_string(),
                origin_index: i + 1,
                origin_date: truth.date_at(i),
                cadence: Cadence::Daily,
                point: point.clone(),
                quantiles: None,
            })
            .collect();
        let mut sse = 0.0;
        for s in &sets {
            for (j, f) in s.point.iter().enumerate() {
                let e = f - values[s.origin_index + j];
                sse += e * e;
            }
        }
        let got = prediction_error(&truth, &sets, Theta::ZERO, mode).unwrap();
        prop_assert_eq!(got, sse);
    }

    #[test]
    fn interval_score_is_nonnegative_and_continuous(
        alpha in 0.01f64..0.99,
        lower in 0.0f64..100.0,
        width in 0.0f64..100.0,
        y in -50.0f64..250.0,
    ) {
        let spec = IntervalSpec::new(alpha, lower, lower + width).unwrap();
        prop_assert!(interval_score(y, &spec) >= 0.0);
        let eps = 1e-12;
        for b in [spec.lower, spec.upper] {
            let left = interval_score(b - eps, &spec);
            let right = interval_score(b + eps, &spec);
            prop_assert!((left - right).abs() <= 1e-9);
        }
    }

    #[test]
    fn median_only_wis_is_absolute_error(y in 0.0f64..1e3, m in 0.0f64..1e3, literal in any::<bool>()) {
        let cfg = WisConfig {
            weight_convention: if literal {
                WeightConvention::PaperLiteral
            } else {
                WeightConvention::StandardHalfAlpha
            },
            includes_median: true,
        };
        let w = wis(y, &[(0.5, m)], &cfg).unwrap();
        prop_assert!((w - (y - m).abs()).abs() <= 1e-12 * (1.0 + (y - m).abs()));
    }

    #[test]
    fn mae_and_wis_ignore_record_order(
        pairs in prop::collection::vec((0.0f64..1e3, 0.0f64..1e3), 1..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = mae(&pairs).unwrap();
        let b = mae(&shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));

        let cfg = WisConfig::default();
        let total = |ps: &[(f64, f64)]| -> f64 {
            ps.iter()
                .map(|&(y, m)| wis(y, &[(0.1, m * 0.5), (0.5, m), (0.9, m * 1.5)], &cfg).unwrap())
                .sum::<f64>()
                / ps.len() as f64
        };
        let (wa, wb) = (total(&pairs), total(&shuffled));
        prop_assert!((wa - wb).abs() <= 1e-12 * wa.max(1.0));
    }

    #[test]
    fn percent_improvement_matches_ratio_form(b in 1e-3f64..1e6, m in 0.0f64..1e6) {
        let got = percent_improvement(b, m).unwrap();
        let want = 100.0 * (1.0 - m / b);
        prop_assert!((got - want).abs() <= 4.0 * f64::EPSILON * (100.0 + want.abs()));
    }

    #[test]
    fn susceptibles_never_increase(beta in 0.0f64..1.0, gamma in 0.05f64..0.5, i0 in 1e-6f64..0.1) {
        let traj = simulate_trajectory(&SirParams::seeded(beta, gamma, i0), 100).unwrap();
        for w in traj.states.windows(2) {
            prop_assert!(w[1].s <= w[0].s);
            prop_assert!((w[1].s + w[1].i + w[1].r - 1.0).abs() <= 1e-8);
        }
    }
}

#[test]
fn holt_theta_rate_scales_inversely_with_counts() {
    let values: Vec<f64> = (0..70)
        .map(|t| {
            let z = (t as f64 - 35.0) / 9.0;
            200.0 * (-0.5 * z * z).exp() + 3.0 + (t % 3) as f64
        })
        .collect();
    let spec = ForecasterSpec::holt();
    let mode = ModulationMode::cumulative();
    let opts = ThetaOptions::default();
    let truth = EpidemicSeries::new("L", Cadence::Daily, start(), values.clone()).unwrap();
    let base = estimate_theta(&truth, &spec, 14, mode, &opts).unwrap();
    assert!(base.theta.value > 0.0);
    for c in [0.1, 7.0, 250.0] {
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let truth_c = EpidemicSeries::new("L", Cadence::Daily, start(), scaled).unwrap();
        let est = estimate_theta(&truth_c, &spec, 14, mode, &opts).unwrap();
        let ratio = est.theta.scaled() * c / base.theta.scaled();
        assert!((ratio - 1.0).abs() < 1e-4, "c = {c}: rate ratio {ratio}");
    }
}
