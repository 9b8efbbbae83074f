//! Non-seasonal additive Holt linear trend, optionally damped.

use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct HoltConfig {
    /// Fixed damping factor; `None` means an undamped trend.
    pub damping: Option<f64>,
}


#[derive(Debug, Clone, PartialEq)]
pub struct HoltFit {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub level: f64,
    pub trend: f64,
    pub sse: f64,
}

const BOUND_LO: f64 = 1e-4;
const BOUND_HI: f64 = 0.9999;

fn squash(u: f64) -> f64 {
    BOUND_LO + (BOUND_HI - BOUND_LO) / (1.0 + (-u).exp())
}

fn unsquash(p: f64) -> f64 {
    let s = (p - BOUND_LO) / (BOUND_HI - BOUND_LO);
    (s / (1.0 - s)).ln()
}

/// Runs the smoothing recursion and returns `(level, trend, sse)`.
fn filter(values: &[f64], alpha: f64, beta: f64, phi: f64) -> (f64, f64, f64) {
    let mut level = values[0];
    let mut trend = values[1] - values[0];
    let mut sse = 0.0;
    for &y in &values[1..] {
        let predicted = level + phi * trend;
        let err = y - predicted;
        sse += err * err;
        let new_level = predicted + alpha * err;
        trend = phi * trend + alpha * beta * err;
        level = new_level;
    }
    (level, trend, sse)
}

/// Fits smoothing weights by minimizing in-sample squared one-step error.
/// Requires at least two observations.
pub fn fit(values: &[f64], cfg: &HoltConfig) -> HoltFit {
    let phi = cfg.damping.unwrap_or(1.0);
    let objective = |u: &[f64]| filter(values, squash(u[0]), squash(u[1]), phi).2;
    let opts = NelderMeadOptions {
        max_evals: 600,
        ftol: 1e-12,
        initial_step: 0.5,
    };
    let starts = [[unsquash(0.5), unsquash(0.1)], [unsquash(0.9), unsquash(0.5)]];
    let (best, _) = starts
        .iter()
        .map(|s| nelder_mead(objective, s, opts))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two starts");
    let (alpha, beta) = (squash(best[0]), squash(best[1]));
    let (level, trend, sse) = filter(values, alpha, beta, phi);
    HoltFit {
        alpha,
        beta,
        phi,
        level,
        trend,
        sse,
    }
}

impl HoltFit {
    pub fn predict(&self, k: usize) -> Vec<f64> {
        let mut damp_sum = 0.0;
        let mut factor = 1.0;
        (1..=k)
            .map(|_| {
                factor *= self.phi;
                damp_sum += factor;
                self.level + damp_sum * self.trend
            })
            .collect()
    }

    pub fn sigma(&self, n: usize) -> f64 {
        (self.sse / (n.saturating_sub(1).max(1)) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_no_trend() {
        let fit = fit(&[5.0; 12], &HoltConfig::default());
        assert_eq!(fit.trend, 0.0);
        assert_eq!(fit.predict(4), vec![5.0; 4]);
    }

    #[test]
    fn hand_propagated_trend() {
        let fit = HoltFit {
            alpha: 0.5,
            beta: 0.5,
            phi: 1.0,
            level: 100.0,
            trend: -30.0,
            sse: 0.0,
        };
        assert_eq!(fit.predict(5), vec![70.0, 40.0, 10.0, -20.0, -50.0]);
    }

    #[test]
    fn linear_series_extrapolates_exactly() {
        let values: Vec<f64> = (0..20).map(|t| 3.0 + 2.0 * t as f64).collect();
        let fit = fit(&values, &HoltConfig::default());
        for (h, v) in fit.predict(3).iter().enumerate() {
            assert!((v - (3.0 + 2.0 * (20 + h) as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn damping_flattens_trend() {
        let values: Vec<f64> = (0..20).map(|t| t as f64).collect();
        let fit = fit(&values, &HoltConfig { damping: Some(0.8) });
        let p = fit.predict(50);
        assert!(p[49] - p[48] < 1e-3);
    }
}
