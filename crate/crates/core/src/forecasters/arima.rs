//! ARIMA(p, d, q) by conditional sum of squares with automatic order
//! selection.
//!
//! For each `d <= 2`, orders with `p, q <= 3` are explored by a stepwise
//! search that starts from (2,2), (0,0), (1,0) and (0,1) and moves to any
//! neighbouring order that lowers AICc. Each candidate is fitted by
//! Nelder-Mead over a reparameterization that keeps the AR part stationary
//! and the MA part invertible (partial autocorrelations through `tanh`). A
//! constant is included for `d <= 1` (mean or drift). Orders are ranked by
//! AICc computed on a residual window shared by all candidates, so models
//! with different differencing are scored on the same observations.

use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArimaConfig {
    pub max_p: usize,
    pub max_d: usize,
    pub max_q: usize,
}

impl Default for ArimaConfig {
    fn default() -> Self {
        Self {
            max_p: 3,
            max_d: 2,
            max_q: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaFit {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Mean of the differenced series (drift when `d = 1`).
    pub constant: Option<f64>,
    pub sigma2: f64,
    pub aicc: f64,
    tail_levels: Vec<f64>,
    tail_diffs: Vec<f64>,
    tail_resid: Vec<f64>,
}

const PACF_LIMIT: f64 = 0.999;

/// Maps unconstrained values to coefficients of a stationary AR polynomial.
fn to_stationary(u: &[f64]) -> Vec<f64> {
    let p = u.len();
    let mut phi = vec![0.0; p];
    let mut work = vec![0.0; p];
    for j in 0..p {
        let a = u[j].tanh().clamp(-PACF_LIMIT, PACF_LIMIT);
        for k in 0..j {
            work[k] = phi[k] - a * phi[j - k - 1];
        }
        phi[..j].copy_from_slice(&work[..j]);
        phi[j] = a;
    }
    phi
}

fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut w = values.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

/// CSS residuals: `resid[t] = 0` for the first `p` points.
fn residuals(w: &[f64], ar: &[f64], ma: &[f64], mean: f64, resid: &mut Vec<f64>) {
    let p = ar.len();
    resid.clear();
    resid.resize(w.len(), 0.0);
    for t in p..w.len() {
        let mut pred = mean;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * (w[t - 1 - i] - mean);
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                pred += theta * resid[t - 1 - j];
            }
        }
        resid[t] = w[t] - pred;
    }
}

struct Candidate {
    ar: Vec<f64>,
    ma: Vec<f64>,
    constant: Option<f64>,
    resid: Vec<f64>,
    css: f64,
}

fn unpack(x: &[f64], p: usize, q: usize, has_const: bool) -> (Vec<f64>, Vec<f64>, f64) {
    let ar = to_stationary(&x[..p]);
    let ma: Vec<f64> = to_stationary(&x[p..p + q]).iter().map(|c| -c).collect();
    let mean = if has_const { x[p + q] } else { 0.0 };
    (ar, ma, mean)
}

fn fit_order(w: &[f64], p: usize, q: usize, has_const: bool) -> Candidate {
    let mean_w = w.iter().sum::<f64>() / w.len() as f64;
    let objective = |x: &[f64]| {
        let (ar, ma, mean) = unpack(x, p, q, has_const);
        let mut resid = Vec::with_capacity(w.len());
        residuals(w, &ar, &ma, mean, &mut resid);
        resid[p..].iter().map(|e| e * e).sum::<f64>()
    };

    let n_params = p + q + usize::from(has_const);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut zero = vec![0.0; n_params];
    if has_const {
        zero[p + q] = mean_w;
    }
    starts.push(zero.clone());
    if p + q > 0 {
        let mut alt = zero;
        for v in alt.iter_mut().take(p) {
            *v = 0.5;
        }
        for v in alt.iter_mut().skip(p).take(q) {
            *v = -0.3;
        }
        starts.push(alt);
    }

    let scale = w.iter().map(|v| (v - mean_w).abs()).sum::<f64>() / w.len() as f64;
    let (x, css) = starts
        .iter()
        .map(|s| {
            if n_params == 0 {
                (Vec::new(), objective(&[]))
            } else {
                let opts = NelderMeadOptions {
                    max_evals: 250 * n_params,
                    ftol: 1e-9,
                    initial_step: 0.3,
                };
                // The mean coordinate moves on the data scale, the others in
                // transformed units; rescale it so one step size fits both.
                let mut s = s.clone();
                let unit = scale.max(1e-8);
                if has_const {
                    s[p + q] /= unit;
                }
                let (mut x, v) = nelder_mead(
                    |z: &[f64]| {
                        let mut z = z.to_vec();
                        if has_const {
                            z[p + q] *= unit;
                        }
                        objective(&z)
                    },
                    &s,
                    opts,
                );
                if has_const {
                    x[p + q] *= unit;
                }
                (x, v)
            }
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");

    let (ar, ma, mean) = unpack(&x, p, q, has_const);
    let mut resid = Vec::new();
    residuals(w, &ar, &ma, mean, &mut resid);
    Candidate {
        ar,
        ma,
        constant: has_const.then_some(mean),
        resid,
        css,
    }
}

/// Selects and fits an ARIMA model. Requires `values.len() >= 10`; a
/// constant series yields the constant-mean model.
pub fn fit(values: &[f64], cfg: &ArimaConfig) -> ArimaFit {
    let n = values.len();
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return ArimaFit {
            p: 0,
            d: 0,
            q: 0,
            ar: Vec::new(),
            ma: Vec::new(),
            constant: Some(first),
            sigma2: 0.0,
            aicc: f64::NEG_INFINITY,
            tail_levels: values.to_vec(),
            tail_diffs: values.to_vec(),
            tail_resid: vec![0.0; n],
        };
    }

    let start = cfg.max_d + cfg.max_p;
    let n_eff = n.saturating_sub(start);
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let floor = (1e-10 * mean_abs + 1e-12).powi(2);

    let ne = n_eff as f64;
    let score = |d: usize, p: usize, q: usize, w: &[f64]| -> Option<(f64, Candidate)> {
        let has_const = d <= 1;
        let k = p + q + usize::from(has_const) + 1;
        if n_eff < k + 2 {
            return None;
        }
        let cand = fit_order(w, p, q, has_const);
        let common_sse: f64 = cand.resid[start - d..].iter().map(|e| e * e).sum();
        let sigma2 = (common_sse / ne).max(floor);
        let kf = k as f64;
        let loglik = -0.5 * ne * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
        let aicc = -2.0 * loglik + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (ne - kf - 1.0);
        Some((aicc, cand))
    };

    let mut best: Option<(f64, usize, usize, usize, Candidate)> = None;
    for d in 0..=cfg.max_d {
        let w = difference(values, d);
        let mut visited = vec![vec![false; cfg.max_q + 1]; cfg.max_p + 1];
        let mut local: Option<(f64, usize, usize, Candidate)> = None;
        let mut consider = |p: usize, q: usize, local: &mut Option<(f64, usize, usize, Candidate)>| -> bool {
            if p > cfg.max_p || q > cfg.max_q || visited[p][q] {
                return false;
            }
            visited[p][q] = true;
            match score(d, p, q, &w) {
                Some((aicc, cand)) if local.as_ref().is_none_or(|b| aicc < b.0) => {
                    *local = Some((aicc, p, q, cand));
                    true
                }
                _ => false,
            }
        };
        for (p, q) in [(2, 2), (0, 0), (1, 0), (0, 1)] {
            consider(p.min(cfg.max_p), q.min(cfg.max_q), &mut local);
        }
        // Stepwise neighbourhood search from the best starting order.
        loop {
            let Some((p, q)) = local.as_ref().map(|b| (b.1, b.2)) else {
                break;
            };
            let mut improved = false;
            for (dp, dq) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)] {
                let (np, nq) = (p as i64 + dp, q as i64 + dq);
                if np < 0 || nq < 0 {
                    continue;
                }
                if consider(np as usize, nq as usize, &mut local) {
                    improved = true;
                    break;
                }
            }
            if !improved {
                break;
            }
        }
        if let Some((aicc, p, q, cand)) = local {
            if best.as_ref().is_none_or(|b| aicc < b.0) {
                best = Some((aicc, p, d, q, cand));
            }
        }
    }

    let (aicc, p, d, q, cand) = best.expect("order (0,0,0) is always admissible");
    let w = difference(values, d);
    let n_fit = (w.len() - p).max(1);
    ArimaFit {
        p,
        d,
        q,
        ar: cand.ar,
        ma: cand.ma,
        constant: cand.constant,
        sigma2: cand.css / n_fit as f64,
        aicc,
        tail_levels: values.to_vec(),
        tail_diffs: w,
        tail_resid: cand.resid,
    }
}

impl ArimaFit {
    pub fn predict(&self, k: usize) -> Vec<f64> {
        let mean = self.constant.unwrap_or(0.0);
        let mut w = self.tail_diffs.clone();
        let mut resid = self.tail_resid.clone();
        let n = w.len();
        for t in n..n + k {
            let mut pred = mean;
            for (i, phi) in self.ar.iter().enumerate() {
                pred += phi * (w[t - 1 - i] - mean);
            }
            for (j, theta) in self.ma.iter().enumerate() {
                pred += theta * resid[t - 1 - j];
            }
            w.push(pred);
            resid.push(0.0);
        }
        let future = &w[n..];

        // Undo the differencing one level at a time.
        let mut levels: Vec<Vec<f64>> = vec![self.tail_levels.clone()];
        for _ in 0..self.d {
            let last = levels.last().expect("non-empty");
            levels.push(last.windows(2).map(|p| p[1] - p[0]).collect());
        }
        let mut path = future.to_vec();
        for level in (0..self.d).rev() {
            let mut acc = *levels[level].last().expect("history");
            path = path
                .iter()
                .map(|delta| {
                    acc += delta;
                    acc
                })
                .collect();
        }
        path
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1_sample(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut y = vec![0.0];
        for _ in 1..n {
            let prev = *y.last().unwrap();
            y.push(phi * prev + noise.sample(&mut rng));
        }
        y
    }

    /// Slope of y_t on y_{t-1} by ordinary least squares.
    fn ols_lag_coefficient(y: &[f64]) -> f64 {
        let x = &y[..y.len() - 1];
        let z = &y[1..];
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let mz = z.iter().sum::<f64>() / z.len() as f64;
        let sxy: f64 = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn stationary_transform_matches_durbin_levinson() {
        let phi = to_stationary(&[0.5f64.atanh(), 0.2f64.atanh()]);
        // phi_2 = r2, phi_1 = r1 - r2 * r1
        assert!((phi[1] - 0.2).abs() < 1e-12);
        assert!((phi[0] - (0.5 - 0.2 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let y = ar1_sample(500, 0.8, 7);
        let oracle = ols_lag_coefficient(&y);
        assert!((oracle - 0.8).abs() < 0.1);
        let fit = fit(&y, &ArimaConfig::default());
        assert!(fit.p >= 1, "selected ({}, {}, {})", fit.p, fit.d, fit.q);
        assert!((fit.ar[0] - 0.8).abs() <= 0.1, "ar = {:?}", fit.ar);
        assert!((fit.ar[0] - oracle).abs() <= 0.1);
    }

    #[test]
    fn constant_series_falls_back_to_mean() {
        let fit = fit(&[4.0; 15], &ArimaConfig::default());
        assert_eq!((fit.p, fit.d, fit.q), (0, 0, 0));
        assert_eq!(fit.predict(3), vec![4.0; 3]);
        assert_eq!(fit.sigma(), 0.0);
    }

    #[test]
    fn integrates_differenced_forecasts() {
        let values: Vec<f64> = (0..30).map(|t| 10.0 + 3.0 * t as f64).collect();
        let fit = fit(&values, &ArimaConfig::default());
        let pred = fit.predict(4);
        for (h, v) in pred.iter().enumerate() {
            let expected = 10.0 + 3.0 * (30 + h) as f64;
            assert!((v - expected).abs() < 1e-4 * expected, "{v} vs {expected}");
        }
    }
}
