//! Deterministic SIR simulator used to generate synthetic truth.
//!
//! States are proportions. Integration is explicit Euler followed by
//! clipping to [0, 1] and renormalization onto the simplex. Incidence per
//! period is the drop in susceptibles over that period times the population.

use chrono::NaiveDate;
use thiserror::Error;

use crate::domain::{Cadence, EpidemicSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SirError {
    #[error("invalid SIR parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("wave schedule times must be strictly increasing with nonnegative betas")]
    InvalidSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirParams {
    pub beta: f64,
    pub gamma: f64,
    pub s0: f64,
    pub i0: f64,
    pub r0_init: f64,
    pub dt: f64,
    pub population: f64,
}

impl SirParams {
    /// Fully susceptible population seeded with `i0` infected.
    pub fn seeded(beta: f64, gamma: f64, i0: f64) -> Self {
        Self {
            beta,
            gamma,
            s0: 1.0 - i0,
            i0,
            r0_init: 0.0,
            dt: 0.1,
            population: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SirError> {
        let bad = |name, reason: &str| {
            Err(SirError::InvalidParam {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be finite and >= 0");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", "must be finite and > 0");
        }
        for (name, v) in [("s0", self.s0), ("i0", self.i0), ("r0_init", self.r0_init)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, "must lie in [0, 1]");
            }
        }
        if (self.s0 + self.i0 + self.r0_init - 1.0).abs() > 1e-12 {
            return bad("s0", "s0 + i0 + r0_init must equal 1");
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return bad("dt", "must lie in (0, 1]");
        }
        if !(self.population > 0.0 && self.population.is_finite()) {
            return bad("population", "must be finite and > 0");
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SirState {
        SirState {
            s: self.s0,
            i: self.i0,
            r: self.r0_init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }
}

/// Piecewise-constant transmission rate: from `time` onward (in periods),
/// beta takes the paired value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveSchedule {
    changes: Vec<(f64, f64)>,
}

impl WaveSchedule {
    pub fn new(changes: Vec<(f64, f64)>) -> Result<Self, SirError> {
        let increasing = changes.windows(2).all(|w| w[0].0 < w[1].0);
        let valid = changes
            .iter()
            .all(|&(t, b)| t.is_finite() && b.is_finite() && b >= 0.0);
        if !increasing || !valid {
            return Err(SirError::InvalidSchedule);
        }
        Ok(Self { changes })
    }

    pub fn constant() -> Self {
        Self::default()
    }

    pub fn beta_at(&self, time: f64, base: f64) -> f64 {
        self.changes
            .iter()
            .take_while(|(t, _)| *t <= time)
            .last()
            .map_or(base, |&(_, b)| b)
    }
}

/// One explicit Euler step of the SIR system at `params.beta`. The
/// recovered share absorbs rounding so the state stays on the simplex.
pub fn step(state: SirState, params: &SirParams) -> SirState {
    let flow_si = params.beta * state.s * state.i * params.dt;
    let flow_ir = params.gamma * state.i * params.dt;
    let mut s = (state.s - flow_si).clamp(0.0, 1.0);
    let mut i = (state.i + flow_si - flow_ir).clamp(0.0, 1.0);
    if s + i > 1.0 {
        let total = s + i;
        s /= total;
        i /= total;
    }
    SirState {
        s,
        i,
        r: (1.0 - s - i).max(0.0),
    }
}

/// Substeps per period; `dt` is snapped so that a whole number of steps
/// spans one period.
fn substeps(dt: f64) -> usize {
    ((1.0 / dt).round() as usize).max(1)
}

/// Per-period incidence over `n_periods`, starting at 2020-01-01 with daily
/// cadence and location `sim`.
pub fn simulate_incidence(
    params: &SirParams,
    schedule: &WaveSchedule,
    n_periods: usize,
) -> Result<EpidemicSeries, SirError> {
    let values = incidence_values(params, schedule, n_periods)?;
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    Ok(EpidemicSeries {
        location: "sim".to_string(),
        cadence: Cadence::Daily,
        start_date: start,
        values,
    })
}

fn incidence_values(
    params: &SirParams,
    schedule: &WaveSchedule,
    n_periods: usize,
) -> Result<Vec<f64>, SirError> {
    params.validate()?;
    let n_sub = substeps(params.dt);
    let mut p = *params;
    p.dt = 1.0 / n_sub as f64;
    let mut state = params.initial_state();
    let mut values = Vec::with_capacity(n_periods);
    for period in 0..n_periods {
        let s_start = state.s;
        for j in 0..n_sub {
            p.beta = schedule.beta_at(period as f64 + j as f64 * p.dt, params.beta);
            state = step(state, &p);
        }
        values.push(((s_start - state.s) * params.population).max(0.0));
    }
    Ok(values)
}

/// States at every integration step under constant beta.
#[derive(Debug, Clone)]
pub struct SirTrajectory {
    pub dt: f64,
    pub beta: f64,
    pub s0: f64,
    pub states: Vec<SirState>,
}

pub fn simulate_trajectory(params: &SirParams, n_periods: usize) -> Result<SirTrajectory, SirError> {
    params.validate()?;
    let n_sub = substeps(params.dt);
    let mut p = *params;
    p.dt = 1.0 / n_sub as f64;
    let mut states = Vec::with_capacity(n_periods * n_sub + 1);
    let mut state = params.initial_state();
    states.push(state);
    for _ in 0..n_periods * n_sub {
        state = step(state, &p);
        states.push(state);
    }
    Ok(SirTrajectory {
        dt: p.dt,
        beta: params.beta,
        s0: params.s0,
        states,
    })
}

/// Largest gap between the integrated susceptibles and the closed form
/// `S0 * exp(-beta * integral of I)`, with the integral accumulated by the
/// trapezoidal rule.
pub fn check_survival_identity(trajectory: &SirTrajectory) -> f64 {
    let mut integral = 0.0;
    let mut worst: f64 = 0.0;
    for (n, state) in trajectory.states.iter().enumerate() {
        if n > 0 {
            let prev = trajectory.states[n - 1].i;
            integral += 0.5 * (prev + state.i) * trajectory.dt;
        }
        let closed = trajectory.s0 * (-trajectory.beta * integral).exp();
        worst = worst.max((state.s - closed).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn derivative(s: f64, i: f64, beta: f64, gamma: f64) -> (f64, f64, f64) {
        (-beta * s * i, beta * s * i - gamma * i, gamma * i)
    }

    /// Classical RK4 at a fine step, independent of `step`.
    fn rk4_reference(s: f64, i: f64, r: f64, beta: f64, gamma: f64, span: f64, h: f64) -> SirState {
        let (mut s, mut i, mut r) = (s, i, r);
        let n = (span / h).round() as usize;
        for _ in 0..n {
            let k1 = derivative(s, i, beta, gamma);
            let k2 = derivative(s + 0.5 * h * k1.0, i + 0.5 * h * k1.1, beta, gamma);
            let k3 = derivative(s + 0.5 * h * k2.0, i + 0.5 * h * k2.1, beta, gamma);
            let k4 = derivative(s + h * k3.0, i + h * k3.1, beta, gamma);
            s += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            i += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            r += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        }
        SirState { s, i, r }
    }

    fn local_maxima(values: &[f64]) -> usize {
        values
            .windows(3)
            .filter(|w| w[1] > w[0] && w[1] >= w[2])
            .count()
    }

    #[test]
    fn no_transmission_decays_infected() {
        let mut p = SirParams::seeded(0.0, 0.2, 0.01);
        p.dt = 0.1;
        let s = p.initial_state();
        let next = step(s, &p);
        assert_eq!(next.s, s.s);
        assert!((next.i - s.i * (1.0 - 0.2 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn disease_free_state_is_fixed() {
        let p = SirParams::seeded(0.3, 0.1, 0.0);
        let s = SirState { s: 0.7, i: 0.0, r: 0.3 };
        let next = step(s, &p);
        assert_eq!((next.s, next.i), (s.s, s.i));
        assert!((next.r - s.r).abs() <= 1e-15);
    }

    #[test]
    fn euler_step_matches_rk4_reference() {
        let mut p = SirParams::seeded(0.3, 0.1, 0.01);
        p.dt = 0.1;
        let start = SirState { s: 0.99, i: 0.01, r: 0.0 };
        let euler = step(start, &p);
        let reference = rk4_reference(0.99, 0.01, 0.0, 0.3, 0.1, 0.1, 1e-4);
        assert!((euler.s - reference.s).abs() <= 1e-3);
        assert!((euler.i - reference.i).abs() <= 1e-3);
        assert!((euler.r - reference.r).abs() <= 1e-3);
    }

    #[test]
    fn zero_beta_yields_zero_incidence() {
        let p = SirParams::seeded(0.0, 0.1, 1e-3);
        let series = simulate_incidence(&p, &WaveSchedule::constant(), 100).unwrap();
        assert!(series.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_wave_is_unimodal() {
        let mut p = SirParams::seeded(0.3, 0.1, 1e-4);
        p.population = 1e6;
        let series = simulate_incidence(&p, &WaveSchedule::constant(), 300).unwrap();
        assert_eq!(local_maxima(&series.values), 1);
    }

    #[test]
    fn beta_step_produces_two_waves() {
        let mut p = SirParams::seeded(0.25, 0.1, 1e-4);
        p.population = 1e6;
        // First wave suppressed by an intervention, then transmission rebounds.
        let schedule = WaveSchedule::new(vec![(70.0, 0.06), (130.0, 0.3)]).unwrap();
        let series = simulate_incidence(&p, &schedule, 300).unwrap();
        assert_eq!(local_maxima(&series.values), 2);
    }

    #[test]
    fn incidence_equals_susceptible_drop() {
        let mut p = SirParams::seeded(0.3, 0.1, 1e-3);
        p.population = 1000.0;
        let series = simulate_incidence(&p, &WaveSchedule::constant(), 50).unwrap();
        let traj = simulate_trajectory(&p, 50).unwrap();
        let n_sub = substeps(p.dt);
        for (t, v) in series.values.iter().enumerate() {
            let drop = traj.states[t * n_sub].s - traj.states[(t + 1) * n_sub].s;
            assert!((v - drop * p.population).abs() <= 1e-9);
        }
    }

    #[test]
    fn conservation_and_monotone_susceptibles() {
        let mut p = SirParams::seeded(0.4, 0.1, 1e-3);
        p.dt = 0.05;
        let traj = simulate_trajectory(&p, 200).unwrap();
        for w in traj.states.windows(2) {
            assert!((w[1].total() - 1.0).abs() <= 1e-8);
            assert!(w[1].s <= w[0].s);
        }
    }

    #[test]
    fn subcritical_final_size_is_small() {
        let mut p = SirParams::seeded(0.1, 0.1, 1e-4);
        p.population = 1e5;
        let series = simulate_incidence(&p, &WaveSchedule::constant(), 2000).unwrap();
        let total: f64 = series.values.iter().sum();
        assert!(total <= 0.05 * p.population);
    }

    #[test]
    fn survival_identity_converges() {
        let zero = simulate_trajectory(&SirParams::seeded(0.0, 0.1, 1e-3), 50).unwrap();
        assert_eq!(check_survival_identity(&zero), 0.0);

        let mut p = SirParams::seeded(0.3, 0.1, 1e-4);
        p.dt = 0.01;
        let coarse = check_survival_identity(&simulate_trajectory(&p, 300).unwrap());
        p.dt = 0.005;
        let fine = check_survival_identity(&simulate_trajectory(&p, 300).unwrap());
        assert!(coarse <= 1e-3, "deviation {coarse}");
        assert!(fine <= coarse);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = SirParams::seeded(0.3, 0.1, 1e-3);
        p.s0 = 0.5;
        assert!(p.validate().is_err());
        assert!(WaveSchedule::new(vec![(5.0, 0.1), (5.0, 0.2)]).is_err());
    }
}
