//! Named simulation scenarios used as synthetic truth.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::domain::EpidemicSeries;
use crate::sir::{simulate_incidence, SirError, SirParams, WaveSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: SirParams,
    pub schedule: WaveSchedule,
    pub n_periods: usize,
    pub start_date: NaiveDate,
    pub location: String,
    /// Fraction of infections that are observed.
    pub reporting_rate: f64,
    /// Poisson observation noise on the reported counts.
    pub poisson_noise: bool,
}

pub const SCENARIOS: [&str; 2] = ["two-wave", "single-wave"];

impl Scenario {
    /// Two epidemic waves: an intervention cuts transmission after the
    /// first wave has turned, and relaxing it later restarts growth in the
    /// partly depleted population.
    pub fn two_wave() -> Self {
        let mut params = SirParams::seeded(0.2, 0.1, 2e-5);
        params.population = 1e6;
        params.dt = 0.1;
        Self {
            name: "two-wave".to_string(),
            params,
            schedule: WaveSchedule::new(vec![(110.0, 0.05), (145.0, 0.6)]).expect("valid schedule"),
            n_periods: 260,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            location: "sim".to_string(),
            reporting_rate: 0.2,
            poisson_noise: true,
        }
    }

    pub fn single_wave() -> Self {
        let mut params = SirParams::seeded(0.3, 0.1, 1e-4);
        params.population = 1e6;
        params.dt = 0.1;
        Self {
            name: "single-wave".to_string(),
            params,
            schedule: WaveSchedule::constant(),
            n_periods: 160,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            location: "sim".to_string(),
            reporting_rate: 0.2,
            poisson_noise: true,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "two-wave" => Some(Self::two_wave()),
            "single-wave" => Some(Self::single_wave()),
            _ => None,
        }
    }

    /// Noise-free expected reported counts.
    pub fn expected(&self) -> Result<EpidemicSeries, SirError> {
        let mut series = simulate_incidence(&self.params, &self.schedule, self.n_periods)?;
        series.location = self.location.clone();
        series.start_date = self.start_date;
        for v in series.values.iter_mut() {
            *v *= self.reporting_rate;
        }
        Ok(series)
    }

    /// Reported counts, with Poisson noise drawn from a generator seeded by
    /// `seed` when enabled.
    pub fn generate(&self, seed: u64) -> Result<EpidemicSeries, SirError> {
        let mut series = self.expected()?;
        if self.poisson_noise {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in series.values.iter_mut() {
                if *v > 0.0 {
                    *v = Poisson::new(*v).map_or(*v, |p| p.sample(&mut rng));
                }
            }
        }
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local_maxima(values: &[f64]) -> Vec<usize> {
        (1..values.len() - 1)
            .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
            .collect()
    }

    #[test]
    fn two_wave_expected_curve_has_two_peaks() {
        let s = Scenario::two_wave().expected().unwrap();
        assert_eq!(local_maxima(&s.values).len(), 2, "{:?}", local_maxima(&s.values));
    }

    #[test]
    fn generation_is_seeded() {
        let sc = Scenario::two_wave();
        assert_eq!(sc.generate(3).unwrap(), sc.generate(3).unwrap());
        assert_ne!(sc.generate(3).unwrap(), sc.generate(4).unwrap());
        assert!(sc.generate(3).unwrap().values.iter().all(|v| *v >= 0.0));
    }
}
