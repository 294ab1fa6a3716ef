use serde::{Deserialize, Serialize};

use super::params::PhysicalParams;
use crate::error::{Error, Result};

/// Number-density moments μ0..μ3 per kg of slurry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments(pub [f64; 4]);

impl Moments {
    pub fn mean_size(&self) -> f64 {
        if self.0[0] > 0.0 {
            self.0[1] / self.0[0]
        } else {
            0.0
        }
    }
}

/// Crystallizer state at one sampling instant.
///
/// `jacket_temp` is the jacket temperature in effect over the interval that
/// ended at `clock` (for the initial state, the jacket temperature before the
/// first move).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// °C
    pub jacket_temp: f64,
    /// kg solute per kg slurry
    pub concentration: f64,
    /// °C
    pub temperature: f64,
    /// m
    pub mean_size: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// kg crystal per kg slurry
    pub suspension_density: f64,
    /// s
    pub clock: f64,
}

impl PlantState {
    /// Builds a state from moments, deriving mean size and suspension density.
    pub fn from_moments(
        jacket_temp: f64,
        concentration: f64,
        temperature: f64,
        moments: Moments,
        clock: f64,
        physical: &PhysicalParams,
    ) -> Self {
        let [mu0, mu1, mu2, mu3] = moments.0;
        Self {
            jacket_temp,
            concentration,
            temperature,
            mean_size: moments.mean_size(),
            mu0,
            mu1,
            mu2,
            mu3,
            suspension_density: physical.mass_per_volume_moment() * mu3,
            clock,
        }
    }

    /// Seeded state at t = 0 with slurry and jacket both at `temperature`.
    pub fn seeded(concentration: f64, temperature: f64, seed: &SeedSpec, physical: &PhysicalParams) -> Result<Self> {
        let moments = super::seed_to_moments(seed, physical)?;
        Ok(Self::from_moments(
            temperature,
            concentration,
            temperature,
            moments,
            0.0,
            physical,
        ))
    }

    pub fn moments(&self) -> Moments {
        Moments([self.mu0, self.mu1, self.mu2, self.mu3])
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.jacket_temp,
            self.concentration,
            self.temperature,
            self.mean_size,
            self.mu0,
            self.mu1,
            self.mu2,
            self.mu3,
            self.suspension_density,
            self.clock,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("plant state contains non-finite values"));
        }
        if self.mu0 < 0.0 || self.mu1 < 0.0 || self.mu2 < 0.0 || self.mu3 < 0.0 {
            return Err(Error::domain("plant state has negative moments"));
        }
        if self.concentration < 0.0 {
            return Err(Error::domain("plant state has negative concentration"));
        }
        Ok(())
    }
}

/// Gaussian seed population introduced at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(rename = "mean_size_m")]
    pub mean_size: f64,
    #[serde(rename = "size_stddev_m")]
    pub size_stddev: f64,
    /// Initial suspension density, kg crystal per kg slurry.
    #[serde(rename = "seed_loading_kg_per_kg")]
    pub seed_loading: f64,
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self {
            mean_size: 110e-6,
            size_stddev: 15e-6,
            seed_loading: 0.03,
        }
    }
}

impl SeedSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_loading.is_finite() && self.seed_loading > 0.0) {
            return Err(Error::domain(format!(
                "seed loading must be positive (got {})",
                self.seed_loading
            )));
        }
        if !(self.mean_size.is_finite() && self.mean_size > 0.0) {
            return Err(Error::domain("seed mean size must be positive"));
        }
        if !(self.size_stddev.is_finite() && self.size_stddev >= 0.0) {
            return Err(Error::domain("seed size stddev must be non-negative"));
        }
        if self.mean_size <= 3.0 * self.size_stddev {
            return Err(Error::domain(format!(
                "seed mean size {} m must exceed three standard deviations ({} m)",
                self.mean_size,
                3.0 * self.size_stddev
            )));
        }
        Ok(())
    }
}

/// Operating envelope for the jacket temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileLimits {
    pub temp_min_c: f64,
    pub temp_max_c: f64,
    pub max_step_c: f64,
}

impl Default for ProfileLimits {
    fn default() -> Self {
        Self {
            temp_min_c: 5.0,
            temp_max_c: 45.0,
            max_step_c: 7.0,
        }
    }
}

impl ProfileLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.temp_min_c.is_finite() && self.temp_max_c.is_finite()) || self.temp_min_c >= self.temp_max_c {
            return Err(Error::config("temp_min_c must be finite and strictly below temp_max_c"));
        }
        if !(self.max_step_c.is_finite() && self.max_step_c >= 0.0) {
            return Err(Error::config("max_step_c must be finite and non-negative"));
        }
        Ok(())
    }

    /// Projects `proposed` onto the feasible set reachable from `previous`.
    pub fn clamp(&self, previous: f64, proposed: f64) -> f64 {
        let lo = (previous - self.max_step_c).max(self.temp_min_c);
        let hi = (previous + self.max_step_c).min(self.temp_max_c);
        if lo > hi {
            // previous itself is out of bounds; move toward the band
            return proposed.clamp(self.temp_min_c, self.temp_max_c);
        }
        if proposed.is_nan() {
            return previous.clamp(lo, hi);
        }
        proposed.clamp(lo, hi)
    }

    /// Feasible interval for the next move from `previous`.
    pub fn feasible_interval(&self, previous: f64) -> (f64, f64) {
        let lo = (previous - self.max_step_c).max(self.temp_min_c);
        let hi = (previous + self.max_step_c).min(self.temp_max_c);
        (lo, hi)
    }

    /// Tolerance-aware feasibility check of one move.
    pub fn admits(&self, previous: f64, next: f64) -> bool {
        const EPS: f64 = 1e-9;
        next >= self.temp_min_c - EPS
            && next <= self.temp_max_c + EPS
            && (next - previous).abs() <= self.max_step_c + EPS
    }
}

/// Piecewise-constant jacket schedule, one hold per sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingProfile {
    /// °C
    pub hold_values: Vec<f64>,
    pub sampling_interval_s: f64,
    pub batch_duration_s: f64,
}

impl CoolingProfile {
    pub fn new(hold_values: Vec<f64>, sampling_interval_s: f64) -> Self {
        let batch_duration_s = hold_values.len() as f64 * sampling_interval_s;
        Self {
            hold_values,
            sampling_interval_s,
            batch_duration_s,
        }
    }

    pub fn constant(value: f64, holds: usize, sampling_interval_s: f64) -> Self {
        Self::new(vec![value; holds], sampling_interval_s)
    }

    pub fn linear(from: f64, to: f64, holds: usize, sampling_interval_s: f64) -> Self {
        let values = (0..holds)
            .map(|i| {
                if holds == 1 {
                    from
                } else {
                    from + (to - from) * i as f64 / (holds - 1) as f64
                }
            })
            .collect();
        Self::new(values, sampling_interval_s)
    }

    pub fn holds(&self) -> usize {
        self.hold_values.len()
    }

    pub fn validate(&self, limits: &ProfileLimits) -> Result<()> {
        if self.hold_values.is_empty() {
            return Err(Error::domain("cooling profile has no holds"));
        }
        if !(self.sampling_interval_s.is_finite() && self.sampling_interval_s > 0.0) {
            return Err(Error::domain("sampling interval must be positive"));
        }
        let expected = self.hold_values.len() as f64 * self.sampling_interval_s;
        if (expected - self.batch_duration_s).abs() > 1e-9 * self.batch_duration_s.max(1.0) {
            return Err(Error::domain(format!(
                "{} holds of {} s do not cover the {} s batch",
                self.hold_values.len(),
                self.sampling_interval_s,
                self.batch_duration_s
            )));
        }
        for (i, &v) in self.hold_values.iter().enumerate() {
            if !(v.is_finite() && v >= limits.temp_min_c - 1e-9 && v <= limits.temp_max_c + 1e-9) {
                return Err(Error::domain(format!(
                    "hold {i} = {v} °C outside [{}, {}] °C",
                    limits.temp_min_c, limits.temp_max_c
                )));
            }
        }
        for (i, pair) in self.hold_values.windows(2).enumerate() {
            if (pair[1] - pair[0]).abs() > limits.max_step_c + 1e-9 {
                return Err(Error::domain(format!(
                    "holds {i}->{} change by {} °C, more than {} °C",
                    i + 1,
                    (pair[1] - pair[0]).abs(),
                    limits.max_step_c
                )));
            }
        }
        Ok(())
    }
}
