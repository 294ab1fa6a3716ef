//! Closed-loop virtual experiments and the controller comparison suite.

mod report;
mod suite;

pub use report::{render_markdown, render_svg, write_run_csv, RUN_CSV_HEADER};
pub use suite::{
    benchmark_suite, BenchmarkConfig, BenchmarkSummary, CaseResult, ControllerFactory, ControllerStats, G2gResult,
};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controllers::{ControlContext, Controller};
use crate::datagen::AugmentedFrame;
use crate::error::{Error, Result};
use crate::plant::{step, PlantParams, PlantState, ProfileLimits, SeedSpec};

/// Truncated Gaussian measurement of the mean size.
///
/// σ = level/3 of the true value; draws beyond ±level are rejected and redrawn.
pub fn add_noise(true_mean_size: f64, noise_level: f64, rng: &mut impl Rng) -> f64 {
    if noise_level <= 0.0 || true_mean_size == 0.0 {
        return true_mean_size;
    }
    let bound = noise_level * true_mean_size.abs();
    let normal = Normal::new(0.0, bound / 3.0).expect("finite positive stddev");
    loop {
        let p: f64 = normal.sample(rng);
        if p.abs() <= bound {
            return true_mean_size + p;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub set_point_m: f64,
    pub initial_concentration_kg_per_kg: f64,
    /// Initial slurry and jacket temperature.
    pub initial_temp_c: f64,
    pub seed: SeedSpec,
    pub noise_level: f64,
    pub rng_seed: u64,
    pub sampling_interval_s: f64,
    pub batch_duration_s: f64,
    pub limits: ProfileLimits,
    /// Steps held at the initial jacket temperature before the controller acts.
    pub bootstrap_steps: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            set_point_m: 200e-6,
            initial_concentration_kg_per_kg: 0.63,
            initial_temp_c: 45.0,
            seed: SeedSpec::default(),
            noise_level: 0.0,
            rng_seed: 1,
            sampling_interval_s: 3600.0,
            batch_duration_s: 86400.0,
            limits: ProfileLimits::default(),
            bootstrap_steps: 6,
        }
    }
}

impl Scenario {
    pub fn holds(&self) -> usize {
        (self.batch_duration_s / self.sampling_interval_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.set_point_m > 0.0) {
            return Err(Error::config("set_point_m must be positive"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::config("noise_level must be non-negative"));
        }
        if !(self.sampling_interval_s > 0.0) || self.holds() == 0 {
            return Err(Error::config("batch must contain at least one sampling interval"));
        }
        if self.bootstrap_steps >= self.holds() {
            return Err(Error::config(
                "bootstrap_steps must leave the controller at least one move",
            ));
        }
        self.limits.validate()?;
        self.seed.validate()?;
        if !(self.limits.temp_min_c..=self.limits.temp_max_c).contains(&self.initial_temp_c) {
            return Err(Error::config("initial_temp_c lies outside the jacket limits"));
        }
        Ok(())
    }

    pub fn initial_state(&self, params: &PlantParams) -> Result<PlantState> {
        PlantState::seeded(
            self.initial_concentration_kg_per_kg,
            self.initial_temp_c,
            &self.seed,
            &params.physical,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopStep {
    pub state: PlantState,
    /// m
    pub measured_mean_size: f64,
    /// (set-point − measured L̄)², m²
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopResult {
    pub controller: String,
    pub scenario: Scenario,
    /// One entry per sampling instant, starting at t = 0.
    pub trace: Vec<LoopStep>,
    /// 100·|L̄_final − set-point|/set-point
    pub deviation_pct: f64,
    pub mean_step_time_s: f64,
    pub controller_calls: usize,
    /// Set when the run was cut short.
    pub failure: Option<String>,
}

impl ClosedLoopResult {
    pub fn final_mean_size(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.state.mean_size)
    }
}

pub fn deviation_pct(final_size: f64, set_point: f64) -> f64 {
    100.0 * (final_size - set_point).abs() / set_point
}

/// Runs one batch with `controller` in the loop.
///
/// The plant always evolves on the true state; the controller only sees
/// measurements. Controller or solver errors end the run early and are
/// reported in `failure`.
pub fn run_closed_loop(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    params: &PlantParams,
) -> Result<ClosedLoopResult> {
    scenario.validate()?;
    params.validate()?;
    controller.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let sp = scenario.set_point_m;
    let holds = scenario.holds();
    let initial = scenario.initial_state(params)?;
    let hold_temp = initial.jacket_temp;

    let observe = |s: &PlantState, rng: &mut ChaCha8Rng| -> (LoopStep, AugmentedFrame) {
        let measured = add_noise(s.mean_size, scenario.noise_level, rng);
        let mut seen = *s;
        seen.mean_size = measured;
        (
            LoopStep {
                state: *s,
                measured_mean_size: measured,
                squared_error: (sp - measured).powi(2),
            },
            AugmentedFrame::new(seen, sp),
        )
    };

    let (first, frame) = observe(&initial, &mut rng);
    let mut trace = vec![first];
    let mut history = vec![frame];
    let mut current = initial;
    let mut elapsed = 0.0;
    let mut calls = 0;
    let mut failure = None;

    for k in 0..holds {
        let jacket = if k < scenario.bootstrap_steps {
            hold_temp
        } else {
            let ctx = ControlContext {
                history: &history,
                set_point: sp,
                steps_remaining: holds - k,
                sampling_interval_s: scenario.sampling_interval_s,
                limits: scenario.limits,
            };
            let t0 = Instant::now();
            let out = controller.act(&ctx);
            elapsed += t0.elapsed().as_secs_f64();
            calls += 1;
            match out {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(format!("step {k}: {e}"));
                    break;
                }
            }
        };
        let next = match step(&current, jacket, scenario.sampling_interval_s, params) {
            Ok(r) => r.state,
            Err(e) => {
                failure = Some(format!("plant step {k}: {e}"));
                break;
            }
        };
        current = next;
        current.clock = initial.clock + (k + 1) as f64 * scenario.sampling_interval_s;
        let (s, f) = observe(&current, &mut rng);
        trace.push(s);
        history.push(f);
    }
    if let Some(f) = &failure {
        log::warn!("{} run at {:.0} µm ended early: {f}", controller.name(), sp * 1e6);
    }
    Ok(ClosedLoopResult {
        controller: controller.name().to_string(),
        scenario: scenario.clone(),
        deviation_pct: deviation_pct(current.mean_size, sp),
        mean_step_time_s: if calls > 0 { elapsed / calls as f64 } else { 0.0 },
        controller_calls: calls,
        trace,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ConstantController;

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(add_noise(123e-6, 0.0, &mut rng), 123e-6);
    }

    #[test]
    fn truncated_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let rel = add_noise(1.0, 0.10, &mut rng) - 1.0;
            assert!(rel.abs() <= 0.10);
            sum += rel;
            sq += rel * rel;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        // truncation at 3σ trims the stddev by about 1.4%
        assert!((sd / (0.1 / 3.0) - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn noise_is_reproducible() {
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(5);
            (0..10).map(|_| add_noise(1.0, 0.15, &mut r)).collect()
        };
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..10).map(|_| add_noise(1.0, 0.15, &mut r)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn saturated_hold_gives_seed_deviation() {
        let params = PlantParams::default();
        let sc = Scenario {
            initial_concentration_kg_per_kg: params.solubility.saturation(30.0),
            initial_temp_c: 30.0,
            ..Scenario::default()
        };
        let mut c = ConstantController { jacket_temp: 30.0 };
        let r = run_closed_loop(&sc, &mut c, &params).unwrap();
        assert_eq!(r.trace.len(), 25);
        let seed_size = sc.initial_state(&params).unwrap().mean_size;
        let expect = deviation_pct(seed_size, sc.set_point_m);
        assert!((r.deviation_pct - expect).abs() < 1e-9);
        assert_eq!(r.controller_calls, 24 - sc.bootstrap_steps);
    }
}
