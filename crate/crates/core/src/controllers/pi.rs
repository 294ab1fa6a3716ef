use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ControlContext, Controller};
use crate::error::{Error, Result};

/// PI gains. The error is measured in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiParams {
    /// °C per µm of error
    pub gain: f64,
    /// h
    pub integral_time_h: f64,
    /// °C; `None` uses the batch's initial jacket temperature.
    #[serde(default)]
    pub base_temp_c: Option<f64>,
    /// +1: a positive error (crystals too small) lowers the jacket temperature.
    #[serde(default = "default_direction")]
    pub direction: f64,
}

fn default_direction() -> f64 {
    1.0
}

impl PiParams {
    pub fn new(gain: f64, integral_time_h: f64) -> Self {
        Self {
            gain,
            integral_time_h,
            base_temp_c: None,
            direction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.integral_time_h > 0.0) || !self.gain.is_finite() {
            return Err(Error::config("PI needs a finite gain and integral_time_h > 0"));
        }
        if self.direction.abs() != 1.0 {
            return Err(Error::config("PI direction must be +1 or -1"));
        }
        Ok(())
    }
}

/// Set-point (µm, rounded to an integer) → tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTuning(pub BTreeMap<u32, PiParams>);

impl PiTuning {
    pub fn lookup(&self, set_point_um: f64) -> Result<PiParams> {
        let key = set_point_um.round();
        if (set_point_um - key).abs() > 1e-6 || key < 0.0 {
            return Err(Error::MissingTuning(set_point_um));
        }
        self.0
            .get(&(key as u32))
            .copied()
            .ok_or(Error::MissingTuning(set_point_um))
    }

    /// Adds or replaces entries.
    pub fn with_overrides(mut self, overrides: impl IntoIterator<Item = (u32, PiParams)>) -> Self {
        self.0.extend(overrides);
        self
    }
}

/// The shipped tuning for the three benchmark set-points.
pub fn pi_tune_table() -> PiTuning {
    PiTuning(BTreeMap::from([
        (180, PiParams::new(0.01, 1.0)),
        (200, PiParams::new(0.005, 0.1)),
        (220, PiParams::new(0.01, 0.05)),
    ]))
}

/// u = K_c·(e + ∫e dt / τ_I), T_j = base − direction·u.
#[derive(Debug, Clone)]
pub struct PiController {
    pub params: PiParams,
    integral: f64,
    base: Option<f64>,
    name: String,
}

impl PiController {
    pub fn new(params: PiParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            integral: 0.0,
            base: params.base_temp_c,
            name: "PI".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// µm·h
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Control signal for an error (µm) and accumulated integral, before the clamp.
    pub fn control_signal(&self, error_um: f64, integral: f64) -> f64 {
        self.params.gain * (error_um + integral / self.params.integral_time_h)
    }
}

impl Controller for PiController {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self) {
        self.integral = 0.0;
        self.base = self.params.base_temp_c;
    }

    fn propose(&mut self, ctx: &ControlContext<'_>) -> Result<f64> {
        let base = *self.base.get_or_insert_with(|| ctx.history[0].state.jacket_temp);
        let current = ctx.history.last().expect("control history is never empty");
        let error_um = (ctx.set_point - current.state.mean_size) * 1e6;
        let dt_h = ctx.sampling_interval_s / 3600.0;
        let candidate = self.integral + error_um * dt_h;
        let raw = base - self.params.direction * self.control_signal(error_um, candidate);
        let applied = ctx.limits.clamp(ctx.previous_jacket(), raw);
        // anti-windup: only integrate while the actuator is unsaturated
        if applied == raw {
            self.integral = candidate;
        }
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::AugmentedFrame;
    use crate::plant::{PlantParams, PlantState, ProfileLimits, SeedSpec};

    fn frame(jacket: f64, mean_size: f64, sp: f64) -> AugmentedFrame {
        let mut s = PlantState::seeded(0.6, 30.0, &SeedSpec::default(), &PlantParams::default().physical).unwrap();
        s.jacket_temp = jacket;
        s.mean_size = mean_size;
        AugmentedFrame::new(s, sp)
    }

    fn ctx<'a>(h: &'a [AugmentedFrame], sp: f64, limits: ProfileLimits) -> ControlContext<'a> {
        ControlContext {
            history: h,
            set_point: sp,
            steps_remaining: 10,
            sampling_interval_s: 3600.0,
            limits,
        }
    }

    #[test]
    fn table_lookup() {
        let t = pi_tune_table();
        assert_eq!(t.lookup(200.0).unwrap(), PiParams::new(0.005, 0.1));
        assert_eq!(t.lookup(220.0).unwrap(), PiParams::new(0.01, 0.05));
        assert_eq!(t.lookup(180.0).unwrap(), PiParams::new(0.01, 1.0));
        assert!(matches!(t.lookup(190.0), Err(Error::MissingTuning(_))));
        let t = t.with_overrides([(190, PiParams::new(0.02, 2.0))]);
        assert_eq!(t.lookup(190.0).unwrap().gain, 0.02);
    }

    #[test]
    fn zero_error_holds_base() {
        let mut pi = PiController::new(PiParams::new(0.01, 1.0)).unwrap();
        let h = vec![frame(30.0, 200e-6, 200e-6)];
        for _ in 0..5 {
            assert_eq!(pi.act(&ctx(&h, 200e-6, ProfileLimits::default())).unwrap(), 30.0);
        }
        assert_eq!(pi.integral(), 0.0);
    }

    #[test]
    fn constant_error_ramps_linearly() {
        // e = 10 µm, K_c = 0.01, τ_I = 1 h: u_k = 0.1 + 0.1·k
        let mut pi = PiController::new(PiParams::new(0.01, 1.0)).unwrap();
        let wide = ProfileLimits {
            temp_min_c: -100.0,
            temp_max_c: 100.0,
            max_step_c: 50.0,
        };
        let h = vec![frame(30.0, 190e-6, 200e-6)];
        for k in 1..=6 {
            let t = pi.propose(&ctx(&h, 200e-6, wide)).unwrap();
            let u = 0.1 + 0.1 * k as f64;
            assert!((30.0 - t - u).abs() < 1e-12, "step {k}: {t}");
        }
    }

    #[test]
    fn gain_is_linear() {
        let h = vec![frame(30.0, 150e-6, 200e-6)];
        let wide = ProfileLimits {
            temp_min_c: -1e3,
            temp_max_c: 1e3,
            max_step_c: 1e3,
        };
        let mut a = PiController::new(PiParams::new(0.01, 0.5)).unwrap();
        let mut b = PiController::new(PiParams::new(0.02, 0.5)).unwrap();
        for _ in 0..4 {
            let ua = 30.0 - a.propose(&ctx(&h, 200e-6, wide)).unwrap();
            let ub = 30.0 - b.propose(&ctx(&h, 200e-6, wide)).unwrap();
            assert!((2.0 * ua - ub).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_freezes_while_clamped() {
        let mut pi = PiController::new(PiParams::new(0.5, 0.1)).unwrap();
        let h = vec![frame(30.0, 100e-6, 200e-6)];
        let c = ctx(&h, 200e-6, ProfileLimits::default());
        let t = pi.act(&c).unwrap();
        assert_eq!(t, 23.0);
        assert_eq!(pi.integral(), 0.0);
        pi.act(&c).unwrap();
        assert_eq!(pi.integral(), 0.0);
        pi.reset();
        assert_eq!(pi.integral(), 0.0);
    }
}
