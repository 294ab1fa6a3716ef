//! Set-point tracking controllers for the jacket temperature.
//!
//! Every controller sees the same measured history and the same actuation
//! envelope; [`Controller::act`] applies the shared clamp to whatever the
//! controller proposes.

mod lstmc;
mod mpc;
mod pi;

pub use lstmc::LstmController;
pub use mpc::{
    extend_plan, grid_first_move, mpc_plan, surrogate_frames, GridOptimum, MpcConfig, MpcController, MpcPlan,
    PlantPredictor, Predictor, SurrogatePredictor,
};
pub use pi::{pi_tune_table, PiController, PiParams, PiTuning};

use crate::datagen::AugmentedFrame;
use crate::error::Result;
use crate::plant::ProfileLimits;

/// What a controller sees at one sampling instant.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    /// Measured frames, oldest first; the last one is the current instant.
    /// Each carries the set-point as its terminal size.
    pub history: &'a [AugmentedFrame],
    /// m
    pub set_point: f64,
    /// Sampling intervals left in the batch, including the one about to start.
    pub steps_remaining: usize,
    pub sampling_interval_s: f64,
    pub limits: ProfileLimits,
}

impl ControlContext<'_> {
    /// Jacket temperature applied over the interval that just ended.
    pub fn previous_jacket(&self) -> f64 {
        self.history
            .last()
            .map(|f| f.state.jacket_temp)
            .expect("control history is never empty")
    }
}

pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Clears per-batch state.
    fn reset(&mut self);

    /// Unclamped proposal for the next jacket temperature (°C).
    fn propose(&mut self, ctx: &ControlContext<'_>) -> Result<f64>;

    /// Next jacket temperature after the shared actuation clamp.
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64> {
        let raw = self.propose(ctx)?;
        Ok(ctx.limits.clamp(ctx.previous_jacket(), raw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Lstmc,
    Mpc,
    Pi,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Lstmc, ControllerKind::Mpc, ControllerKind::Pi];

    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Lstmc => "LSTMc",
            ControllerKind::Mpc => "MPC",
            ControllerKind::Pi => "PI",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstmc" => Ok(ControllerKind::Lstmc),
            "mpc" => Ok(ControllerKind::Mpc),
            "pi" => Ok(ControllerKind::Pi),
            other => Err(crate::Error::Config(format!(
                "unknown controller `{other}` (expected lstmc, mpc or pi)"
            ))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Holds a fixed jacket temperature. Useful as a null controller.
#[derive(Debug, Clone)]
pub struct ConstantController {
    pub jacket_temp: f64,
}

impl Controller for ConstantController {
    fn name(&self) -> &str {
        "constant"
    }

    fn reset(&mut self) {}

    fn propose(&mut self, _ctx: &ControlContext<'_>) -> Result<f64> {
        Ok(self.jacket_temp)
    }
}
