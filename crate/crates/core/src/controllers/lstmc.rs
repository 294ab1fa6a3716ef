use std::sync::Arc;

use ndarray::Array2;

use super::{ControlContext, Controller};
use crate::datagen::{features, AugmentedFrame, WindowMode};
use crate::error::{Error, Result};
use crate::lstm::LstmNetwork;

/// Model-free controller: the network maps the augmented history straight
/// to the next jacket temperature.
#[derive(Debug, Clone)]
pub struct LstmController {
    network: Arc<LstmNetwork>,
    /// Auxiliary squared-error prediction of the last call (µm²).
    pub last_error_prediction: Option<f64>,
}

impl LstmController {
    pub fn new(network: Arc<LstmNetwork>) -> Result<Self> {
        if network.meta.mode != WindowMode::Controller {
            return Err(Error::schema("LSTMc needs a network trained on controller windows"));
        }
        network.check_compatible(network.meta.window, &features::names(&features::AUGMENTED_FEATURES))?;
        if network.meta.output_features != features::names(&features::CONTROLLER_TARGETS) {
            return Err(Error::schema(format!(
                "LSTMc outputs must be {:?}, network has {:?}",
                features::CONTROLLER_TARGETS,
                network.meta.output_features
            )));
        }
        Ok(Self {
            network,
            last_error_prediction: None,
        })
    }

    pub fn window(&self) -> usize {
        self.network.meta.window
    }

    /// Raw network outputs [T_j next (°C), e next (µm²)] for `frames`, which
    /// must hold exactly W+1 frames.
    pub fn predict(&self, frames: &[AugmentedFrame]) -> Result<[f64; 2]> {
        let w = self.window();
        if frames.len() != w + 1 {
            return Err(Error::schema(format!(
                "LSTMc needs {} frames, got {}",
                w + 1,
                frames.len()
            )));
        }
        let mut x = Array2::zeros((w + 1, features::AUGMENTED_FEATURES.len()));
        for (mut row, f) in x.rows_mut().into_iter().zip(frames) {
            let mut r = f.row();
            self.network.norm.inputs.normalize(&mut r);
            row.assign(&ndarray::ArrayView1::from(&r));
        }
        let mut y = self.network.forward(x.view())?.to_vec();
        self.network.norm.targets.denormalize(&mut y);
        Ok([y[0], y[1]])
    }
}

impl Controller for LstmController {
    fn name(&self) -> &str {
        "LSTMc"
    }

    fn reset(&mut self) {
        self.last_error_prediction = None;
    }

    fn propose(&mut self, ctx: &ControlContext<'_>) -> Result<f64> {
        let need = self.window() + 1;
        if ctx.history.len() < need {
            return Err(Error::Controller {
                controller: "LSTMc".into(),
                detail: format!("history has {} frames, needs {need}", ctx.history.len()),
            });
        }
        let frames = &ctx.history[ctx.history.len() - need..];
        if let Some(f) = frames.iter().find(|f| f.terminal_size != ctx.set_point) {
            return Err(Error::schema(format!(
                "history frame carries terminal size {} m instead of the set-point {} m",
                f.terminal_size, ctx.set_point
            )));
        }
        let [tj, err] = self.predict(frames)?;
        log::debug!("LSTMc: T_j {tj:.3} °C, predicted e {err:.3e} µm²");
        self.last_error_prediction = Some(err);
        Ok(tj)
    }
}
