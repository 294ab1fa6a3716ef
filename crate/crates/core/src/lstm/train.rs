use std::io::Write;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clip_global_norm, Adam, LstmNetwork};
use crate::datagen::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub gradient_clip_norm: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 10,
            gradient_clip_norm: 1.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("gradient_clip_norm", self.gradient_clip_norm),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{k} must be positive")));
            }
        }
        for (k, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{k} must lie in (0, 1)")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::config(
                "batch_size, max_epochs and early_stop_patience must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Over the epoch's predictions made before each minibatch update.
    pub train_nmse: f64,
    pub val_nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curves: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_nmse: f64,
    pub stopped_early: bool,
}

/// Mean over output features of MSE divided by the target variance.
///
/// Features whose target variance is zero are skipped with a warning; if
/// every feature is skipped the result is NaN.
pub fn nmse(predictions: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(predictions.dim(), targets.dim(), "nmse needs equal shapes");
    let n = targets.nrows() as f64;
    let mut total = 0.0;
    let mut used = 0usize;
    for (j, (p, t)) in predictions.columns().into_iter().zip(targets.columns()).enumerate() {
        let mean = t.sum() / n;
        let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            log::warn!("target feature {j} has zero variance; excluded from NMSE");
            continue;
        }
        let mse = p.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        total += mse / var;
        used += 1;
    }
    if used == 0 {
        f64::NAN
    } else {
        total / used as f64
    }
}

fn evaluate(net: &LstmNetwork, ds: &Dataset, batch: usize) -> Result<Array2<f64>> {
    let mut parts = Vec::new();
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(256)) {
        let (x, _) = ds.batch(chunk);
        parts.push(net.params.forward(x.view())?.0);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::schema(e.to_string()))
}

/// Network NMSE over a whole dataset.
pub fn dataset_nmse(net: &LstmNetwork, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(f64::NAN);
    }
    let p = evaluate(net, ds, 256)?;
    Ok(nmse(p.view(), ds.targets.view()))
}

/// Minibatch Adam training with early stopping on validation NMSE.
///
/// Returns the parameters of the best validation epoch. With an empty
/// validation set the running training NMSE is used for selection.
pub fn train(
    mut net: LstmNetwork,
    train_ds: &Dataset,
    val_ds: &Dataset,
    config: &TrainConfig,
) -> Result<(LstmNetwork, TrainReport)> {
    config.validate()?;
    if train_ds.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    for ds in [train_ds, val_ds] {
        net.check_compatible(ds.window, &ds.norm.input_features)?;
        if ds.norm != net.norm {
            return Err(Error::schema(
                "dataset was normalized with different statistics than the network",
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut adam = Adam::new(
        &net.params,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut best = net.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut curves = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut preds = Array2::zeros(train_ds.targets.raw_dim());
        let mut seen = Array2::zeros(train_ds.targets.raw_dim());
        let mut row = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_ds.batch(chunk);
            let diverged = |block: &str, detail: String| Error::Divergence {
                epoch,
                batch: bi,
                block: block.to_string(),
                detail,
            };
            let (loss, mut grad, out) = net.params.mse_gradients(x.view(), y.view()).map_err(|e| match e {
                Error::NonFinite { layer, step } => diverged(
                    &format!("layer{layer}"),
                    format!("non-finite activation at step {step}"),
                ),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(diverged("loss", format!("loss = {loss}")));
            }
            if let Some((name, _)) = grad.blocks().iter().find(|(_, b)| b.iter().any(|g| !g.is_finite())) {
                return Err(diverged(name, "non-finite gradient".into()));
            }
            clip_global_norm(&mut grad, config.gradient_clip_norm);
            adam.step(&mut net.params, &grad).map_err(|e| match e {
                Error::Divergence { block, detail, .. } => diverged(&block, detail),
                other => other,
            })?;
            let n = chunk.len();
            preds.slice_mut(ndarray::s![row..row + n, ..]).assign(&out);
            seen.slice_mut(ndarray::s![row..row + n, ..]).assign(&y);
            row += n;
        }
        let train_nmse = nmse(preds.view(), seen.view());
        let val_nmse = if val_ds.is_empty() {
            f64::NAN
        } else {
            dataset_nmse(&net, val_ds)?
        };
        let score = if val_ds.is_empty() { train_nmse } else { val_nmse };
        log::info!("epoch {epoch}: train NMSE {train_nmse:.4e}, val NMSE {val_nmse:.4e}");
        curves.push(EpochRecord {
            epoch,
            train_nmse,
            val_nmse,
        });
        if score < best_val {
            best_val = score;
            best = net.params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    net.params = best;
    Ok((
        net,
        TrainReport {
            curves,
            best_epoch,
            best_val_nmse: best_val,
            stopped_early,
        },
    ))
}

pub fn write_curves_csv(mut w: impl Write, curves: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,train_nmse,val_nmse")?;
    for r in curves {
        writeln!(w, "{},{:.8e},{:.8e}", r.epoch, r.train_nmse, r.val_nmse)?;
    }
    Ok(())
}
