use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, CellKind, Params};
use crate::error::Result;

/// Gradients whose magnitude is below this are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Compares BPTT gradients of the batch MSE with central differences.
///
/// `max_per_block` limits how many entries of each block are perturbed
/// (evenly strided); `None` checks every parameter.
pub fn gradient_check(
    params: &Params,
    inputs: ArrayView3<'_, f64>,
    targets: ArrayView2<'_, f64>,
    step: f64,
    max_per_block: Option<usize>,
) -> Result<Vec<BlockCheck>> {
    let (_, analytic, _) = params.mse_gradients(inputs, targets)?;
    let loss = |p: &Params| -> Result<f64> {
        let (y, _) = p.forward(inputs)?;
        Ok((&y - &targets).iter().map(|r| r * r).sum::<f64>() / y.len() as f64)
    };
    let grads: Vec<(String, Vec<f64>)> = analytic.blocks().into_iter().map(|(n, b)| (n, b.to_vec())).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(grads.len());
    for (k, (name, g)) in grads.iter().enumerate() {
        let n = g.len();
        let stride = match max_per_block {
            Some(m) if m > 0 && m < n => n.div_ceil(m),
            _ => 1,
        };
        let mut check = BlockCheck {
            block: name.clone(),
            checked: 0,
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
        };
        for i in (0..n).step_by(stride) {
            let original = probe.blocks()[k].1[i];
            probe.blocks_mut()[k].1[i] = original + step;
            let plus = loss(&probe)?;
            probe.blocks_mut()[k].1[i] = original - step;
            let minus = loss(&probe)?;
            probe.blocks_mut()[k].1[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            check.checked += 1;
            check.max_relative_error = check.max_relative_error.max(relative_error(g[i], numeric));
            check.max_absolute_error = check.max_absolute_error.max((g[i] - numeric).abs());
        }
        out.push(check);
    }
    Ok(out)
}

/// A random network and batch for [`random_gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSpec {
    pub cell: CellKind,
    pub hidden_sizes: Vec<usize>,
    pub window: usize,
    pub input_size: usize,
    pub output_size: usize,
    pub batch: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self {
            cell: CellKind::Lstm,
            hidden_sizes: vec![8, 8],
            window: 4,
            input_size: 3,
            output_size: 2,
            batch: 3,
            step: 1e-5,
            seed: 0,
        }
    }
}

/// Checks every parameter of a freshly initialized network on a random
/// batch of `window + 1` frames.
pub fn random_gradient_check(spec: &GradcheckSpec) -> Result<Vec<BlockCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arch = Architecture {
        cell: spec.cell,
        hidden_sizes: spec.hidden_sizes.clone(),
    };
    let params = Params::init(&arch, spec.input_size, spec.output_size, &mut rng)?;
    let x = Array3::from_shape_simple_fn((spec.batch, spec.window + 1, spec.input_size), || {
        rng.random_range(-1.5..1.5)
    });
    let y = Array2::from_shape_simple_fn((spec.batch, spec.output_size), || rng.random_range(-1.0..1.0));
    gradient_check(&params, x.view(), y.view(), spec.step, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::Activation;

    fn check(cell: CellKind) {
        let spec = GradcheckSpec {
            cell,
            seed: 21,
            ..GradcheckSpec::default()
        };
        let report = random_gradient_check(&spec).unwrap();
        let per_layer = if cell == CellKind::Lstm { 2 } else { 3 };
        assert_eq!(report.len(), 2 * per_layer + 2);
        for b in &report {
            assert!(b.max_relative_error < 1e-5, "{cell:?} {b:?}");
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        check(CellKind::Lstm);
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        check(CellKind::Rnn(Activation::Tanh));
    }
}
