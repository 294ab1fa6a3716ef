//! Recurrent sequence models written directly on `ndarray`.
//!
//! A network is a stack of recurrent layers scanned over a window of
//! normalized frames, followed by an affine head on the last hidden state of
//! the top layer. Gradients come from exact backpropagation through time.

mod cell;
mod gradcheck;
mod io;
mod optim;
mod train;

pub use cell::{lstm_cell_forward, Activation, Gate, GateCache, LstmLayerWeights, RnnLayerWeights};
pub use gradcheck::{
    gradient_check, random_gradient_check, relative_error, BlockCheck, GradcheckSpec, RELATIVE_ERROR_FLOOR,
};
pub use io::WEIGHTS_SCHEMA_VERSION;
pub use optim::{clip_global_norm, Adam};
pub use train::{dataset_nmse, nmse, train, write_curves_csv, EpochRecord, TrainConfig, TrainReport};

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{NormStats, WindowMode};
use crate::error::{Error, Result};

use cell::{lstm_cell_backward, rnn_cell_backward, rnn_cell_forward};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Lstm(LstmLayerWeights),
    Rnn(RnnLayerWeights),
}

impl Layer {
    pub fn input_size(&self) -> usize {
        match self {
            Layer::Lstm(w) => w.input_size,
            Layer::Rnn(w) => w.input_size,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Layer::Lstm(w) => w.hidden_size,
            Layer::Rnn(w) => w.hidden_size,
        }
    }

    fn zeros_like(&self) -> Layer {
        match self {
            Layer::Lstm(w) => Layer::Lstm(LstmLayerWeights::zeros(w.input_size, w.hidden_size)),
            Layer::Rnn(w) => Layer::Rnn(RnnLayerWeights::zeros(w.input_size, w.hidden_size, w.activation)),
        }
    }
}

/// Affine output map from the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// O × H
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Layer>,
    pub head: Dense,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
            head: Dense {
                weights: Array2::zeros(self.head.weights.raw_dim()),
                bias: Array1::zeros(self.head.bias.len()),
            },
        }
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Lstm(w) => {
                    out.push((format!("layer{i}.w"), w.weights.as_slice().unwrap()));
                    out.push((format!("layer{i}.b"), w.bias.as_slice().unwrap()));
                }
                Layer::Rnn(w) => {
                    out.push((format!("layer{i}.w_in"), w.input_weights.as_slice().unwrap()));
                    out.push((format!("layer{i}.w_rec"), w.recurrent_weights.as_slice().unwrap()));
                    out.push((format!("layer{i}.b"), w.bias.as_slice().unwrap()));
                }
            }
        }
        out.push(("head.w".into(), self.head.weights.as_slice().unwrap()));
        out.push(("head.b".into(), self.head.bias.as_slice().unwrap()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            match l {
                Layer::Lstm(w) => {
                    out.push((format!("layer{i}.w"), w.weights.as_slice_mut().unwrap()));
                    out.push((format!("layer{i}.b"), w.bias.as_slice_mut().unwrap()));
                }
                Layer::Rnn(w) => {
                    out.push((format!("layer{i}.w_in"), w.input_weights.as_slice_mut().unwrap()));
                    out.push((format!("layer{i}.w_rec"), w.recurrent_weights.as_slice_mut().unwrap()));
                    out.push((format!("layer{i}.b"), w.bias.as_slice_mut().unwrap()));
                }
            }
        }
        out.push(("head.w".into(), self.head.weights.as_slice_mut().unwrap()));
        out.push(("head.b".into(), self.head.bias.as_slice_mut().unwrap()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn scale(&mut self, k: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= k);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Lstm,
    Rnn(Activation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub cell: CellKind,
    pub hidden_sizes: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            cell: CellKind::Lstm,
            hidden_sizes: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub mode: WindowMode,
    pub window: usize,
    pub input_features: Vec<String>,
    pub output_features: Vec<String>,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmNetwork {
    pub params: Params,
    pub norm: NormStats,
    pub meta: ModelMeta,
}

enum LayerCache {
    Lstm(Vec<GateCache>),
    Rnn {
        inputs: Vec<Array2<f64>>,
        /// h_{-1}..h_{T-1}
        hidden: Vec<Array2<f64>>,
    },
}

/// Everything the backward pass needs from one batched forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    last_hidden: Array2<f64>,
    batch: usize,
    steps: usize,
}

fn check_finite(a: &Array2<f64>, layer: usize, step: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer, step })
    }
}

impl Params {
    /// Random initialization for `input_size` features and `output_size` outputs.
    pub fn init(
        arch: &Architecture,
        input_size: usize,
        output_size: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<Params> {
        if arch.hidden_sizes.is_empty() || arch.hidden_sizes.contains(&0) {
            return Err(Error::config("architecture needs at least one non-empty layer"));
        }
        let mut input = input_size;
        let mut layers = Vec::with_capacity(arch.hidden_sizes.len());
        for &h in &arch.hidden_sizes {
            layers.push(match arch.cell {
                CellKind::Lstm => Layer::Lstm(LstmLayerWeights::init(input, h, rng)),
                CellKind::Rnn(act) => Layer::Rnn(RnnLayerWeights::init(input, h, act, rng)),
            });
            input = h;
        }
        let bound = 1.0 / (input as f64).sqrt();
        let head = Dense {
            weights: Array2::from_shape_simple_fn((output_size, input), || rng.random_range(-bound..=bound)),
            bias: Array1::zeros(output_size),
        };
        Ok(Params { layers, head })
    }

    /// Scans a batch of windows (B × T × F) and returns outputs (B × O).
    pub fn forward(&self, inputs: ArrayView3<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let (batch, steps, features) = inputs.dim();
        if self.layers.first().map(|l| l.input_size()) != Some(features) {
            return Err(Error::schema(format!(
                "network expects {} input features, got {features}",
                self.layers.first().map(|l| l.input_size()).unwrap_or(0)
            )));
        }
        let mut seq: Vec<Array2<f64>> = (0..steps).map(|t| inputs.index_axis(Axis(1), t).to_owned()).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let hs = layer.hidden_size();
            let mut h = Array2::zeros((batch, hs));
            let mut out = Vec::with_capacity(steps);
            match layer {
                Layer::Lstm(w) => {
                    let mut c = Array2::zeros((batch, hs));
                    let mut gates = Vec::with_capacity(steps);
                    for (t, x) in seq.iter().enumerate() {
                        let (h_new, c_new, cache) = lstm_cell_forward(x.view(), h.view(), c.view(), w);
                        check_finite(&h_new, li, t)?;
                        check_finite(&c_new, li, t)?;
                        h = h_new;
                        c = c_new;
                        out.push(h.clone());
                        gates.push(cache);
                    }
                    caches.push(LayerCache::Lstm(gates));
                }
                Layer::Rnn(w) => {
                    let mut hidden = vec![h.clone()];
                    for (t, x) in seq.iter().enumerate() {
                        h = rnn_cell_forward(x.view(), h.view(), w);
                        check_finite(&h, li, t)?;
                        hidden.push(h.clone());
                        out.push(h.clone());
                    }
                    caches.push(LayerCache::Rnn {
                        inputs: std::mem::take(&mut seq),
                        hidden,
                    });
                }
            }
            seq = out;
        }
        let last_hidden = seq.pop().ok_or_else(|| Error::schema("empty window"))?;
        let y = last_hidden.dot(&self.head.weights.t()) + &self.head.bias;
        check_finite(&y, self.layers.len(), steps.saturating_sub(1))?;
        Ok((
            y,
            ForwardCache {
                layers: caches,
                last_hidden,
                batch,
                steps,
            },
        ))
    }

    /// Gradients of a scalar loss given dL/d(output) for every batch row.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Params {
        let mut grad = self.zeros_like();
        ndarray::linalg::general_mat_mul(1.0, &d_output.t(), &cache.last_hidden, 1.0, &mut grad.head.weights);
        grad.head.bias += &d_output.sum_axis(Axis(0));

        let top_h = self.head.weights.ncols();
        let mut d_seq: Vec<Array2<f64>> = (0..cache.steps).map(|_| Array2::zeros((cache.batch, top_h))).collect();
        d_seq[cache.steps - 1] = d_output.dot(&self.head.weights);

        for li in (0..self.layers.len()).rev() {
            let hs = self.layers[li].hidden_size();
            let mut dh_next = Array2::zeros((cache.batch, hs));
            let mut d_in = Vec::with_capacity(cache.steps);
            match (&self.layers[li], &cache.layers[li], &mut grad.layers[li]) {
                (Layer::Lstm(w), LayerCache::Lstm(gates), Layer::Lstm(g)) => {
                    let mut dc_next = Array2::zeros((cache.batch, hs));
                    for t in (0..cache.steps).rev() {
                        let dh = &d_seq[t] + &dh_next;
                        let (dh_prev, dc_prev, dx) = lstm_cell_backward(&gates[t], &dh, &dc_next, w, g);
                        dh_next = dh_prev;
                        dc_next = dc_prev;
                        d_in.push(dx);
                    }
                }
                (Layer::Rnn(w), LayerCache::Rnn { inputs, hidden }, Layer::Rnn(g)) => {
                    for t in (0..cache.steps).rev() {
                        let dh = &d_seq[t] + &dh_next;
                        let (dh_prev, dx) =
                            rnn_cell_backward(inputs[t].view(), hidden[t].view(), &hidden[t + 1], &dh, w, g);
                        dh_next = dh_prev;
                        d_in.push(dx);
                    }
                }
                _ => unreachable!("gradient and cache mirror the parameter layout"),
            }
            d_in.reverse();
            d_seq = d_in;
        }
        grad
    }

    /// Mean squared error over all batch rows and outputs, with gradients.
    pub fn mse_gradients(
        &self,
        inputs: ArrayView3<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Params, Array2<f64>)> {
        let (y, cache) = self.forward(inputs)?;
        let resid = &y - &targets;
        let n = resid.len() as f64;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let d = resid.mapv(|r| 2.0 * r / n);
        Ok((loss, self.backward(&cache, &d), y))
    }
}

impl LstmNetwork {
    /// Randomly initialized network for `norm`'s feature layout.
    pub fn new(arch: &Architecture, mode: WindowMode, window: usize, norm: NormStats, seed: u64) -> Result<Self> {
        if arch.hidden_sizes.is_empty() || arch.hidden_sizes.contains(&0) {
            return Err(Error::config("architecture needs at least one non-empty layer"));
        }
        if window == 0 {
            return Err(Error::config("window must be at least one step"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(arch, norm.input_features.len(), norm.target_features.len(), &mut rng)?;
        let meta = ModelMeta {
            mode,
            window,
            input_features: norm.input_features.clone(),
            output_features: norm.target_features.clone(),
            schema_version: WEIGHTS_SCHEMA_VERSION,
        };
        Ok(Self { params, norm, meta })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            cell: match self.params.layers.first() {
                Some(Layer::Rnn(w)) => CellKind::Rnn(w.activation),
                _ => CellKind::Lstm,
            },
            hidden_sizes: self.params.layers.iter().map(Layer::hidden_size).collect(),
        }
    }

    /// Rejects data laid out differently from what the network was trained on.
    pub fn check_compatible(&self, window: usize, input_features: &[String]) -> Result<()> {
        if window != self.meta.window {
            return Err(Error::Incompatible(format!(
                "model was trained with W = {}, data uses W = {window}",
                self.meta.window
            )));
        }
        if input_features != self.meta.input_features.as_slice() {
            return Err(Error::schema(format!(
                "feature ordering {:?} does not match the model's {:?}",
                input_features, self.meta.input_features
            )));
        }
        Ok(())
    }

    /// Outputs for a batch of normalized windows (B × (W+1) × F), on the
    /// normalized target scale.
    pub fn forward_batch(&self, inputs: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        if inputs.dim().1 != self.meta.window + 1 {
            return Err(Error::schema(format!(
                "window has {} frames, model expects {}",
                inputs.dim().1,
                self.meta.window + 1
            )));
        }
        Ok(self.params.forward(inputs)?.0)
    }

    /// Single normalized window ((W+1) × F) to normalized outputs.
    pub fn forward(&self, window: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let batch = window.insert_axis(Axis(0));
        Ok(self.forward_batch(batch)?.row(0).to_owned())
    }

    /// Raw frames in, raw (denormalized) outputs out.
    pub fn predict_raw(&self, frames: &Array3<f64>) -> Result<Array2<f64>> {
        let mut x = frames.clone();
        for mut row in x.rows_mut() {
            self.norm
                .inputs
                .normalize(row.as_slice_mut().expect("row-major frames"));
        }
        let mut y = self.forward_batch(x.view())?;
        for mut row in y.rows_mut() {
            self.norm
                .targets
                .denormalize(row.as_slice_mut().expect("row-major outputs"));
        }
        Ok(y)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::datagen::FeatureStats;
    use ndarray::Array3;
    use rand::Rng;

    pub(crate) fn toy_norm(inputs: usize, outputs: usize) -> NormStats {
        NormStats {
            input_features: (0..inputs).map(|i| format!("x{i}")).collect(),
            target_features: (0..outputs).map(|i| format!("y{i}")).collect(),
            inputs: FeatureStats {
                mean: vec![0.0; inputs],
                std: vec![1.0; inputs],
            },
            targets: FeatureStats {
                mean: vec![0.0; outputs],
                std: vec![1.0; outputs],
            },
        }
    }

    fn random_batch(b: usize, t: usize, f: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((b, t, f), || rng.random_range(-1.0..1.0))
    }

    fn arch(h: Vec<usize>) -> Architecture {
        Architecture {
            cell: CellKind::Lstm,
            hidden_sizes: h,
        }
    }

    #[test]
    fn duplicate_windows_give_identical_outputs() {
        let net = LstmNetwork::new(&arch(vec![5, 4]), WindowMode::Surrogate, 3, toy_norm(3, 2), 1).unwrap();
        let one = random_batch(1, 4, 3, 9);
        let two = ndarray::concatenate(Axis(0), &[one.view(), one.view()]).unwrap();
        let y = net.forward_batch(two.view()).unwrap();
        assert_eq!(y.row(0), y.row(1));
        assert_eq!(net.forward(one.index_axis(Axis(0), 0)).unwrap(), y.row(0));
    }

    #[test]
    fn oldest_frame_reaches_the_output() {
        let net = LstmNetwork::new(&arch(vec![6, 6]), WindowMode::Surrogate, 6, toy_norm(3, 2), 2).unwrap();
        let x = random_batch(1, 7, 3, 3);
        let mut x2 = x.clone();
        x2[[0, 0, 1]] += 0.5;
        let a = net.forward_batch(x.view()).unwrap();
        let b = net.forward_batch(x2.view()).unwrap();
        assert!((&a - &b).iter().any(|d| d.abs() > 1e-12));
    }

    #[test]
    fn zero_recurrence_reduces_to_feedforward() {
        let mut net = LstmNetwork::new(&arch(vec![4]), WindowMode::Surrogate, 3, toy_norm(2, 2), 5).unwrap();
        let Layer::Lstm(w) = &mut net.params.layers[0] else {
            unreachable!()
        };
        w.weights.slice_mut(ndarray::s![.., ..4]).fill(0.0);
        // Forget gate shut, so no state survives between steps.
        w.weights.slice_mut(ndarray::s![..4, ..]).fill(0.0);
        w.bias.slice_mut(ndarray::s![..4]).fill(-1e3);
        let w = w.clone();
        let x = random_batch(1, 4, 2, 7);
        let y = net.forward_batch(x.view()).unwrap();
        // Hand evaluation on the last frame only.
        let last = x.index_axis(Axis(1), 3);
        let a = last.dot(&w.weights.slice(ndarray::s![.., 4..]).t()) + &w.bias;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let h: Vec<f64> = (0..4)
            .map(|j| sig(a[[0, 12 + j]]) * (sig(a[[0, 4 + j]]) * a[[0, 8 + j]].tanh()).tanh())
            .collect();
        let h = Array1::from(h);
        let expect = net.params.head.weights.dot(&h) + &net.params.head.bias;
        for (p, q) in y.row(0).iter().zip(expect.iter()) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient_and_loss_scaling_is_linear() {
        let net = LstmNetwork::new(&arch(vec![5, 3]), WindowMode::Surrogate, 2, toy_norm(3, 2), 11).unwrap();
        let x = random_batch(4, 3, 3, 12);
        let (y, cache) = net.params.forward(x.view()).unwrap();
        let (_, g0, _) = net.params.mse_gradients(x.view(), y.view()).unwrap();
        assert!(g0.blocks().iter().all(|(_, b)| b.iter().all(|&v| v == 0.0)));

        let d = Array2::from_shape_fn(y.raw_dim(), |(i, j)| (i as f64 - j as f64) * 0.1);
        let g1 = net.params.backward(&cache, &d);
        let g3 = net.params.backward(&cache, &(&d * 3.0));
        for ((_, a), (_, b)) in g1.blocks().iter().zip(g3.blocks().iter()) {
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((3.0 * p - q).abs() <= 1e-12 * q.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn window_length_is_checked() {
        let net = LstmNetwork::new(&arch(vec![3]), WindowMode::Surrogate, 6, toy_norm(2, 1), 0).unwrap();
        assert!(matches!(
            net.forward_batch(random_batch(1, 9, 2, 0).view()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            net.check_compatible(8, &net.meta.input_features.clone()),
            Err(Error::Incompatible(_))
        ));
        assert!(net.check_compatible(6, &["x1".into(), "x0".into()]).is_err());
    }

    #[test]
    fn non_finite_inputs_are_reported() {
        let net = LstmNetwork::new(&arch(vec![3, 3]), WindowMode::Surrogate, 2, toy_norm(2, 1), 0).unwrap();
        let mut x = random_batch(1, 3, 2, 0);
        x[[0, 1, 0]] = f64::NAN;
        assert!(matches!(
            net.forward_batch(x.view()),
            Err(Error::NonFinite { layer: 0, step: 1 })
        ));
    }
}
