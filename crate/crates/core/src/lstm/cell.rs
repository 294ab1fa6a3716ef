use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

fn uniform_vector(rng: &mut impl Rng, len: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.random_range(-bound..=bound))
}

/// LSTM layer with the four gate matrices stacked row-wise in the order
/// forget, input, candidate, output. Each gate acts on `[h_prev, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerWeights {
    pub hidden_size: usize,
    pub input_size: usize,
    /// 4H × (H + I)
    pub weights: Array2<f64>,
    /// 4H
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl LstmLayerWeights {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            hidden_size,
            input_size,
            weights: Array2::zeros((4 * hidden_size, hidden_size + input_size)),
            bias: Array1::zeros(4 * hidden_size),
        }
    }

    /// Uniform in ±1/√(H + I) with the forget bias set to +1.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((hidden_size + input_size) as f64).sqrt();
        let mut bias = uniform_vector(rng, 4 * hidden_size, bound);
        bias.slice_mut(s![..hidden_size]).fill(1.0);
        Self {
            hidden_size,
            input_size,
            weights: uniform_matrix(rng, 4 * hidden_size, hidden_size + input_size, bound),
            bias,
        }
    }

    pub fn gate_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_size;
        let g = gate as usize;
        self.weights.slice(s![g * h..(g + 1) * h, ..])
    }
}

/// Values kept from one forward step for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    /// `[h_prev, x]`, B × (H + I)
    pub z: Array2<f64>,
    /// Activated gates f, I, C̄, O side by side, B × 4H
    pub gates: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

impl GateCache {
    pub fn gate(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.c_prev.ncols();
        let g = gate as usize;
        self.gates.slice(s![.., g * h..(g + 1) * h])
    }
}

/// One LSTM step for a batch of rows.
pub fn lstm_cell_forward(
    x: ArrayView2<'_, f64>,
    h_prev: ArrayView2<'_, f64>,
    c_prev: ArrayView2<'_, f64>,
    w: &LstmLayerWeights,
) -> (Array2<f64>, Array2<f64>, GateCache) {
    let hs = w.hidden_size;
    let z = concatenate(Axis(1), &[h_prev, x]).expect("batch sizes agree");
    let mut gates = z.dot(&w.weights.t()) + &w.bias;
    for mut row in gates.rows_mut() {
        for (j, a) in row.iter_mut().enumerate() {
            *a = if j / hs == Gate::Candidate as usize {
                a.tanh()
            } else {
                sigmoid(*a)
            };
        }
    }
    let batch = x.nrows();
    let mut c = Array2::zeros((batch, hs));
    let mut h = Array2::zeros((batch, hs));
    let mut tanh_c = Array2::zeros((batch, hs));
    for b in 0..batch {
        let g = gates.row(b);
        for j in 0..hs {
            let (f, i, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
            let cj = f * c_prev[[b, j]] + i * cand;
            let tc = cj.tanh();
            c[[b, j]] = cj;
            tanh_c[[b, j]] = tc;
            h[[b, j]] = o * tc;
        }
    }
    let cache = GateCache {
        z,
        gates,
        c_prev: c_prev.to_owned(),
        tanh_c,
    };
    (h, c, cache)
}

/// Backward through one LSTM step.
///
/// Takes the gradients reaching `h` and `c`, accumulates parameter gradients
/// into `grad`, and returns the gradients for `h_prev`, `c_prev` and `x`.
pub(crate) fn lstm_cell_backward(
    cache: &GateCache,
    dh: &Array2<f64>,
    dc_next: &Array2<f64>,
    w: &LstmLayerWeights,
    grad: &mut LstmLayerWeights,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let hs = w.hidden_size;
    let batch = dh.nrows();
    let mut da = Array2::zeros((batch, 4 * hs));
    let mut dc_prev = Array2::zeros((batch, hs));
    for b in 0..batch {
        let g = cache.gates.row(b);
        for j in 0..hs {
            let (f, i, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
            let tc = cache.tanh_c[[b, j]];
            let d_h = dh[[b, j]];
            let d_o = d_h * tc;
            let d_c = dc_next[[b, j]] + d_h * o * (1.0 - tc * tc);
            da[[b, j]] = d_c * cache.c_prev[[b, j]] * f * (1.0 - f);
            da[[b, hs + j]] = d_c * cand * i * (1.0 - i);
            da[[b, 2 * hs + j]] = d_c * i * (1.0 - cand * cand);
            da[[b, 3 * hs + j]] = d_o * o * (1.0 - o);
            dc_prev[[b, j]] = d_c * f;
        }
    }
    ndarray::linalg::general_mat_mul(1.0, &da.t(), &cache.z, 1.0, &mut grad.weights);
    grad.bias += &da.sum_axis(Axis(0));
    let dz = da.dot(&w.weights);
    let dh_prev = dz.slice(s![.., ..hs]).to_owned();
    let dx = dz.slice(s![.., hs..]).to_owned();
    (dh_prev, dc_prev, dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activated value.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Plain recurrent layer: h = act(w_A·x + w'_A·h_prev + b).
#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayerWeights {
    pub hidden_size: usize,
    pub input_size: usize,
    /// H × I
    pub input_weights: Array2<f64>,
    /// H × H
    pub recurrent_weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl RnnLayerWeights {
    pub fn zeros(input_size: usize, hidden_size: usize, activation: Activation) -> Self {
        Self {
            hidden_size,
            input_size,
            input_weights: Array2::zeros((hidden_size, input_size)),
            recurrent_weights: Array2::zeros((hidden_size, hidden_size)),
            bias: Array1::zeros(hidden_size),
            activation,
        }
    }

    pub fn init(input_size: usize, hidden_size: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((hidden_size + input_size) as f64).sqrt();
        Self {
            hidden_size,
            input_size,
            input_weights: uniform_matrix(rng, hidden_size, input_size, bound),
            recurrent_weights: uniform_matrix(rng, hidden_size, hidden_size, bound),
            bias: uniform_vector(rng, hidden_size, bound),
            activation,
        }
    }
}

pub(crate) fn rnn_cell_forward(
    x: ArrayView2<'_, f64>,
    h_prev: ArrayView2<'_, f64>,
    w: &RnnLayerWeights,
) -> Array2<f64> {
    let mut a = x.dot(&w.input_weights.t()) + h_prev.dot(&w.recurrent_weights.t()) + &w.bias;
    a.mapv_inplace(|v| w.activation.apply(v));
    a
}

/// Returns (dh_prev, dx).
pub(crate) fn rnn_cell_backward(
    x: ArrayView2<'_, f64>,
    h_prev: ArrayView2<'_, f64>,
    h: &Array2<f64>,
    dh: &Array2<f64>,
    w: &RnnLayerWeights,
    grad: &mut RnnLayerWeights,
) -> (Array2<f64>, Array2<f64>) {
    let act = w.activation;
    let da = ndarray::Zip::from(dh)
        .and(h)
        .map_collect(|&d, &y| d * act.derivative(y));
    ndarray::linalg::general_mat_mul(1.0, &da.t(), &x, 1.0, &mut grad.input_weights);
    ndarray::linalg::general_mat_mul(1.0, &da.t(), &h_prev, 1.0, &mut grad.recurrent_weights);
    grad.bias += &da.sum_axis(Axis(0));
    (da.dot(&w.recurrent_weights), da.dot(&w.input_weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_half_gates() {
        let w = LstmLayerWeights::zeros(3, 4);
        let x = Array2::from_elem((1, 3), 0.7);
        let zero = Array2::zeros((1, 4));
        let (h, c, cache) = lstm_cell_forward(x.view(), zero.view(), zero.view(), &w);
        assert!(h.iter().chain(c.iter()).all(|&v| v == 0.0));
        for g in [Gate::Forget, Gate::Input, Gate::Output] {
            assert!(cache.gate(g).iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let w = LstmLayerWeights::zeros(2, 3);
        let x = array![[1.0, -2.0]];
        let c_prev = array![[0.8, -1.5, 3.0]];
        let h_prev = array![[0.1, 0.2, 0.3]];
        let (h, c, _) = lstm_cell_forward(x.view(), h_prev.view(), c_prev.view(), &w);
        for j in 0..3 {
            let v = c_prev[[0, j]];
            assert_eq!(c[[0, j]], 0.5 * v);
            assert!((h[[0, j]] - 0.5 * (0.5 * v).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn gates_stay_bounded_for_large_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = LstmLayerWeights::init(3, 5, &mut rng);
        w.weights.mapv_inplace(|v| v * 200.0);
        let x = array![[1e3, -1e3, 50.0], [0.0, 1e-3, -7.0]];
        let h_prev = Array2::from_elem((2, 5), 0.9);
        let c_prev = Array2::from_elem((2, 5), -4.0);
        let (h, c, cache) = lstm_cell_forward(x.view(), h_prev.view(), c_prev.view(), &w);
        for g in [Gate::Forget, Gate::Input, Gate::Output] {
            assert!(cache.gate(g).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(cache.gate(Gate::Candidate).iter().all(|&v| (-1.0..=1.0).contains(&v)));
        assert!(h.iter().all(|v| v.abs() <= 1.0));
        assert!(c.iter().all(|v| v.abs() <= 5.0));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = LstmLayerWeights::init(4, 6, &mut rng);
        assert!(w.bias.slice(s![..6]).iter().all(|&b| b == 1.0));
        let bound = 1.0 / 10f64.sqrt();
        assert!(w.weights.iter().all(|v| v.abs() <= bound));
        assert_eq!(w.gate_weights(Gate::Output).dim(), (6, 10));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(0.3) - 1.0 / (1.0 + (-0.3f64).exp())).abs() < 1e-16);
    }
}
