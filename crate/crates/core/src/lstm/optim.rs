use super::Params;
use crate::error::{Error, Result};

/// Scales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grad: &mut Params, max_norm: f64) -> f64 {
    let norm = grad
        .blocks()
        .iter()
        .flat_map(|(_, b)| b.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        grad.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &Params, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let shapes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. On a non-finite update the parameters are left
    /// untouched and the error names the block.
    pub fn step(&mut self, params: &mut Params, grad: &Params) -> Result<()> {
        let t = self.t + 1;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        let grads = grad.blocks();
        let mut m_new = self.m.clone();
        let mut v_new = self.v.clone();
        let mut updates: Vec<Vec<f64>> = Vec::with_capacity(grads.len());
        for (k, (name, g)) in grads.iter().enumerate() {
            let mut u = Vec::with_capacity(g.len());
            for (i, &gi) in g.iter().enumerate() {
                let m = self.beta1 * m_new[k][i] + (1.0 - self.beta1) * gi;
                let v = self.beta2 * v_new[k][i] + (1.0 - self.beta2) * gi * gi;
                m_new[k][i] = m;
                v_new[k][i] = v;
                let step = self.learning_rate * (m / bc1) / ((v / bc2).sqrt() + self.epsilon);
                if !step.is_finite() {
                    return Err(Error::Divergence {
                        epoch: 0,
                        batch: 0,
                        block: name.clone(),
                        detail: format!("non-finite update at element {i}"),
                    });
                }
                u.push(step);
            }
            updates.push(u);
        }
        for ((_, p), u) in params.blocks_mut().into_iter().zip(&updates) {
            p.iter_mut().zip(u).for_each(|(p, d)| *p -= d);
        }
        self.m = m_new;
        self.v = v_new;
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{Dense, Layer, LstmLayerWeights};
    use ndarray::{Array1, Array2};

    fn tiny() -> Params {
        Params {
            layers: vec![Layer::Lstm(LstmLayerWeights::zeros(1, 1))],
            head: Dense {
                weights: Array2::from_elem((1, 1), 0.5),
                bias: Array1::from_elem(1, -0.25),
            },
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = tiny();
        let before = p.clone();
        let g = p.zeros_like();
        let mut adam = Adam::new(&p, 1e-3, 0.9, 0.999, 1e-8);
        for _ in 0..5 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = tiny();
        let mut g = p.zeros_like();
        g.head.bias[0] = 2.0;
        g.head.weights[[0, 0]] = -3.0;
        let mut adam = Adam::new(&p, 1e-2, 0.9, 0.999, 1e-8);
        for _ in 0..50 {
            adam.step(&mut p, &g).unwrap();
        }
        assert!(p.head.bias[0] < -0.25 - 0.4);
        assert!(p.head.weights[[0, 0]] > 0.5 + 0.4);
    }

    #[test]
    fn clipping_rescales_to_the_limit() {
        let mut g = tiny().zeros_like();
        g.head.bias[0] = 6.0;
        g.head.weights[[0, 0]] = 8.0;
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 10.0).abs() < 1e-12);
        let after = clip_global_norm(&mut g, 1.0);
        assert!((after - 1.0).abs() < 1e-12);
        assert!((g.head.bias[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.head.bias[0] = f64::NAN;
        let mut adam = Adam::new(&p, 1e-3, 0.9, 0.999, 1e-8);
        let err = adam.step(&mut p, &g).unwrap_err();
        assert!(matches!(err, Error::Divergence { ref block, .. } if block == "head.b"));
        assert_eq!(p, before);
    }
}
