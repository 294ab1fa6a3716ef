use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Architecture, CellKind, Dense, Layer, LstmLayerWeights, LstmNetwork, ModelMeta, Params, RnnLayerWeights};
use crate::container;
use crate::datagen::NormStats;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LSTMCNN\0";
pub const WEIGHTS_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    meta: ModelMeta,
    norm: NormStats,
    architecture: Architecture,
    /// (name, length) per parameter block, in payload order.
    blocks: Vec<(String, usize)>,
}

impl LstmNetwork {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.params.blocks();
        let header = WeightsHeader {
            meta: self.meta.clone(),
            norm: self.norm.clone(),
            architecture: self.architecture(),
            blocks: blocks.iter().map(|(n, b)| (n.clone(), b.len())).collect(),
        };
        let payload: Vec<f64> = blocks.iter().flat_map(|(_, b)| b.iter().copied()).collect();
        container::encode(MAGIC, WEIGHTS_SCHEMA_VERSION, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (WeightsHeader, Vec<f64>) = container::decode(MAGIC, WEIGHTS_SCHEMA_VERSION, bytes)?;
        let n_in = h.meta.input_features.len();
        let n_out = h.meta.output_features.len();
        if h.norm.input_features != h.meta.input_features
            || h.norm.target_features != h.meta.output_features
            || h.norm.inputs.len() != n_in
            || h.norm.targets.len() != n_out
        {
            return Err(Error::schema(
                "normalization statistics disagree with the model feature layout",
            ));
        }
        if h.architecture.hidden_sizes.is_empty() {
            return Err(Error::schema("model has no layers"));
        }
        let mut input = n_in;
        let mut layers = Vec::new();
        for &hs in &h.architecture.hidden_sizes {
            layers.push(match h.architecture.cell {
                CellKind::Lstm => Layer::Lstm(LstmLayerWeights::zeros(input, hs)),
                CellKind::Rnn(a) => Layer::Rnn(RnnLayerWeights::zeros(input, hs, a)),
            });
            input = hs;
        }
        let mut params = Params {
            layers,
            head: Dense {
                weights: Array2::zeros((n_out, input)),
                bias: Array1::zeros(n_out),
            },
        };
        let expected: Vec<(String, usize)> = params.blocks().iter().map(|(n, b)| (n.clone(), b.len())).collect();
        if expected != h.blocks {
            return Err(Error::schema(format!(
                "parameter blocks {:?} do not match the declared architecture {:?}",
                h.blocks, expected
            )));
        }
        if payload.len() != expected.iter().map(|(_, n)| n).sum::<usize>() {
            return Err(Error::schema("payload length does not match the parameter count"));
        }
        let mut rest = payload.as_slice();
        for (_, block) in params.blocks_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        if payload.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corrupt("non-finite parameter in weight file".into()));
        }
        Ok(Self {
            params,
            norm: h.norm,
            meta: h.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::WindowMode;
    use crate::lstm::tests::toy_norm;
    use crate::lstm::Activation;
    use ndarray::Array3;

    #[test]
    fn round_trip_preserves_outputs() {
        for cell in [CellKind::Lstm, CellKind::Rnn(Activation::Relu)] {
            let arch = Architecture {
                cell,
                hidden_sizes: vec![5, 4],
            };
            let net = LstmNetwork::new(&arch, WindowMode::Controller, 6, toy_norm(3, 2), 8).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m/net.bin");
            net.save(&p).unwrap();
            let back = LstmNetwork::load(&p).unwrap();
            assert_eq!(back, net);
            let x = Array3::from_shape_fn((2, 7, 3), |(a, b, c)| (a + 2 * b + 3 * c) as f64 * 0.1);
            assert_eq!(
                back.forward_batch(x.view()).unwrap(),
                net.forward_batch(x.view()).unwrap()
            );
            assert!(back.check_compatible(8, &back.meta.input_features).is_err());

            let bytes = std::fs::read(&p).unwrap();
            assert!(LstmNetwork::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        }
    }
}
