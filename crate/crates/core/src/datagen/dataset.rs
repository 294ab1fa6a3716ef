use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{WindowMode, WindowSample};
use crate::container;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LSTMCDS\0";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Population statistics over the rows of `rows`; rejects constant features.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, names: &[String]) -> Result<Self> {
        let f = names.len();
        let mut n = 0usize;
        let mut sum = vec![0.0; f];
        let mut rows_vec = Vec::new();
        for r in rows {
            if r.len() != f {
                return Err(Error::schema(format!("row has {} features, expected {f}", r.len())));
            }
            n += 1;
            sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
            rows_vec.push(r);
        }
        if n == 0 {
            return Err(Error::config("cannot fit normalization statistics on an empty split"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; f];
        for r in rows_vec {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        for (name, (s, m)) in names.iter().zip(std.iter().zip(&mean)) {
            if !(*s > 1e-12 * m.abs().max(1e-300)) || !s.is_finite() {
                return Err(Error::config(format!(
                    "feature `{name}` has zero variance on the training split"
                )));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn normalize(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }

    pub fn denormalize(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = *x * s + m;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_features: Vec<String>,
    pub target_features: Vec<String>,
    pub inputs: FeatureStats,
    pub targets: FeatureStats,
}

/// Normalized windows ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: WindowMode,
    pub window: usize,
    pub norm: NormStats,
    /// (samples, window + 1, input features)
    pub inputs: Array3<f64>,
    /// (samples, target features)
    pub targets: Array2<f64>,
    pub trajectory_ids: Vec<u64>,
    pub end_indices: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    mode: WindowMode,
    window: usize,
    norm: NormStats,
    samples: usize,
    trajectory_ids: Vec<u64>,
    end_indices: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trajectories(&self) -> BTreeSet<u64> {
        self.trajectory_ids.iter().copied().collect()
    }

    /// Rows `idx` gathered into a new batch.
    pub fn batch(&self, idx: &[usize]) -> (Array3<f64>, Array2<f64>) {
        (self.inputs.select(Axis(0), idx), self.targets.select(Axis(0), idx))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = DatasetHeader {
            mode: self.mode,
            window: self.window,
            norm: self.norm.clone(),
            samples: self.len(),
            trajectory_ids: self.trajectory_ids.clone(),
            end_indices: self.end_indices.clone(),
        };
        let payload: Vec<f64> = self.inputs.iter().chain(self.targets.iter()).copied().collect();
        container::encode(MAGIC, DATASET_SCHEMA_VERSION, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (DatasetHeader, Vec<f64>) = container::decode(MAGIC, DATASET_SCHEMA_VERSION, bytes)?;
        let fi = h.norm.input_features.len();
        let fo = h.norm.target_features.len();
        let n_in = h.samples * (h.window + 1) * fi;
        if payload.len() != n_in + h.samples * fo
            || h.trajectory_ids.len() != h.samples
            || h.end_indices.len() != h.samples
            || h.norm.inputs.len() != fi
            || h.norm.targets.len() != fo
        {
            return Err(Error::schema("dataset header does not match its payload"));
        }
        let inputs = Array3::from_shape_vec((h.samples, h.window + 1, fi), payload[..n_in].to_vec())
            .map_err(|e| Error::schema(e.to_string()))?;
        let targets = Array2::from_shape_vec((h.samples, fo), payload[n_in..].to_vec())
            .map_err(|e| Error::schema(e.to_string()))?;
        Ok(Self {
            mode: h.mode,
            window: h.window,
            norm: h.norm,
            inputs,
            targets,
            trajectory_ids: h.trajectory_ids,
            end_indices: h.end_indices,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(container::sha256_hex(&self.to_bytes()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.583,
            val: 0.25,
            test: 0.167,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::config("split fractions must lie in [0, 1] and sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDatasets {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits samples by trajectory, fits z-scores on the training split and
/// normalizes all three splits with them.
///
/// A split whose fraction is positive but which receives no trajectory is a
/// configuration error; a zero fraction yields an empty dataset.
pub fn split_and_normalize(
    samples: &[WindowSample],
    mode: WindowMode,
    window: usize,
    fractions: SplitFractions,
    rng: &mut impl Rng,
) -> Result<SplitDatasets> {
    fractions.validate()?;
    let input_features = mode.input_features();
    let target_features = mode.target_features();
    for s in samples {
        if s.input.len() != window + 1
            || s.input.iter().any(|f| f.len() != input_features.len())
            || s.target.len() != target_features.len()
        {
            return Err(Error::schema(format!(
                "sample from trajectory {} does not match the {mode} layout with W = {window}",
                s.trajectory
            )));
        }
    }

    let mut ids: Vec<u64> = samples
        .iter()
        .map(|s| s.trajectory)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    ids.shuffle(rng);
    let n = ids.len();
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    for (name, f, count) in [
        ("train", fractions.train, n_train),
        ("val", fractions.val, n_val),
        ("test", fractions.test, n_test),
    ] {
        if f > 0.0 && count == 0 {
            return Err(Error::config(format!(
                "{name} split is empty ({n} trajectories, fraction {f})"
            )));
        }
    }
    if n_train == 0 {
        return Err(Error::config("train split is empty"));
    }
    let train_ids: BTreeSet<u64> = ids[..n_train].iter().copied().collect();
    let val_ids: BTreeSet<u64> = ids[n_train..n_train + n_val].iter().copied().collect();

    let pick =
        |set: &dyn Fn(u64) -> bool| -> Vec<&WindowSample> { samples.iter().filter(|s| set(s.trajectory)).collect() };
    let train = pick(&|id| train_ids.contains(&id));
    let val = pick(&|id| val_ids.contains(&id));
    let test = pick(&|id| !train_ids.contains(&id) && !val_ids.contains(&id));

    let norm = NormStats {
        inputs: FeatureStats::fit(
            train.iter().flat_map(|s| s.input.iter().map(|f| f.as_slice())),
            &input_features,
        )?,
        targets: FeatureStats::fit(train.iter().map(|s| s.target.as_slice()), &target_features)?,
        input_features,
        target_features,
    };

    let build = |part: &[&WindowSample]| -> Result<Dataset> {
        let fi = norm.input_features.len();
        let fo = norm.target_features.len();
        let mut inputs = Vec::with_capacity(part.len() * (window + 1) * fi);
        let mut targets = Vec::with_capacity(part.len() * fo);
        for s in part {
            for frame in &s.input {
                let mut row = frame.clone();
                norm.inputs.normalize(&mut row);
                inputs.extend(row);
            }
            let mut t = s.target.clone();
            norm.targets.normalize(&mut t);
            targets.extend(t);
        }
        Ok(Dataset {
            mode,
            window,
            norm: norm.clone(),
            inputs: Array3::from_shape_vec((part.len(), window + 1, fi), inputs)
                .map_err(|e| Error::schema(e.to_string()))?,
            targets: Array2::from_shape_vec((part.len(), fo), targets).map_err(|e| Error::schema(e.to_string()))?,
            trajectory_ids: part.iter().map(|s| s.trajectory).collect(),
            end_indices: part.iter().map(|s| s.end).collect(),
        })
    };
    Ok(SplitDatasets {
        train: build(&train)?,
        val: build(&val)?,
        test: build(&test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_corpus, windowize_corpus, GenerationConfig};
    use crate::plant::PlantParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn samples(n: usize, mode: WindowMode) -> Vec<WindowSample> {
        let cfg = GenerationConfig {
            n_conditions: n,
            ..GenerationConfig::default()
        };
        let corpus = generate_corpus(&cfg, &PlantParams::default()).unwrap();
        windowize_corpus(&corpus, 6, mode)
    }

    #[test]
    fn training_split_is_standardized_and_disjoint() {
        let s = samples(12, WindowMode::Controller);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = split_and_normalize(&s, WindowMode::Controller, 6, SplitFractions::default(), &mut rng).unwrap();
        let fi = d.train.norm.input_features.len();
        let flat = d.train.inputs.to_shape((d.train.len() * 7, fi)).unwrap().to_owned();
        for col in flat.columns() {
            let m = col.mean().unwrap();
            let sd = col.std(0.0);
            assert!(m.abs() < 1e-9, "mean {m}");
            assert!((sd - 1.0).abs() < 1e-6, "std {sd}");
        }
        for col in d.train.targets.columns() {
            assert!(col.mean().unwrap().abs() < 1e-9);
        }
        let (a, b, c) = (d.train.trajectories(), d.val.trajectories(), d.test.trajectories());
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(a.len() + b.len() + c.len(), 12);
        assert_eq!(d.train.len() + d.val.len() + d.test.len(), s.len());
    }

    #[test]
    fn degenerate_and_empty_splits() {
        let s = samples(3, WindowMode::Surrogate);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let all = SplitFractions {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        let d = split_and_normalize(&s, WindowMode::Surrogate, 6, all, &mut rng).unwrap();
        assert_eq!(d.train.trajectories().len(), 3);
        assert!(d.val.is_empty() && d.test.is_empty());

        let one = samples(1, WindowMode::Surrogate);
        let err = split_and_normalize(&one, WindowMode::Surrogate, 6, SplitFractions::default(), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn io_round_trip_and_truncation() {
        let s = samples(4, WindowMode::Surrogate);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fr = SplitFractions {
            train: 0.5,
            val: 0.25,
            test: 0.25,
        };
        let d = split_and_normalize(&s, WindowMode::Surrogate, 6, fr, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.ds");
        d.train.save(&p).unwrap();
        let back = Dataset::load(&p).unwrap();
        assert_eq!(back, d.train);
        assert_eq!(back.digest().unwrap(), d.train.digest().unwrap());
        let bytes = std::fs::read(&p).unwrap();
        assert!(matches!(
            Dataset::from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Corrupt(_))
        ));
    }
}
