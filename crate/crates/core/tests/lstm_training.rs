use lstmc_core::datagen::{
    build_datasets, generate_corpus, windowize_corpus, Dataset, FeatureStats, GenerationConfig, NormStats,
    SplitDatasets, SplitFractions, WindowMode,
};
use lstmc_core::lstm::{
    dataset_nmse, random_gradient_check, train, Activation, Architecture, CellKind, GradcheckSpec, LstmNetwork,
    TrainConfig,
};
use lstmc_core::plant::PlantParams;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn identity_norm(inputs: usize, outputs: usize) -> NormStats {
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

/// y = Σ_t a_t·x_t[0] + 0.5·x_T[1], a linear map of the whole window.
fn linear_task(samples: usize, window: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = window + 1;
    let inputs = Array3::from_shape_simple_fn((samples, steps, 2), || rng.random_range(-1.0..1.0));
    let weights: Vec<f64> = (0..steps).map(|t| 0.3 + 0.1 * t as f64).collect();
    let targets = Array2::from_shape_fn((samples, 1), |(b, _)| {
        (0..steps).map(|t| weights[t] * inputs[[b, t, 0]]).sum::<f64>() + 0.5 * inputs[[b, window, 1]]
    });
    Dataset {
        mode: WindowMode::Surrogate,
        window,
        norm: identity_norm(2, 1),
        inputs,
        targets,
        trajectory_ids: (0..samples as u64).collect(),
        end_indices: vec![window; samples],
    }
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-3,
        batch_size: 32,
        max_epochs: 200,
        early_stop_patience: 25,
        ..TrainConfig::default()
    }
}

#[test]
fn learns_a_linear_sequence_map() {
    let (tr, val) = (linear_task(512, 4, 1), linear_task(128, 4, 2));
    let arch = Architecture {
        cell: CellKind::Lstm,
        hidden_sizes: vec![16],
    };
    let net = LstmNetwork::new(&arch, WindowMode::Surrogate, 4, tr.norm.clone(), 3).unwrap();
    let (net, report) = train(net, &tr, &val, &toy_config()).unwrap();
    let nmse = dataset_nmse(&net, &val).unwrap();
    assert!(
        nmse < 1e-3,
        "validation NMSE {nmse} after {} epochs",
        report.curves.len()
    );
}

#[test]
fn returns_best_checkpoint_deterministically() {
    let (tr, val) = (linear_task(128, 3, 4), linear_task(64, 3, 5));
    let arch = Architecture {
        cell: CellKind::Lstm,
        hidden_sizes: vec![6],
    };
    let cfg = TrainConfig {
        max_epochs: 15,
        early_stop_patience: 3,
        learning_rate: 2e-2,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let run = || {
        let net = LstmNetwork::new(&arch, WindowMode::Surrogate, 3, tr.norm.clone(), 9).unwrap();
        train(net, &tr, &val, &cfg).unwrap()
    };
    let (a, report) = run();
    let (b, _) = run();
    assert_eq!(a.params, b.params);
    let val_nmse = dataset_nmse(&a, &val).unwrap();
    assert_eq!(val_nmse, report.best_val_nmse);
    assert!(report.curves.iter().all(|c| val_nmse <= c.val_nmse));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gradients_match_finite_differences_for_random_shapes(
        cell in prop_oneof![
            Just(CellKind::Lstm),
            Just(CellKind::Rnn(Activation::Tanh)),
            Just(CellKind::Rnn(Activation::Relu)),
        ],
        hidden_sizes in prop::collection::vec(1usize..6, 1..3),
        window in 1usize..6,
        input_size in 1usize..4,
        output_size in 1usize..3,
        batch in 1usize..4,
        seed in any::<u64>(),
    ) {
        let spec = GradcheckSpec { cell, hidden_sizes, window, input_size, output_size, batch, seed, ..GradcheckSpec::default() };
        for block in random_gradient_check(&spec).unwrap() {
            prop_assert!(block.max_relative_error < 1e-5, "{block:?}");
        }
    }
}

fn small_corpus_datasets(window: usize, n_conditions: usize) -> SplitDatasets {
    let cfg = GenerationConfig {
        n_conditions,
        ..GenerationConfig::default()
    };
    let corpus = generate_corpus(&cfg, &PlantParams::default()).unwrap();
    build_datasets(&corpus, window, WindowMode::Surrogate, SplitFractions::default(), 3).unwrap()
}

fn quick_surrogate(cell: CellKind, data: &SplitDatasets, epochs: usize) -> (LstmNetwork, Vec<f64>) {
    let arch = Architecture {
        cell,
        hidden_sizes: vec![16],
    };
    let net = LstmNetwork::new(
        &arch,
        WindowMode::Surrogate,
        data.train.window,
        data.train.norm.clone(),
        5,
    )
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: epochs,
        early_stop_patience: epochs,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let (net, report) = train(net, &data.train, &data.val, &cfg).unwrap();
    (net, report.curves.iter().map(|c| c.val_nmse).collect())
}

/// Independent per-frame ±10% jitter of L̄ moves the prediction less than
/// the same jitter applied as one shift to the whole window.
#[test]
fn surrogate_damps_frame_level_noise() {
    let data = small_corpus_datasets(6, 80);
    let (net, _) = quick_surrogate(CellKind::Lstm, &data, 25);
    let corpus = generate_corpus(
        &GenerationConfig {
            n_conditions: 10,
            rng_seed: 99,
            ..GenerationConfig::default()
        },
        &PlantParams::default(),
    )
    .unwrap();
    let windows = windowize_corpus(&corpus, 6, WindowMode::Surrogate);
    let feature = net.meta.input_features.iter().position(|f| f == "Lbar_um").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 64;
    let (mut iid, mut coherent) = (0.0, 0.0);
    for w in windows.iter().step_by(7) {
        let steps = w.input.len();
        let mut batch = Array3::zeros((2 * draws, steps, w.input[0].len()));
        for d in 0..draws {
            let shift: f64 = rng.random_range(-0.1..0.1);
            for (t, frame) in w.input.iter().enumerate() {
                for (j, &v) in frame.iter().enumerate() {
                    batch[[d, t, j]] = v;
                    batch[[draws + d, t, j]] = v;
                }
                batch[[d, t, feature]] *= 1.0 + rng.random_range(-0.1..0.1);
                batch[[draws + d, t, feature]] *= 1.0 + shift;
            }
        }
        let out = net.predict_raw(&batch).unwrap();
        let spread = |rows: std::ops::Range<usize>| -> f64 {
            let mut total = 0.0;
            for (j, col) in out.columns().into_iter().enumerate() {
                let vals: Vec<f64> = rows.clone().map(|r| col[r]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
                total += var / net.norm.targets.std[j].powi(2);
            }
            total
        };
        iid += spread(0..draws);
        coherent += spread(draws..2 * draws);
    }
    assert!(iid < coherent, "i.i.d. {iid} vs coherent {coherent}");
}

/// Loss-curve comparison at W = 10; printed, no threshold.
#[test]
fn plain_rnn_baseline_trains_at_long_windows() {
    let data = small_corpus_datasets(10, 60);
    let (_, lstm) = quick_surrogate(CellKind::Lstm, &data, 12);
    let (_, rnn) = quick_surrogate(CellKind::Rnn(Activation::Tanh), &data, 12);
    println!("epoch,lstm_val_nmse,rnn_val_nmse");
    for (e, (a, b)) in lstm.iter().zip(&rnn).enumerate() {
        println!("{},{a:.4e},{b:.4e}", e + 1);
    }
    assert!(lstm.iter().chain(&rnn).all(|v| v.is_finite()));
}
