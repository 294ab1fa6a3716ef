use std::sync::Arc;

use lstmc_core::controllers::{
    grid_first_move, mpc_plan, pi_tune_table, ConstantController, MpcConfig, MpcController, PiController,
    PlantPredictor,
};
use lstmc_core::datagen::{generate_corpus, windowize, GenerationConfig, Trajectory, WindowMode};
use lstmc_core::harness::{run_closed_loop, ClosedLoopResult, Scenario};
use lstmc_core::plant::{PlantParams, ProfileLimits};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> Vec<Trajectory> {
    let cfg = GenerationConfig {
        n_conditions: n,
        rng_seed: seed,
        ..GenerationConfig::default()
    };
    generate_corpus(&cfg, &PlantParams::default()).unwrap().trajectories
}

fn plant_predictor() -> PlantPredictor {
    PlantPredictor {
        params: PlantParams::default(),
        sampling_interval_s: 3600.0,
    }
}

#[test]
fn one_step_mpc_matches_exhaustive_grid() {
    let predictor = plant_predictor();
    let limits = ProfileLimits::default();
    let cfg = MpcConfig {
        horizon: 1,
        ..MpcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (i, traj) in corpus(20, 31).iter().enumerate() {
        let k = rng.random_range(6..22);
        let history = &traj.states[..=k];
        let set_point = rng.random_range(180e-6..220e-6);
        let remaining = 24 - k;
        let plan = mpc_plan(&predictor, history, set_point, remaining, &cfg, &limits, &mut rng, None).unwrap();
        let grid = grid_first_move(&predictor, history, set_point, remaining, &limits, 21).unwrap();
        let close = (plan.moves[0] - grid.best_move).abs() <= grid.cell_width;
        assert!(
            close || plan.cost <= grid.best_cost,
            "state {i}: mpc {} (cost {}) vs grid {} (cost {})",
            plan.moves[0],
            plan.cost,
            grid.best_move,
            grid.best_cost
        );
    }
}

fn assert_feasible(run: &ClosedLoopResult, limits: &ProfileLimits) {
    for pair in run.trace.windows(2) {
        let (a, b) = (pair[0].state.jacket_temp, pair[1].state.jacket_temp);
        assert!(limits.admits(a, b), "{} moved {a} -> {b}", run.controller);
    }
}

#[test]
fn closed_loop_moves_respect_the_envelope() {
    let params = PlantParams::default();
    for (sp, noise) in [(180.0, 0.0), (220.0, 0.15)] {
        let sc = Scenario {
            set_point_m: sp * 1e-6,
            noise_level: noise,
            ..Scenario::default()
        };
        let mut pi = PiController::new(pi_tune_table().lookup(sp).unwrap()).unwrap();
        assert_feasible(&run_closed_loop(&sc, &mut pi, &params).unwrap(), &sc.limits);
        let cfg = MpcConfig {
            candidate_count: 8,
            refine_iterations: 1,
            ..MpcConfig::default()
        };
        let mut mpc = MpcController::new(Arc::new(plant_predictor()), cfg).unwrap();
        assert_feasible(&run_closed_loop(&sc, &mut mpc, &params).unwrap(), &sc.limits);
    }
}

#[test]
fn noise_only_touches_measurements() {
    let params = PlantParams::default();
    let clean = Scenario::default();
    let noisy = Scenario {
        noise_level: 0.15,
        ..Scenario::default()
    };
    let mut c = ConstantController { jacket_temp: 30.0 };
    let a = run_closed_loop(&clean, &mut c, &params).unwrap();
    let b = run_closed_loop(&noisy, &mut c, &params).unwrap();
    assert!(a.trace.iter().zip(&b.trace).all(|(x, y)| x.state == y.state));
    assert!(a
        .trace
        .iter()
        .zip(&b.trace)
        .any(|(x, y)| x.measured_mean_size != y.measured_mean_size));
    for s in &b.trace {
        assert!((s.measured_mean_size / s.state.mean_size - 1.0).abs() <= 0.15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn clamp_is_always_feasible(previous in 5.0f64..=45.0, proposal in -1e3f64..1e3) {
        let limits = ProfileLimits::default();
        let next = limits.clamp(previous, proposal);
        prop_assert!(limits.admits(previous, next));
        if limits.admits(previous, proposal) {
            prop_assert_eq!(next, proposal);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn windows_cover_the_trajectory(window in 2usize..=12, id in 0u64..1000) {
        let traj = &corpus(1, id)[0];
        let n = traj.states.len();
        for mode in [WindowMode::Surrogate, WindowMode::Controller] {
            let samples = windowize(traj, window, mode);
            prop_assert_eq!(samples.len(), n - window - 1);
            for (i, s) in samples.iter().enumerate() {
                prop_assert_eq!(s.end, window + i);
                prop_assert_eq!(s.input.len(), window + 1);
            }
        }
        for s in windowize(traj, window, WindowMode::Controller) {
            prop_assert_eq!(s.target[0], traj.states[s.end + 1].jacket_temp);
        }
    }
}
