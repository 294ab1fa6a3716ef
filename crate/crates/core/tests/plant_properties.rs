use lstmc_core::datagen::{random_cooling_profile, Condition, GenerationConfig};
use lstmc_core::plant::fv::regression_cases;
use lstmc_core::plant::{simulate_batch, PlantParams, PlantState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Solute plus crystal mass, kg per kg slurry.
fn total_mass(s: &PlantState) -> f64 {
    s.concentration + s.suspension_density
}

fn mass_drift(states: &[PlantState]) -> f64 {
    let m0 = total_mass(&states[0]);
    states
        .iter()
        .map(|s| ((total_mass(s) - m0) / m0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn moment_solver_tracks_reference_on_regression_set() {
    let params = PlantParams::default();
    for case in regression_cases() {
        let out = case.run(&params).unwrap();
        let gap = out.mean_size_relative_gap();
        assert!(gap < 0.01, "{}: relative gap {gap}", case.name);
    }
}

#[test]
fn mass_closes_on_regression_set() {
    let params = PlantParams::default();
    for case in regression_cases() {
        let out = case.run(&params).unwrap();
        let drift = mass_drift(&out.moment.states);
        assert!(drift < 1e-3, "{}: mass drift {drift}", case.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn moments_never_decrease_and_mass_closes(id in 0u64..1_000_000, profile_seed in any::<u64>()) {
        let params = PlantParams::default();
        let cfg = GenerationConfig::default();
        let mut condition = Condition::draw(&cfg, id);
        condition.profile = random_cooling_profile(&mut ChaCha8Rng::seed_from_u64(profile_seed), &cfg);
        let initial = condition.initial_state(&params).unwrap();
        let trace = simulate_batch(&initial, &condition.profile, &cfg.limits(), &params).unwrap();
        for pair in trace.states.windows(2) {
            let (a, b) = (pair[0].moments().0, pair[1].moments().0);
            for k in 0..4 {
                prop_assert!(b[k] >= a[k], "mu{k} fell from {} to {}", a[k], b[k]);
            }
        }
        prop_assert!(mass_drift(&trace.states) < 1e-3);
    }
}
