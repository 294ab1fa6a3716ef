//! Open-loop training corpora.
//!
//! Random step cooling curves, seed populations and initial concentrations
//! are drawn per operating condition, simulated through the plant, cut into
//! fixed-length history windows and split into train/validation/test sets at
//! trajectory granularity.

mod dataset;
pub mod features;

pub use dataset::{split_and_normalize, Dataset, FeatureStats, NormStats, SplitDatasets, SplitFractions};
pub use features::{AugmentedFrame, WindowMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plant::{simulate_batch, CoolingProfile, PlantParams, PlantState, ProfileLimits, SeedSpec, SolverWarning};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_conditions: usize,
    pub temp_bounds_c: (f64, f64),
    pub max_step_c: f64,
    pub sampling_interval_s: f64,
    pub batch_duration_s: f64,
    pub concentration_range_kg_per_kg: (f64, f64),
    pub seed_mean_range_m: (f64, f64),
    pub seed_std_range_m: (f64, f64),
    pub seed_loading_range_kg_per_kg: (f64, f64),
    pub rng_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_conditions: 700,
            temp_bounds_c: (5.0, 45.0),
            max_step_c: 7.0,
            sampling_interval_s: 3600.0,
            batch_duration_s: 86400.0,
            concentration_range_kg_per_kg: (0.55, 0.75),
            seed_mean_range_m: (100e-6, 125e-6),
            seed_std_range_m: (5e-6, 25e-6),
            seed_loading_range_kg_per_kg: (0.01, 0.05),
            rng_seed: 7000,
        }
    }
}

impl GenerationConfig {
    pub fn limits(&self) -> ProfileLimits {
        ProfileLimits {
            temp_min_c: self.temp_bounds_c.0,
            temp_max_c: self.temp_bounds_c.1,
            max_step_c: self.max_step_c,
        }
    }

    pub fn holds(&self) -> usize {
        (self.batch_duration_s / self.sampling_interval_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.limits().validate()?;
        if !(self.sampling_interval_s > 0.0 && self.batch_duration_s > 0.0) {
            return Err(Error::config(
                "sampling_interval_s and batch_duration_s must be positive",
            ));
        }
        let holds = self.batch_duration_s / self.sampling_interval_s;
        if (holds - holds.round()).abs() > 1e-9 || holds.round() < 1.0 {
            return Err(Error::config(
                "batch_duration_s must be a whole multiple of sampling_interval_s",
            ));
        }
        for (key, (lo, hi)) in [
            ("concentration_range_kg_per_kg", self.concentration_range_kg_per_kg),
            ("seed_mean_range_m", self.seed_mean_range_m),
            ("seed_std_range_m", self.seed_std_range_m),
            ("seed_loading_range_kg_per_kg", self.seed_loading_range_kg_per_kg),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(Error::config(format!("{key} must be an ordered non-negative pair")));
            }
        }
        if self.seed_mean_range_m.0 <= 3.0 * self.seed_std_range_m.1 {
            return Err(Error::config(
                "seed_mean_range_m lower bound must exceed three times the largest seed stddev",
            ));
        }
        if self.seed_loading_range_kg_per_kg.0 <= 0.0 {
            return Err(Error::config("seed_loading_range_kg_per_kg must be strictly positive"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Random step cooling curve: uniform start, bounded uniform increments, clamped.
pub fn random_cooling_profile(rng: &mut impl Rng, config: &GenerationConfig) -> CoolingProfile {
    let (lo, hi) = config.temp_bounds_c;
    let holds = config.holds();
    let mut values = Vec::with_capacity(holds);
    let mut current = uniform(rng, (lo, hi));
    values.push(current);
    for _ in 1..holds {
        let delta = uniform(rng, (-config.max_step_c, config.max_step_c));
        current = (current + delta).clamp(lo, hi);
        values.push(current);
    }
    CoolingProfile {
        hold_values: values,
        sampling_interval_s: config.sampling_interval_s,
        batch_duration_s: config.batch_duration_s,
    }
}

/// Independent RNG stream for one operating condition.
pub fn condition_rng(rng_seed: u64, condition_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(condition_id);
    rng
}

/// One drawn operating condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub id: u64,
    pub profile: CoolingProfile,
    pub initial_concentration: f64,
    pub seed: SeedSpec,
}

impl Condition {
    pub fn draw(config: &GenerationConfig, id: u64) -> Self {
        let mut rng = condition_rng(config.rng_seed, id);
        let profile = random_cooling_profile(&mut rng, config);
        let initial_concentration = uniform(&mut rng, config.concentration_range_kg_per_kg);
        let seed = SeedSpec {
            mean_size: uniform(&mut rng, config.seed_mean_range_m),
            size_stddev: uniform(&mut rng, config.seed_std_range_m),
            seed_loading: uniform(&mut rng, config.seed_loading_range_kg_per_kg),
        };
        Self {
            id,
            profile,
            initial_concentration,
            seed,
        }
    }

    /// Slurry and jacket start at the first hold temperature.
    pub fn initial_state(&self, params: &PlantParams) -> Result<PlantState> {
        PlantState::seeded(
            self.initial_concentration,
            self.profile.hold_values[0],
            &self.seed,
            &params.physical,
        )
    }
}

/// A simulated operating condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub condition: Condition,
    pub states: Vec<PlantState>,
    pub warnings: Vec<(usize, SolverWarning)>,
}

impl Trajectory {
    pub fn terminal_size(&self) -> f64 {
        self.states.last().map(|s| s.mean_size).unwrap_or(0.0)
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.condition.id.to_le_bytes());
        for s in &self.states {
            for v in features::plant_row(s) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCondition {
    pub id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: GenerationConfig,
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<FailedCondition>,
}

impl Corpus {
    /// Order-sensitive digest over all trajectory digests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.trajectories {
            h.update(t.digest().as_bytes());
        }
        for f in &self.failures {
            h.update(f.id.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            config: self.config.clone(),
            corpus_digest: self.digest(),
            conditions: self
                .trajectories
                .iter()
                .map(|t| ConditionEntry {
                    id: t.condition.id,
                    rng_seed: self.config.rng_seed,
                    rng_stream: t.condition.id,
                    initial_concentration: t.condition.initial_concentration,
                    seed: t.condition.seed,
                    terminal_size_um: t.terminal_size() * 1e6,
                    solver_warnings: t.warnings.len(),
                    digest: t.digest(),
                })
                .collect(),
            failures: self.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub id: u64,
    pub rng_seed: u64,
    pub rng_stream: u64,
    pub initial_concentration: f64,
    pub seed: SeedSpec,
    pub terminal_size_um: f64,
    pub solver_warnings: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: GenerationConfig,
    pub corpus_digest: String,
    pub conditions: Vec<ConditionEntry>,
    pub failures: Vec<FailedCondition>,
}

fn simulate_condition(condition: Condition, limits: &ProfileLimits, params: &PlantParams) -> Result<Trajectory> {
    let initial = condition.initial_state(params)?;
    let trace = simulate_batch(&initial, &condition.profile, limits, params)?;
    Ok(Trajectory {
        condition,
        states: trace.states,
        warnings: trace.warnings,
    })
}

/// Simulates `config.n_conditions` random operating conditions.
///
/// Runs on the current rayon pool; the result does not depend on the number
/// of workers. Failed simulations are recorded and skipped.
pub fn generate_corpus(config: &GenerationConfig, params: &PlantParams) -> Result<Corpus> {
    config.validate()?;
    params.validate()?;
    let limits = config.limits();
    let outcomes: Vec<_> = (0..config.n_conditions as u64)
        .into_par_iter()
        .map(|id| {
            let condition = Condition::draw(config, id);
            simulate_condition(condition, &limits, params).map_err(|e| FailedCondition {
                id,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut trajectories = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(t) => trajectories.push(t),
            Err(f) => {
                log::warn!("condition {} failed: {}", f.id, f.reason);
                failures.push(f);
            }
        }
    }
    Ok(Corpus {
        config: config.clone(),
        trajectories,
        failures,
    })
}

/// One training example: `window + 1` consecutive frames ending at `end`
/// and the target row for `end + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub trajectory: u64,
    pub end: usize,
    pub input: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Cuts a trajectory into history windows.
///
/// Surrogate frames carry in their jacket channel the temperature applied over
/// the interval that *starts* at the frame, so the window contains the move
/// whose effect the target describes. Controller frames carry the jacket
/// temperature that led to the frame, plus the trajectory's realized terminal
/// size and squared error; their target is the next move and next error.
pub fn windowize(trajectory: &Trajectory, window: usize, mode: WindowMode) -> Vec<WindowSample> {
    let states = &trajectory.states;
    if states.len() < window + 2 {
        log::warn!(
            "trajectory {} has {} frames, needs at least {}; no windows produced",
            trajectory.condition.id,
            states.len(),
            window + 2
        );
        return Vec::new();
    }
    let terminal = trajectory.terminal_size();
    let mut out = Vec::with_capacity(states.len() - window - 1);
    for end in window..states.len() - 1 {
        let (input, target) = match mode {
            WindowMode::Surrogate => {
                let input = (end - window..=end)
                    .map(|k| {
                        let mut row = features::plant_row(&states[k]);
                        row[features::JACKET] = states[k + 1].jacket_temp;
                        row.to_vec()
                    })
                    .collect();
                (input, features::surrogate_target_row(&states[end + 1]).to_vec())
            }
            WindowMode::Controller => {
                let input = (end - window..=end)
                    .map(|k| AugmentedFrame::new(states[k], terminal).row().to_vec())
                    .collect();
                let next = AugmentedFrame::new(states[end + 1], terminal);
                (input, vec![next.state.jacket_temp, next.squared_error * 1e12])
            }
        };
        out.push(WindowSample {
            trajectory: trajectory.condition.id,
            end,
            input,
            target,
        });
    }
    out
}

/// Windows for every trajectory, in corpus order.
pub fn windowize_corpus(corpus: &Corpus, window: usize, mode: WindowMode) -> Vec<WindowSample> {
    corpus
        .trajectories
        .iter()
        .flat_map(|t| windowize(t, window, mode))
        .collect()
}

/// Windows the corpus and splits it by trajectory.
///
/// The split only depends on `split_rng_seed`, so datasets built for both
/// modes from one corpus hold out the same trajectories.
pub fn build_datasets(
    corpus: &Corpus,
    window: usize,
    mode: WindowMode,
    fractions: SplitFractions,
    split_rng_seed: u64,
) -> Result<SplitDatasets> {
    let samples = windowize_corpus(corpus, window, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(split_rng_seed);
    split_and_normalize(&samples, mode, window, fractions, &mut rng)
}
