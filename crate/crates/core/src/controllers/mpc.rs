use std::sync::Arc;

use ndarray::{s, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControlContext, Controller};
use crate::datagen::{features, WindowMode};
use crate::error::{Error, Result};
use crate::lstm::LstmNetwork;
use crate::plant::{step, PlantParams, PlantState, ProfileLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub candidate_count: usize,
    pub refine_iterations: usize,
    pub rng_seed: u64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            candidate_count: 64,
            refine_iterations: 4,
            rng_seed: 0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("MPC horizon must be at least 1"));
        }
        if self.candidate_count < 8 {
            return Err(Error::config("MPC needs at least 8 shooting candidates"));
        }
        Ok(())
    }
}

/// Forecasts the terminal mean size for candidate jacket schedules.
pub trait Predictor: Send + Sync {
    /// Number of most recent states the predictor reads.
    fn history_len(&self) -> usize;

    /// Predicted terminal L̄ (m) for each plan; each plan runs to the batch
    /// end. NaN marks a rollout that failed.
    fn terminal_sizes(&self, history: &[PlantState], plans: &[Vec<f64>]) -> Vec<f64>;
}

/// Surrogate input window for `states` (oldest first).
///
/// The jacket channel of each frame holds the temperature applied over the
/// interval starting at that frame; for the newest frame that is `next_move`.
pub fn surrogate_frames(states: &[PlantState], next_move: f64) -> Vec<[f64; 10]> {
    states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut row = features::plant_row(s);
            row[features::JACKET] = states.get(k + 1).map_or(next_move, |n| n.jacket_temp);
            row
        })
        .collect()
}

/// Rolls the trained surrogate forward by feeding predictions back in.
#[derive(Debug, Clone)]
pub struct SurrogatePredictor {
    network: Arc<LstmNetwork>,
}

impl SurrogatePredictor {
    pub fn new(network: Arc<LstmNetwork>) -> Result<Self> {
        if network.meta.mode != WindowMode::Surrogate {
            return Err(Error::schema("MPC needs a network trained on surrogate windows"));
        }
        network.check_compatible(network.meta.window, &features::names(&features::PLANT_FEATURES))?;
        if network.meta.output_features != features::names(&features::SURROGATE_TARGETS) {
            return Err(Error::schema("surrogate outputs do not match the plant-state layout"));
        }
        Ok(Self { network })
    }

    fn rollout(&self, window: &Array3<f64>, plans: &[Vec<f64>]) -> Result<Vec<f64>> {
        let net = &self.network;
        let steps = plans[0].len();
        let last = window.dim().1 - 1;
        let mut raw = window.clone();
        let mut terminal = vec![f64::NAN; plans.len()];
        for j in 0..steps {
            for (b, plan) in plans.iter().enumerate() {
                raw[[b, last, features::JACKET]] = plan[j];
            }
            let mut x = raw.clone();
            for mut row in x.rows_mut() {
                net.norm
                    .inputs
                    .normalize(row.as_slice_mut().expect("contiguous frames"));
            }
            let mut y = net.forward_batch(x.view())?;
            for mut row in y.rows_mut() {
                net.norm
                    .targets
                    .denormalize(row.as_slice_mut().expect("contiguous outputs"));
            }
            for b in 0..plans.len() {
                terminal[b] = y[[b, features::SURROGATE_MEAN_SIZE]] * 1e-6;
            }
            if j + 1 < steps {
                let shifted = raw.slice(s![.., 1.., ..]).to_owned();
                raw.slice_mut(s![.., ..last, ..]).assign(&shifted);
                for b in 0..plans.len() {
                    for (k, v) in y.row(b).iter().enumerate() {
                        raw[[b, last, k + 1]] = *v;
                    }
                }
            }
        }
        Ok(terminal)
    }
}

impl Predictor for SurrogatePredictor {
    fn history_len(&self) -> usize {
        self.network.meta.window + 1
    }

    fn terminal_sizes(&self, history: &[PlantState], plans: &[Vec<f64>]) -> Vec<f64> {
        if plans.is_empty() {
            return Vec::new();
        }
        let n = self.history_len();
        if history.len() < n || plans.iter().any(|p| p.len() != plans[0].len() || p.is_empty()) {
            return vec![f64::NAN; plans.len()];
        }
        let frames = surrogate_frames(&history[history.len() - n..], 0.0);
        let mut window = Array3::zeros((plans.len(), n, features::PLANT_FEATURES.len()));
        for mut w in window.axis_iter_mut(Axis(0)) {
            for (mut row, f) in w.rows_mut().into_iter().zip(&frames) {
                row.assign(&ndarray::ArrayView1::from(f));
            }
        }
        match self.rollout(&window, plans) {
            Ok(t) => t
                .into_iter()
                .map(|v| if v.is_finite() { v } else { f64::NAN })
                .collect(),
            Err(_) if plans.len() > 1 => (0..plans.len())
                .map(|b| {
                    let one = window.slice(s![b..b + 1, .., ..]).to_owned();
                    self.rollout(&one, &plans[b..b + 1]).map_or(f64::NAN, |t| t[0])
                })
                .map(|v| if v.is_finite() { v } else { f64::NAN })
                .collect(),
            Err(_) => vec![f64::NAN],
        }
    }
}

/// Perfect-information predictor that steps the true plant model.
#[derive(Debug, Clone)]
pub struct PlantPredictor {
    pub params: PlantParams,
    pub sampling_interval_s: f64,
}

impl Predictor for PlantPredictor {
    fn history_len(&self) -> usize {
        1
    }

    fn terminal_sizes(&self, history: &[PlantState], plans: &[Vec<f64>]) -> Vec<f64> {
        let Some(start) = history.last() else {
            return vec![f64::NAN; plans.len()];
        };
        plans
            .iter()
            .map(|plan| {
                let mut s = *start;
                for &u in plan {
                    match step(&s, u, self.sampling_interval_s, &self.params) {
                        Ok(r) => s = r.state,
                        Err(_) => return f64::NAN,
                    }
                }
                s.mean_size
            })
            .collect()
    }
}

/// Holds the last move of `moves` until `steps_remaining` moves exist.
pub fn extend_plan(moves: &[f64], steps_remaining: usize) -> Vec<f64> {
    let mut plan = moves.to_vec();
    let last = *moves.last().expect("plan has at least one move");
    plan.resize(steps_remaining.max(moves.len()), last);
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcPlan {
    /// min(H, steps remaining) moves, °C
    pub moves: Vec<f64>,
    /// m
    pub predicted_terminal_size: f64,
    /// m²
    pub cost: f64,
    pub evaluations: usize,
    /// Every candidate rollout failed; `moves` holds the previous jacket temperature.
    pub all_invalid: bool,
}

fn random_feasible(rng: &mut impl Rng, previous: f64, len: usize, limits: &ProfileLimits) -> Vec<f64> {
    let mut prev = previous;
    (0..len)
        .map(|_| {
            let (lo, hi) = limits.feasible_interval(prev);
            prev = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            prev
        })
        .collect()
}

/// Interval for move `i` that keeps both neighbouring steps feasible.
fn coordinate_interval(moves: &[f64], i: usize, previous: f64, limits: &ProfileLimits) -> (f64, f64) {
    let before = if i == 0 { previous } else { moves[i - 1] };
    let (mut lo, mut hi) = limits.feasible_interval(before);
    if let Some(&after) = moves.get(i + 1) {
        lo = lo.max(after - limits.max_step_c);
        hi = hi.min(after + limits.max_step_c);
    }
    (lo, hi.max(lo))
}

/// Plans jacket moves by random shooting followed by coordinate descent on
/// the squared terminal size error. Moves beyond the horizon hold the last
/// planned move until the batch ends.
#[allow(clippy::too_many_arguments)]
pub fn mpc_plan(
    predictor: &dyn Predictor,
    history: &[PlantState],
    set_point: f64,
    steps_remaining: usize,
    config: &MpcConfig,
    limits: &ProfileLimits,
    rng: &mut impl Rng,
    warm_start: Option<&[f64]>,
) -> Result<MpcPlan> {
    config.validate()?;
    let previous = history
        .last()
        .ok_or_else(|| Error::schema("MPC history is empty"))?
        .jacket_temp;
    let len = config.horizon.min(steps_remaining);
    if len == 0 {
        return Err(Error::config("MPC called with no steps remaining"));
    }
    let cost = |t: f64| {
        if t.is_finite() {
            (t - set_point).powi(2)
        } else {
            f64::INFINITY
        }
    };

    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(config.candidate_count);
    candidates.push(vec![limits.clamp(previous, previous); len]);
    if let Some(w) = warm_start {
        let mut shifted: Vec<f64> = w.iter().skip(1).copied().collect();
        if !shifted.is_empty() {
            shifted.truncate(len);
            let tail = *shifted.last().unwrap();
            shifted.resize(len, tail);
            let mut prev = previous;
            for v in shifted.iter_mut() {
                *v = limits.clamp(prev, *v);
                prev = *v;
            }
            candidates.push(shifted);
        }
    }
    while candidates.len() < config.candidate_count {
        candidates.push(random_feasible(rng, previous, len, limits));
    }
    let full: Vec<Vec<f64>> = candidates.iter().map(|c| extend_plan(c, steps_remaining)).collect();
    let terminal = predictor.terminal_sizes(history, &full);
    let mut evaluations = full.len();
    let best_idx = (0..terminal.len())
        .filter(|&i| terminal[i].is_finite())
        .min_by(|&a, &b| cost(terminal[a]).total_cmp(&cost(terminal[b])));
    let Some(best_idx) = best_idx else {
        return Ok(MpcPlan {
            moves: vec![limits.clamp(previous, previous); len],
            predicted_terminal_size: f64::NAN,
            cost: f64::NAN,
            evaluations,
            all_invalid: true,
        });
    };
    let mut best = candidates[best_idx].clone();
    let mut best_terminal = terminal[best_idx];
    let mut best_cost = cost(best_terminal);

    let mut delta = limits.max_step_c / 2.0;
    for _ in 0..config.refine_iterations {
        for i in 0..len {
            let (lo, hi) = coordinate_interval(&best, i, previous, limits);
            let trials: Vec<Vec<f64>> = [best[i] + delta, best[i] - delta]
                .iter()
                .map(|&v| {
                    let mut t = best.clone();
                    t[i] = v.clamp(lo, hi);
                    t
                })
                .filter(|t| t[i] != best[i])
                .collect();
            if trials.is_empty() {
                continue;
            }
            let full: Vec<Vec<f64>> = trials.iter().map(|t| extend_plan(t, steps_remaining)).collect();
            let out = predictor.terminal_sizes(history, &full);
            evaluations += full.len();
            for (t, v) in trials.into_iter().zip(out) {
                if cost(v) < best_cost {
                    best_cost = cost(v);
                    best_terminal = v;
                    best = t;
                }
            }
        }
        delta /= 2.0;
    }
    Ok(MpcPlan {
        moves: best,
        predicted_terminal_size: best_terminal,
        cost: best_cost,
        evaluations,
        all_invalid: false,
    })
}

/// Receding-horizon controller around any [`Predictor`].
pub struct MpcController {
    predictor: Arc<dyn Predictor>,
    pub config: MpcConfig,
    rng: ChaCha8Rng,
    warm: Option<Vec<f64>>,
    /// Calls where every rollout failed and the previous move was held.
    pub fallback_count: usize,
    pub last_plan: Option<MpcPlan>,
}

impl MpcController {
    pub fn new(predictor: Arc<dyn Predictor>, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            predictor,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            warm: None,
            fallback_count: 0,
            last_plan: None,
        })
    }
}

impl Controller for MpcController {
    fn name(&self) -> &str {
        "MPC"
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        self.warm = None;
        self.fallback_count = 0;
        self.last_plan = None;
    }

    fn propose(&mut self, ctx: &ControlContext<'_>) -> Result<f64> {
        let need = self.predictor.history_len();
        if ctx.history.len() < need {
            return Err(Error::Controller {
                controller: "MPC".into(),
                detail: format!("history has {} frames, needs {need}", ctx.history.len()),
            });
        }
        let states: Vec<PlantState> = ctx.history[ctx.history.len() - need..]
            .iter()
            .map(|f| f.state)
            .collect();
        let plan = mpc_plan(
            self.predictor.as_ref(),
            &states,
            ctx.set_point,
            ctx.steps_remaining,
            &self.config,
            &ctx.limits,
            &mut self.rng,
            self.warm.as_deref(),
        )?;
        if plan.all_invalid {
            log::warn!("MPC: every candidate rollout failed, holding the previous jacket temperature");
            self.fallback_count += 1;
        }
        let first = plan.moves[0];
        self.warm = Some(plan.moves.clone());
        self.last_plan = Some(plan);
        Ok(first)
    }
}

/// Exhaustive reference for a one-move horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub best_move: f64,
    /// m²
    pub best_cost: f64,
    /// Spacing between neighbouring grid points, °C.
    pub cell_width: f64,
}

/// Evaluates `points` evenly spaced first moves across the feasible interval,
/// each held to batch end, and returns the best.
pub fn grid_first_move(
    predictor: &dyn Predictor,
    history: &[PlantState],
    set_point: f64,
    steps_remaining: usize,
    limits: &ProfileLimits,
    points: usize,
) -> Result<GridOptimum> {
    if points < 2 || steps_remaining == 0 {
        return Err(Error::config("grid search needs two points and one remaining step"));
    }
    let previous = history
        .last()
        .ok_or_else(|| Error::schema("MPC history is empty"))?
        .jacket_temp;
    let (lo, hi) = limits.feasible_interval(previous);
    let cell_width = (hi - lo) / (points - 1) as f64;
    let moves: Vec<f64> = (0..points).map(|i| lo + cell_width * i as f64).collect();
    let plans: Vec<Vec<f64>> = moves.iter().map(|&u| extend_plan(&[u], steps_remaining)).collect();
    let sizes = predictor.terminal_sizes(history, &plans);
    let (best_move, best_cost) = moves
        .iter()
        .zip(sizes)
        .map(|(&u, t)| {
            (
                u,
                if t.is_finite() {
                    (t - set_point).powi(2)
                } else {
                    f64::INFINITY
                },
            )
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two grid points");
    Ok(GridOptimum {
        best_move,
        best_cost,
        cell_width,
    })
}
