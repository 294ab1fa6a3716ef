use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_closed_loop, ClosedLoopResult, Scenario};
use crate::container::sha256_hex;
use crate::controllers::{
    Controller, ControllerKind, LstmController, MpcConfig, MpcController, PiController, PiTuning, SurrogatePredictor,
};
use crate::error::{Error, Result};
use crate::lstm::LstmNetwork;
use crate::plant::PlantParams;

/// Builds fresh controller instances for each run.
#[derive(Debug, Clone)]
pub struct ControllerFactory {
    pub lstmc: Option<Arc<LstmNetwork>>,
    pub surrogate: Option<Arc<LstmNetwork>>,
    pub pi_tuning: PiTuning,
    pub mpc: MpcConfig,
}

impl ControllerFactory {
    pub fn build(&self, kind: ControllerKind, set_point_um: f64) -> Result<Box<dyn Controller>> {
        let missing = |what: &str, producer: &str| Error::MissingArtifact {
            path: what.to_string(),
            producer: producer.to_string(),
        };
        Ok(match kind {
            ControllerKind::Lstmc => {
                let net = self
                    .lstmc
                    .clone()
                    .ok_or_else(|| missing("LSTMc model", "train --mode controller"))?;
                Box::new(LstmController::new(net)?)
            }
            ControllerKind::Mpc => {
                let net = self
                    .surrogate
                    .clone()
                    .ok_or_else(|| missing("surrogate model", "train --mode surrogate"))?;
                Box::new(MpcController::new(
                    Arc::new(SurrogatePredictor::new(net)?),
                    self.mpc.clone(),
                )?)
            }
            ControllerKind::Pi => Box::new(PiController::new(self.pi_tuning.lookup(set_point_um)?)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub set_points_um: Vec<f64>,
    pub noise_levels: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    /// Run PI tuned for `g2g_tuned_for_um` at `g2g_set_point_um` next to LSTMc.
    pub g2g: bool,
    pub g2g_tuned_for_um: f64,
    pub g2g_set_point_um: f64,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.set_points_um.is_empty() || self.noise_levels.is_empty() || self.controllers.is_empty() {
            return Err(Error::config(
                "benchmark grid needs at least one set-point, noise level and controller",
            ));
        }
        if self.set_points_um.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("set_points_um must be positive"));
        }
        if self.noise_levels.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(Error::config("noise_levels must be non-negative"));
        }
        Ok(())
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            set_points_um: vec![180.0, 200.0, 220.0],
            noise_levels: vec![0.0, 0.10, 0.15],
            controllers: ControllerKind::ALL.to_vec(),
            g2g: true,
            g2g_tuned_for_um: 180.0,
            g2g_set_point_um: 220.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub set_point_um: f64,
    pub noise_level: f64,
    pub controller: ControllerKind,
    pub deviation_pct: Option<f64>,
    pub final_size_um: Option<f64>,
    pub mean_step_time_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2gResult {
    pub set_point_um: f64,
    pub pi_tuned_for_um: f64,
    pub pi_deviation_pct: Option<f64>,
    pub pi_final_size_um: Option<f64>,
    pub lstmc_deviation_pct: Option<f64>,
    pub lstmc_final_size_um: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub controller: ControllerKind,
    pub mean_deviation_pct: Option<f64>,
    pub mean_step_time_s: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub cases: Vec<CaseResult>,
    pub controllers: Vec<ControllerStats>,
    pub g2g: Option<G2gResult>,
    /// SHA-256 over the summary with every timing field zeroed.
    pub digest: String,
}

impl BenchmarkSummary {
    pub fn case(&self, set_point_um: f64, noise_level: f64, controller: ControllerKind) -> Option<&CaseResult> {
        self.cases
            .iter()
            .find(|c| c.set_point_um == set_point_um && c.noise_level == noise_level && c.controller == controller)
    }

    pub fn stats(&self, controller: ControllerKind) -> Option<&ControllerStats> {
        self.controllers.iter().find(|s| s.controller == controller)
    }

    fn timing_free_digest(&self) -> String {
        let mut copy = self.clone();
        copy.digest.clear();
        for c in &mut copy.cases {
            c.mean_step_time_s = 0.0;
        }
        for s in &mut copy.controllers {
            s.mean_step_time_s = None;
        }
        sha256_hex(&serde_json::to_vec(&copy).expect("summary serializes"))
    }
}

struct Job {
    set_point_um: f64,
    noise_level: f64,
    controller: ControllerKind,
    pi_tuned_for_um: f64,
    rng_seed: u64,
}

fn run_job(
    job: &Job,
    base: &Scenario,
    factory: &ControllerFactory,
    params: &PlantParams,
) -> (CaseResult, Option<ClosedLoopResult>) {
    let scenario = Scenario {
        set_point_m: job.set_point_um * 1e-6,
        noise_level: job.noise_level,
        rng_seed: job.rng_seed,
        ..base.clone()
    };
    let tuned_for = if job.controller == ControllerKind::Pi {
        job.pi_tuned_for_um
    } else {
        job.set_point_um
    };
    let outcome = factory
        .build(job.controller, tuned_for)
        .and_then(|mut c| run_closed_loop(&scenario, c.as_mut(), params));
    let mut case = CaseResult {
        set_point_um: job.set_point_um,
        noise_level: job.noise_level,
        controller: job.controller,
        deviation_pct: None,
        final_size_um: None,
        mean_step_time_s: 0.0,
        failure: None,
    };
    match outcome {
        Ok(r) => {
            case.mean_step_time_s = r.mean_step_time_s;
            case.failure = r.failure.clone();
            if r.failure.is_none() {
                case.deviation_pct = Some(r.deviation_pct);
                case.final_size_um = Some(r.final_mean_size() * 1e6);
            }
            (case, Some(r))
        }
        Err(e) => {
            case.failure = Some(e.to_string());
            (case, None)
        }
    }
}

/// File-name friendly run label, e.g. `lstmc_sp220_n10` or `pi180_sp220_n0`.
fn run_label(job: &Job) -> String {
    let ctl = match job.controller {
        ControllerKind::Pi if job.pi_tuned_for_um != job.set_point_um => format!("pi{:.0}", job.pi_tuned_for_um),
        k => format!("{k:?}").to_lowercase(),
    };
    format!("{ctl}_sp{:.0}_n{:.0}", job.set_point_um, job.noise_level * 100.0)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs the set-point × noise × controller grid, plus the mis-tuned PI case.
///
/// `scenario` supplies everything except set-point, noise level and rng seed.
/// Grid cell (i, j) uses rng seed `scenario.rng_seed + i·n_noise + j`.
/// Failed runs become table entries. Results come back in grid order
/// whatever the number of worker threads.
pub fn benchmark_suite(
    config: &BenchmarkConfig,
    scenario: &Scenario,
    factory: &ControllerFactory,
    params: &PlantParams,
) -> Result<(BenchmarkSummary, Vec<(String, ClosedLoopResult)>)> {
    scenario.validate()?;
    let mut jobs = Vec::new();
    for (i, &sp) in config.set_points_um.iter().enumerate() {
        for (j, &noise) in config.noise_levels.iter().enumerate() {
            for &controller in &config.controllers {
                jobs.push(Job {
                    set_point_um: sp,
                    noise_level: noise,
                    controller,
                    pi_tuned_for_um: sp,
                    rng_seed: scenario.rng_seed + (i * config.noise_levels.len() + j) as u64,
                });
            }
        }
    }
    let grid = jobs.len();
    if config.g2g {
        jobs.push(Job {
            set_point_um: config.g2g_set_point_um,
            noise_level: 0.0,
            controller: ControllerKind::Pi,
            pi_tuned_for_um: config.g2g_tuned_for_um,
            rng_seed: scenario.rng_seed,
        });
    }
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|job| run_job(job, scenario, factory, params))
        .collect();

    let mut cases = Vec::with_capacity(grid);
    let mut runs = Vec::new();
    let mut g2g_pi = None;
    for (k, ((case, run), job)) in outcomes.into_iter().zip(&jobs).enumerate() {
        if let Some(r) = run {
            runs.push((run_label(job), r));
        }
        if k < grid {
            cases.push(case);
        } else {
            g2g_pi = Some(case);
        }
    }
    let controllers = config
        .controllers
        .iter()
        .map(|&kind| {
            let mine: Vec<&CaseResult> = cases.iter().filter(|c| c.controller == kind).collect();
            ControllerStats {
                controller: kind,
                mean_deviation_pct: mean(mine.iter().filter_map(|c| c.deviation_pct)),
                mean_step_time_s: mean(mine.iter().filter(|c| c.failure.is_none()).map(|c| c.mean_step_time_s)),
                failures: mine.iter().filter(|c| c.failure.is_some()).count(),
            }
        })
        .collect();
    let g2g = g2g_pi.map(|pi| {
        let lstmc = cases.iter().find(|c| {
            c.controller == ControllerKind::Lstmc && c.set_point_um == config.g2g_set_point_um && c.noise_level == 0.0
        });
        G2gResult {
            set_point_um: config.g2g_set_point_um,
            pi_tuned_for_um: config.g2g_tuned_for_um,
            pi_deviation_pct: pi.deviation_pct,
            pi_final_size_um: pi.final_size_um,
            lstmc_deviation_pct: lstmc.and_then(|c| c.deviation_pct),
            lstmc_final_size_um: lstmc.and_then(|c| c.final_size_um),
        }
    });
    let mut summary = BenchmarkSummary {
        cases,
        controllers,
        g2g,
        digest: String::new(),
    };
    summary.digest = summary.timing_free_digest();
    Ok((summary, runs))
}
