//! The comparisons run by the command line and the acceptance suite.

use nalgebra::Vector3;
use pampc_core::mpc::Variant;
use pampc_core::obstacles::chance_constraint;
use pampc_vision::bench::{pooled_prf, run_bench, BenchConfig, Detector};
use pampc_vision::Prf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_loop::{run_closed_loop, ClosedLoop};
use crate::error::{Result, SimError};
use crate::log::{mean, mean_std, RolloutLog};
use crate::scenario::{mast_row, timing_scenario, visibility_suite, Scenario, CRUISE_ALTITUDE};

/// Aggregate of one controller over a set of rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: Variant,
    pub rollouts: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub min_clearance: f64,
    pub mean_similarity: f64,
    pub softened_steps: usize,
    pub update_us_mean: f64,
    pub update_us_std: f64,
    pub solver_us_mean: f64,
    pub solver_us_std: f64,
}

impl ControllerSummary {
    pub fn from_logs(controller: Variant, logs: &[RolloutLog]) -> Self {
        let successes = logs.iter().filter(|l| !l.collided()).count();
        let update: Vec<f64> = logs.iter().flat_map(|l| l.records.iter().map(|r| r.update_us as f64)).collect();
        let solver: Vec<f64> = logs.iter().flat_map(|l| l.records.iter().map(|r| r.solver_us as f64)).collect();
        let (update_us_mean, update_us_std) = mean_std(&update);
        let (solver_us_mean, solver_us_std) = mean_std(&solver);
        Self {
            controller,
            rollouts: logs.len(),
            successes,
            success_rate: if logs.is_empty() { 0.0 } else { successes as f64 / logs.len() as f64 },
            min_clearance: logs.iter().map(RolloutLog::min_clearance).fold(f64::INFINITY, f64::min),
            mean_similarity: mean(logs.iter().map(RolloutLog::mean_similarity)),
            softened_steps: logs.iter().map(RolloutLog::softened_steps).sum(),
            update_us_mean,
            update_us_std,
            solver_us_mean,
            solver_us_std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub seed: u64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub controllers: Vec<Variant>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            seed: 1,
            x_range: [-4.0, 4.0],
            y_range: [0.0, 3.0],
            controllers: vec![Variant::PerceptionAware, Variant::Classical],
        }
    }
}

/// Uniform starts at cruise altitude. A start already in collision, or
/// violating the chance constraint of any mast, is redrawn.
pub fn sample_starts(config: &MonteCarloConfig) -> Result<Vec<[f64; 3]>> {
    let template = mast_row([0.0, 0.0, CRUISE_ALTITUDE]);
    let obstacles = template.obstacles();
    let chance = &template.mpc.chance;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = Vec::with_capacity(config.runs);
    let mut draws = 0usize;
    while starts.len() < config.runs {
        draws += 1;
        if draws > 1000 * config.runs.max(1) {
            return Err(SimError::Scenario("start region is almost entirely infeasible".into()));
        }
        let p = Vector3::new(
            rng.random_range(config.x_range[0]..=config.x_range[1]),
            rng.random_range(config.y_range[0]..=config.y_range[1]),
            CRUISE_ALTITUDE,
        );
        let feasible = obstacles.iter().all(|o| {
            !o.in_collision(&p, chance.radius)
                && chance_constraint(&p, &chance.body_covariance, o, chance).is_ok_and(|c| c.residual <= 0.0)
        });
        if feasible {
            starts.push(p.into());
        }
    }
    Ok(starts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub starts: Vec<[f64; 3]>,
    /// Per controller, one log per start in the order of `starts`.
    pub logs: Vec<(Variant, Vec<RolloutLog>)>,
    pub summaries: Vec<ControllerSummary>,
}

impl MonteCarloResult {
    pub fn summary(&self, v: Variant) -> Option<&ControllerSummary> {
        self.summaries.iter().find(|s| s.controller == v)
    }

    pub fn logs_of(&self, v: Variant) -> Option<&[RolloutLog]> {
        self.logs.iter().find(|(c, _)| *c == v).map(|(_, l)| l.as_slice())
    }
}

/// Flies every controller from the same random starts along the mast row.
/// Rollouts run in parallel; each is deterministic on its own.
pub fn avoidance_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloResult> {
    let starts = sample_starts(config)?;
    let mut logs = Vec::new();
    for &v in &config.controllers {
        let runs: Result<Vec<RolloutLog>> = starts
            .par_iter()
            .enumerate()
            .map(|(i, &start)| {
                let mut s = mast_row(start).with_variant(v);
                s.name = format!("mc-{i:03}");
                s.seed = config.seed.wrapping_add(i as u64);
                run_closed_loop(&s)
            })
            .collect();
        logs.push((v, runs?));
    }
    let summaries = logs.iter().map(|(v, l)| ControllerSummary::from_logs(*v, l)).collect();
    Ok(MonteCarloResult { starts, logs, summaries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRow {
    pub scenario: String,
    pub pampc: f64,
    pub classical: f64,
    pub pampc_collided: bool,
    pub classical_collided: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VisibilityResult {
    pub rows: Vec<VisibilityRow>,
    /// Relative gain of the summed mean similarity of pampc over classical.
    pub aggregate_improvement: f64,
    pub logs: Vec<RolloutLog>,
}

pub fn visibility_experiment(scenarios: &[Scenario]) -> Result<VisibilityResult> {
    let pairs: Result<Vec<(RolloutLog, RolloutLog)>> = scenarios
        .par_iter()
        .map(|s| {
            let p = run_closed_loop(&s.with_variant(Variant::PerceptionAware))?;
            let c = run_closed_loop(&s.with_variant(Variant::Classical))?;
            Ok((p, c))
        })
        .collect();
    let pairs = pairs?;
    let rows: Vec<VisibilityRow> = pairs
        .iter()
        .map(|(p, c)| VisibilityRow {
            scenario: p.scenario.clone(),
            pampc: p.mean_similarity(),
            classical: c.mean_similarity(),
            pampc_collided: p.collided(),
            classical_collided: c.collided(),
        })
        .collect();
    let sp: f64 = rows.iter().map(|r| r.pampc).sum();
    let sc: f64 = rows.iter().map(|r| r.classical).sum();
    let aggregate_improvement = if sc > 0.0 { (sp - sc) / sc } else { f64::INFINITY };
    let logs = pairs.into_iter().flat_map(|(p, c)| [p, c]).collect();
    Ok(VisibilityResult { rows, aggregate_improvement, logs })
}

pub fn default_visibility() -> Result<VisibilityResult> {
    visibility_experiment(&visibility_suite())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingResult {
    pub summaries: Vec<ControllerSummary>,
    pub samples: usize,
    /// The last rollout of every controller.
    pub logs: Vec<RolloutLog>,
}

impl TimingResult {
    pub fn summary(&self, v: Variant) -> Option<&ControllerSummary> {
        self.summaries.iter().find(|s| s.controller == v)
    }
}

/// Times every controller on the same scene. The controllers are stepped
/// in lockstep on one thread, so that slow drifts of the machine's speed
/// affect all of them alike; one untimed pass comes first.
pub fn timing_experiment(scenario: &Scenario, rollouts: usize) -> Result<TimingResult> {
    let lockstep = || -> Result<Vec<RolloutLog>> {
        let mut sims =
            Variant::ALL.into_iter().map(|v| ClosedLoop::new(&scenario.with_variant(v))).collect::<Result<Vec<_>>>()?;
        while sims.iter().any(|s| !s.is_done()) {
            for sim in &mut sims {
                sim.step()?;
            }
        }
        Ok(sims.into_iter().map(ClosedLoop::finish).collect())
    };
    lockstep()?;
    let mut logs: Vec<Vec<RolloutLog>> = vec![Vec::new(); Variant::ALL.len()];
    for _ in 0..rollouts {
        for (i, log) in lockstep()?.into_iter().enumerate() {
            logs[i].push(log);
        }
    }
    let summaries: Vec<ControllerSummary> =
        Variant::ALL.into_iter().zip(&logs).map(|(v, l)| ControllerSummary::from_logs(v, l)).collect();
    let samples = logs.iter().map(|l| l.iter().map(|r| r.records.len()).sum::<usize>()).min().unwrap_or(0);
    let logs = logs.into_iter().filter_map(|mut l| l.pop()).collect();
    Ok(TimingResult { summaries, samples, logs })
}

pub fn default_timing(rollouts: usize) -> Result<TimingResult> {
    timing_experiment(&timing_scenario(), rollouts)
}

/// How `α` behaves around the closest approach of one rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEvent {
    pub closest_step: usize,
    pub closest_clearance: f64,
    /// Largest `α` within `window` of the closest approach.
    pub peak: f64,
    pub median: f64,
    /// Seconds from passing the mast until `α` first drops below the
    /// threshold; `None` if the mast is never passed or `α` stays high.
    pub decay_time: Option<f64>,
    /// Whether the quadrotor flew past the closest mast.
    pub passed: bool,
}

/// Finds the closest approach to a mast the reference passes (any mast if
/// it passes none), the `α` peak within `window` seconds of it, and the
/// time from leaving that mast behind (along the reference direction, by
/// its largest semi-axis plus the safety radius) until `α < threshold`.
pub fn alpha_event(log: &RolloutLog, scenario: &Scenario, window: f64, threshold: f64) -> Option<AlphaEvent> {
    let recs = &log.records;
    if recs.is_empty() || scenario.masts.is_empty() {
        return None;
    }
    let radius = scenario.mpc.chance.radius;
    let path = scenario.reference.path();
    let dir = (path.end - path.start).normalize();
    let length = (path.end - path.start).norm();
    let all = scenario.obstacles();
    let passed: Vec<_> = all
        .iter()
        .filter(|o| (0.0..length).contains(&(o.center - path.start).dot(&dir)))
        .cloned()
        .collect();
    let obstacles = if passed.is_empty() { all } else { passed };
    let (closest_step, closest_clearance, mast) = recs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            let p = Vector3::from(r.position);
            obstacles.iter().enumerate().map(move |(m, o)| (i, crate::closed_loop::clearance(&p, o, radius), m))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let t0 = recs[closest_step].t;
    let peak = recs.iter().filter(|r| (r.t - t0).abs() <= window).map(|r| r.alpha).fold(f64::NEG_INFINITY, f64::max);
    let mut alphas: Vec<f64> = recs.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    let median = alphas[alphas.len() / 2];

    let o = &obstacles[mast];
    let behind = o.semi_axes.max() + radius;
    let passed_at = recs[closest_step..]
        .iter()
        .find(|r| (Vector3::from(r.position) - o.center).dot(&dir) > behind)
        .map(|r| r.t);
    let decay_time = passed_at.and_then(|tp| recs.iter().find(|r| r.t >= tp && r.alpha < threshold).map(|r| r.t - tp));
    Some(AlphaEvent { closest_step, closest_clearance, peak, median, decay_time, passed: passed_at.is_some() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub detector: Detector,
    pub noise_sigma: f64,
    pub scenes: usize,
    /// Scenes where some ground-truth line had no detection within one
    /// accumulator bin.
    pub failures: usize,
    pub prf: Prf,
    pub detect_us_mean: f64,
}

pub fn detect_bench(detector: Detector, scenes: usize, seed: u64, noise_sigma: f64, config: &BenchConfig) -> BenchSummary {
    let results = run_bench(detector, scenes, seed, noise_sigma, config);
    BenchSummary {
        detector,
        noise_sigma,
        scenes,
        failures: results.iter().filter(|r| r.recovered < r.lines).count(),
        prf: pooled_prf(&results),
        detect_us_mean: mean(results.iter().map(|r| r.detect_us as f64)),
    }
}
