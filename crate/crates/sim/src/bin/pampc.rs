use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use pampc_core::mpc::Variant;
use pampc_sim::experiments::{
    alpha_event, avoidance_monte_carlo, detect_bench, timing_experiment, visibility_experiment, MonteCarloConfig,
};
use pampc_sim::output::{write_json, write_rollout, write_svg, write_table};
use pampc_sim::{mast_row, run_closed_loop, timing_scenario, visibility_suite, RolloutLog, Scenario};
use pampc_vision::bench::{BenchConfig, Detector};
use serde_json::json;

#[derive(Parser)]
#[command(name = "pampc", version, about = "Perception-aware MPC for power-line inspection: simulations and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one scenario file.
    Simulate {
        scenario: PathBuf,
        /// Override the scenario's controller.
        #[arg(long)]
        controller: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit with an error if the quadrotor touches a mast.
        #[arg(long)]
        strict: bool,
    },
    /// Random starts along the mast row, every controller on the same starts.
    AvoidanceMc {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "pampc,classical")]
        controllers: Vec<Variant>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit with an error if any rollout of any controller collides.
        #[arg(long)]
        strict: bool,
    },
    /// Line visibility of pampc against classical MPC.
    Visibility {
        /// Scenario files; the built-in suite when none are given.
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Per-step computation time of every controller.
    Timing {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        rollouts: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Line detectors on random synthetic scenes.
    DetectBench {
        #[arg(long, default_value = "hough")]
        detector: Detector,
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pixel noise in intensity units.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn prepare(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_logs(out: &Path, logs: &[RolloutLog]) -> anyhow::Result<()> {
    for l in logs {
        write_rollout(out, l)?;
    }
    Ok(())
}

fn check_strict(strict: bool, logs: &[RolloutLog]) -> anyhow::Result<()> {
    let collided: Vec<String> = logs.iter().filter(|l| l.collided()).map(|l| format!("{} ({})", l.scenario, l.controller)).collect();
    if strict && !collided.is_empty() {
        bail!("{} rollout(s) collided: {}", collided.len(), collided.join(", "));
    }
    Ok(())
}

fn simulate(path: &Path, controller: Option<Variant>, seed: Option<u64>, out: &Path, strict: bool) -> anyhow::Result<()> {
    let mut s = Scenario::load(path)?;
    if let Some(v) = controller {
        s.controller.variant = v;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    prepare(out)?;
    let log = run_closed_loop(&s)?;
    let csv = write_rollout(out, &log)?;
    write_svg(&out.join(format!("{}-{}.svg", s.name, log.controller)), &s, std::slice::from_ref(&log))?;
    let summary = json!({
        "scenario": s.name,
        "controller": log.controller,
        "steps": log.records.len(),
        "collided": log.collided(),
        "min_clearance": log.min_clearance(),
        "mean_similarity": log.mean_similarity(),
        "softened_steps": log.softened_steps(),
        "lost_steps": log.lost_steps(),
        "summary": pampc_sim::experiments::ControllerSummary::from_logs(log.controller, std::slice::from_ref(&log)),
    });
    write_json(&out.join(format!("{}-{}.json", s.name, log.controller)), &summary)?;
    println!(
        "{} {}: {} steps, collided {}, min clearance {:.3} m, mean similarity {:.3} -> {}",
        s.name,
        log.controller,
        log.records.len(),
        log.collided(),
        log.min_clearance(),
        log.mean_similarity(),
        csv.display()
    );
    check_strict(strict, std::slice::from_ref(&log))
}

fn avoidance(runs: usize, seed: u64, controllers: Vec<Variant>, out: &Path, strict: bool) -> anyhow::Result<()> {
    if controllers.is_empty() {
        bail!("no controllers given");
    }
    prepare(out)?;
    let config = MonteCarloConfig { runs, seed, controllers, ..MonteCarloConfig::default() };
    let result = avoidance_monte_carlo(&config)?;
    let starts: Vec<Vec<String>> =
        result.starts.iter().enumerate().map(|(i, p)| vec![i.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()]).collect();
    write_table(&out.join("mc-starts.csv"), &["run", "x", "y", "z"], &starts)?;

    let mut per_run = Vec::new();
    let mut all = Vec::new();
    for (v, logs) in &result.logs {
        for (i, l) in logs.iter().enumerate() {
            let ev = alpha_event(l, &mast_row(result.starts[i]), 0.5, 0.1 * mast_row(result.starts[i]).mpc.weights.alpha_max);
            per_run.push(vec![
                i.to_string(),
                v.to_string(),
                (!l.collided()).to_string(),
                l.min_clearance().to_string(),
                l.mean_similarity().to_string(),
                l.records.len().to_string(),
                ev.as_ref().map_or(String::new(), |e| e.peak.to_string()),
                ev.as_ref().map_or(String::new(), |e| e.median.to_string()),
                ev.as_ref().and_then(|e| e.decay_time).map_or(String::new(), |d| d.to_string()),
            ]);
            write_rollout(out, l)?;
        }
        all.extend(logs.iter().cloned());
    }
    write_table(
        &out.join("mc-runs.csv"),
        &["run", "controller", "success", "min_clearance", "mean_similarity", "steps", "alpha_peak", "alpha_median", "alpha_decay_s"],
        &per_run,
    )?;
    let summary_rows: Vec<Vec<String>> = result
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.controller.to_string(),
                s.rollouts.to_string(),
                s.successes.to_string(),
                s.success_rate.to_string(),
                s.min_clearance.to_string(),
                s.mean_similarity.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("mc-summary.csv"),
        &["controller", "rollouts", "successes", "success_rate", "min_clearance", "mean_similarity"],
        &summary_rows,
    )?;
    write_json(&out.join("mc-summary.json"), &json!({ "runs": runs, "seed": seed, "controllers": result.summaries }))?;
    write_svg(&out.join("mc-trajectories.svg"), &mast_row(result.starts[0]), &all)?;
    for s in &result.summaries {
        println!(
            "{:>10}: success {}/{} ({:.2}), min clearance {:.3} m, mean similarity {:.3}, update {:.0} ± {:.0} us",
            s.controller.to_string(),
            s.successes,
            s.rollouts,
            s.success_rate,
            s.min_clearance,
            s.mean_similarity,
            s.update_us_mean,
            s.update_us_std
        );
    }
    check_strict(strict, &all)
}

fn visibility(files: &[PathBuf], out: &Path, strict: bool) -> anyhow::Result<()> {
    let scenarios = if files.is_empty() {
        visibility_suite()
    } else {
        files.iter().map(Scenario::load).collect::<Result<Vec<_>, _>>()?
    };
    prepare(out)?;
    let result = visibility_experiment(&scenarios)?;
    write_logs(out, &result.logs)?;
    for s in &scenarios {
        let logs: Vec<RolloutLog> = result.logs.iter().filter(|l| l.scenario == s.name).cloned().collect();
        write_svg(&out.join(format!("visibility-{}.svg", s.name)), s, &logs)?;
    }
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.pampc.to_string(),
                r.classical.to_string(),
                r.pampc_collided.to_string(),
                r.classical_collided.to_string(),
            ]
        })
        .collect();
    write_table(&out.join("visibility.csv"), &["scenario", "pampc", "classical", "pampc_collided", "classical_collided"], &rows)?;
    write_json(
        &out.join("visibility.json"),
        &json!({ "rows": result.rows, "aggregate_improvement": result.aggregate_improvement }),
    )?;
    for r in &result.rows {
        println!("{:>14}: pampc {:.3}  classical {:.3}", r.scenario, r.pampc, r.classical);
    }
    println!("aggregate improvement {:.1}%", 100.0 * result.aggregate_improvement);
    check_strict(strict, &result.logs)
}

fn timing(file: Option<&Path>, rollouts: usize, out: &Path) -> anyhow::Result<()> {
    if rollouts == 0 {
        bail!("need at least one rollout");
    }
    let scenario = match file {
        Some(p) => Scenario::load(p)?,
        None => timing_scenario(),
    };
    prepare(out)?;
    let result = timing_experiment(&scenario, rollouts)?;
    write_logs(out, &result.logs)?;
    write_json(&out.join("timing.json"), &json!({ "scenario": scenario.name, "rollouts": rollouts, "samples": result.samples, "controllers": result.summaries }))?;
    for s in &result.summaries {
        println!(
            "{:>10}: update {:.0} ± {:.0} us, solver {:.0} ± {:.0} us",
            s.controller.to_string(),
            s.update_us_mean,
            s.update_us_std,
            s.solver_us_mean,
            s.solver_us_std
        );
    }
    Ok(())
}

fn bench(detector: Detector, scenes: usize, seed: u64, noise: f64, out: &Path) -> anyhow::Result<()> {
    prepare(out)?;
    let config = BenchConfig::default();
    let results = pampc_vision::bench::run_bench(detector, scenes, seed, noise, &config);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.scene.to_string(),
                r.lines.to_string(),
                r.detections.to_string(),
                r.recovered.to_string(),
                r.prf.precision.to_string(),
                r.prf.recall.to_string(),
                r.prf.f1.to_string(),
            ]
        })
        .collect();
    write_table(&out.join("bench.csv"), &["scene", "lines", "detections", "recovered", "precision", "recall", "f1"], &rows)?;
    let summary = detect_bench(detector, scenes, seed, noise, &config);
    write_json(&out.join("bench.json"), &summary)?;
    println!(
        "{:?}: {} scenes, {} with a missed line, P {:.3} R {:.3} F1 {:.3}, {:.0} us per image",
        detector, scenes, summary.failures, summary.prf.precision, summary.prf.recall, summary.prf.f1, summary.detect_us_mean
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, controller, seed, out, strict } => simulate(&scenario, controller, seed, &out, strict),
        Command::AvoidanceMc { runs, seed, controllers, out, strict } => avoidance(runs, seed, controllers, &out, strict),
        Command::Visibility { scenarios, out, strict } => visibility(&scenarios, &out, strict),
        Command::Timing { scenario, rollouts, out } => timing(scenario.as_deref(), rollouts, &out),
        Command::DetectBench { detector, scenes, seed, noise, out } => bench(detector, scenes, seed, noise, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
