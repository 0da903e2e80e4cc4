//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion failed.

use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};
use pampc_core::dynamics::{rk4, FullModel, QuadParams, QuadState};
use pampc_core::mpc::{NlpProblem, SqpSolution, Variant};
use pampc_core::obstacles::{chance_boundary_along, chance_constraint, ChanceConstraintParams, EllipsoidObstacle};
use pampc_sim::experiments::{
    alpha_event, avoidance_monte_carlo, default_timing, default_visibility, detect_bench, MonteCarloConfig,
};
use pampc_sim::mast_row;
use pampc_vision::bench::{BenchConfig, Detector};
use pampc_vision::{assignment_cost, hungarian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn avoidance_and_alpha() -> Vec<Outcome> {
    let config = MonteCarloConfig::default();
    let mc = avoidance_monte_carlo(&config).expect("monte carlo runs");
    let p = mc.summary(Variant::PerceptionAware).unwrap();
    let c = mc.summary(Variant::Classical).unwrap();
    let avoid = outcome(
        "1 avoidance monte carlo",
        p.success_rate == 1.0 && c.success_rate < 1.0,
        format!(
            "{} starts: pampc {:.2} (min clearance {:.3} m), classical {:.2}",
            mc.starts.len(),
            p.success_rate,
            p.min_clearance,
            c.success_rate
        ),
    );

    let mut peak_failures = Vec::new();
    let mut decay_failures = Vec::new();
    let mut worst_decay: f64 = 0.0;
    let mut ratios = Vec::new();
    for (i, log) in mc.logs_of(Variant::PerceptionAware).unwrap().iter().enumerate() {
        let scene = mast_row(mc.starts[i]);
        let alpha_max = scene.mpc.weights.alpha_max;
        let Some(ev) = alpha_event(log, &scene, 0.5, 0.1 * alpha_max) else {
            peak_failures.push(i);
            continue;
        };
        if !(ev.peak > 0.0 && ev.peak >= 2.0 * ev.median) {
            peak_failures.push(i);
        }
        if ev.median > 0.0 {
            ratios.push(ev.peak / ev.median);
        }
        if ev.passed {
            match ev.decay_time {
                Some(d) if d <= 3.0 => worst_decay = worst_decay.max(d),
                _ => decay_failures.push(i),
            }
        }
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha = outcome(
        "8 alpha around the closest approach",
        peak_failures.is_empty() && decay_failures.is_empty(),
        format!(
            "peak < 2x median in {:?}, no decay within 3 s in {:?}; smallest peak/median {min_ratio:.2}, slowest decay {worst_decay:.2} s",
            peak_failures, decay_failures
        ),
    );
    vec![avoid, alpha]
}

fn visibility() -> Outcome {
    let v = default_visibility().expect("visibility runs");
    let each = v.rows.iter().all(|r| r.pampc > r.classical);
    let rows: Vec<String> = v.rows.iter().map(|r| format!("{} {:.3}/{:.3}", r.scenario, r.pampc, r.classical)).collect();
    outcome(
        "2 visibility",
        each && v.aggregate_improvement >= 0.2,
        format!("pampc/classical {}; aggregate +{:.1}%", rows.join(", "), 100.0 * v.aggregate_improvement),
    )
}

fn timing() -> Outcome {
    let t = default_timing(5).expect("timing runs");
    let us = |v| t.summary(v).unwrap().update_us_mean;
    let (c, tr, a, p) =
        (us(Variant::Classical), us(Variant::Tracking), us(Variant::Avoidance), us(Variant::PerceptionAware));
    let pass = c <= tr && tr <= a && p <= 2.0 * a && a <= 2.0 * p && p < 50_000.0;
    outcome(
        "3 timing",
        pass,
        format!("{} steps each; classical {c:.0} us, tracking {tr:.0} us, avoidance {a:.0} us, pampc {p:.0} us", t.samples),
    )
}

fn random_covariance(rng: &mut ChaCha8Rng, max_scale: f64) -> Matrix3<f64> {
    let scale = rng.random_range(0.1 * max_scale..max_scale);
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (a * a.transpose() + Matrix3::identity() * 0.1) * scale
}

fn chance_soundness() -> Outcome {
    const CONFIGS: usize = 50;
    const DRAWS: usize = 100_000;
    let deltas = [0.01, 0.05, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let configs: Vec<_> = (0..CONFIGS)
        .map(|_| {
            let rotation = UnitQuaternion::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            );
            let semi = Vector3::from_fn(|_, _| rng.random_range(0.2..1.5));
            let obs_cov = random_covariance(&mut rng, 0.03);
            let obs = EllipsoidObstacle::new(Vector3::new(1.0, -2.0, 3.0), semi, rotation, obs_cov).unwrap();
            let body_cov = random_covariance(&mut rng, 0.05);
            let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let radius = rng.random_range(0.1..0.4);
            (obs, body_cov, dir, radius, rng.random::<u64>())
        })
        .collect();

    let results: Vec<(f64, f64, f64)> = configs
        .par_iter()
        .flat_map_iter(|(obs, body_cov, dir, radius, seed)| {
            deltas.iter().map(move |&delta| {
                let params = ChanceConstraintParams { delta, radius: *radius, body_covariance: *body_cov, ..Default::default() };
                let p = chance_boundary_along(dir, body_cov, obs, &params).unwrap();
                let residual = chance_constraint(&p, body_cov, obs, &params).unwrap().residual;
                let lb = body_cov.cholesky().unwrap().l();
                let lo = (obs.covariance + Matrix3::identity() * 1e-15).cholesky().unwrap().l();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed ^ delta.to_bits());
                let mut normal = || Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let hits = (0..DRAWS)
                    .filter(|_| {
                        // A displaced obstacle is the same as the body displaced the other way.
                        let rel = p + lb * normal() - lo * normal();
                        obs.in_collision(&rel, *radius)
                    })
                    .count();
                let prob = hits as f64 / DRAWS as f64;
                let se = (delta * (1.0 - delta) / DRAWS as f64).sqrt();
                (residual.abs(), prob - (delta + 3.0 * se), prob / delta)
            })
        })
        .collect();
    let worst_residual = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = results.iter().filter(|r| r.1 > 0.0).count();
    let worst_ratio = results.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        "4 chance constraint soundness",
        violations == 0 && worst_residual < 1e-6,
        format!(
            "{} cases x {DRAWS} draws: {violations} above delta + 3 SE; largest P/delta {worst_ratio:.3}, largest |residual| {worst_residual:.1e}",
            results.len()
        ),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn random_iterate(problem: &NlpProblem, rng: &mut ChaCha8Rng) -> SqpSolution {
    let mut sol = SqpSolution::cold_start(problem);
    for x in sol.states.iter_mut() {
        for k in 0..10 {
            x[k] += rng.random_range(-0.2..0.2);
        }
    }
    for u in sol.inputs.iter_mut() {
        u[0] += rng.random_range(-1.0..1.0);
        for k in 1..4 {
            u[k] = rng.random_range(-1.0..1.0);
        }
    }
    for a in sol.alpha.iter_mut() {
        *a = rng.random_range(0.0..1.0);
    }
    sol
}

/// Largest relative error of the objective gradient and the constraint
/// Jacobians against central differences at one iterate.
fn fd_error(problem: &NlpProblem, sol: &SqpSolution) -> f64 {
    let h = 1e-6;
    let eval = problem.evaluate(sol);
    let w = problem.stack(sol);
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[k] += h;
        wm[k] -= h;
        let (ep, em) = (problem.evaluate(&problem.unstack(&wp)), problem.evaluate(&problem.unstack(&wm)));
        worst = worst.max(rel_err(eval.gradient[k], (ep.objective - em.objective) / (2.0 * h)));
        let fd_eq: DVector<f64> = (&ep.equality - &em.equality) / (2.0 * h);
        for r in 0..fd_eq.len() {
            worst = worst.max(rel_err(eval.equality_jacobian[(r, k)], fd_eq[r]));
        }
        if ep.inequality.len() == eval.inequality.len() && em.inequality.len() == eval.inequality.len() {
            for r in 0..eval.inequality.len() {
                let fd = (ep.inequality[r] - em.inequality[r]) / (2.0 * h);
                worst = worst.max(rel_err(eval.inequality_jacobian[(r, k)], fd));
            }
        }
    }
    worst
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn rk4_slope() -> f64 {
    let params = QuadParams::default();
    let model = FullModel::new(params);
    let state = QuadState {
        attitude: UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5),
        velocity: Vector3::new(1.0, -0.5, 0.2),
        body_rates: Vector3::new(1.5, -2.0, 1.0),
        ..QuadState::default()
    };
    let u = nalgebra::SVector::<f64, 4>::new(1.2, 2.6, 1.9, 2.3);
    let integrate = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        (0..steps).fold(state.to_full(), |x, _| rk4(&model, &x, &u, dt))
    };
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let reference = integrate(dts[3] / 16.0);
    let errors: Vec<f64> = dts.iter().map(|&dt| (integrate(dt) - reference).norm()).collect();
    log_log_slope(&dts, &errors)
}

fn derivatives() -> Outcome {
    const PROBLEMS: u64 = 20;
    const PER_PROBLEM: usize = 5;
    let errors: Vec<f64> = (0..PROBLEMS)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            let scene = mast_row([rng.random_range(-4.0..4.0), rng.random_range(0.0..3.0), 3.0]);
            let s = &scene.mpc;
            let path = scene.reference.path();
            let t = rng.random_range(0.0..0.5 * scene.reference.duration());
            let reference = path.reference(t, s.horizon, s.dt, &s.quad).unwrap();
            let model = scene.perception_model(scene.inspected_line()).unwrap();
            let problem = NlpProblem::build(
                Variant::PerceptionAware,
                s,
                reference.clone(),
                reference.states[0],
                Some(model),
                &scene.obstacles(),
            )
            .unwrap();
            (0..PER_PROBLEM).map(move |_| fd_error(&problem, &random_iterate(&problem, &mut rng))).collect::<Vec<_>>()
        })
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let failures = errors.iter().filter(|&&e| e >= 1e-4).count();
    let slope = rk4_slope();
    outcome(
        "5 derivatives and integration order",
        failures == 0 && (3.7..=4.3).contains(&slope),
        format!("{} iterates, {failures} with relative error >= 1e-4 (worst {worst:.1e}); RK4 order {slope:.2}", errors.len()),
    )
}

fn hough() -> Outcome {
    let config = BenchConfig::default();
    let clean = detect_bench(Detector::Hough, 100, 0, 0.0, &config);
    let noisy = detect_bench(Detector::Hough, 100, 0, 2.0 / 255.0, &config);
    outcome(
        "6 hough detection",
        clean.failures == 0 && noisy.prf.f1 >= 0.9,
        format!(
            "noiseless: {} of {} scenes with a missed line; noisy: F1 {:.3} (P {:.3}, R {:.3}) at tau {}",
            clean.failures, clean.scenes, noisy.prf.f1, noisy.prf.precision, noisy.prf.recall, config.tau
        ),
    )
}

fn brute_force(costs: &[f64], rows: usize, cols: usize) -> f64 {
    fn go(costs: &[f64], rows: usize, cols: usize, r: usize, used: &mut [bool], left: usize) -> f64 {
        if r == rows || left == 0 {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        // A row may go unassigned only when rows outnumber the columns.
        if rows - r > left {
            best = go(costs, rows, cols, r + 1, used, left);
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                best = best.min(costs[r * cols + c] + go(costs, rows, cols, r + 1, used, left - 1));
                used[c] = false;
            }
        }
        best
    }
    go(costs, rows, cols, 0, &mut vec![false; cols], rows.min(cols))
}

fn assignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let costs: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..10.0)).collect();
        let a = hungarian(&costs, rows, cols);
        let assigned = a.iter().filter(|c| c.is_some()).count();
        let got = assignment_cost(&costs, cols, &a);
        let want = brute_force(&costs, rows, cols);
        worst = worst.max((got - want).abs());
        if assigned != rows.min(cols) || (got - want).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    outcome(
        "7 hungarian against brute force",
        mismatches == 0,
        format!("1000 matrices up to 6x6: {mismatches} mismatches, largest cost difference {worst:.1e}"),
    )
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn reproducibility() -> Outcome {
    let commands: Vec<Vec<String>> = vec![
        vec!["simulate".into(), scenario("mast-row.toml")],
        vec!["avoidance-mc".into(), "--runs".into(), "4".into()],
        vec!["visibility".into()],
        vec!["timing".into(), "--rollouts".into(), "1".into()],
        vec!["detect-bench".into(), "--scenes".into(), "10".into(), "--noise".into(), "0.01".into()],
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for args in &commands {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let ok = dirs.iter().all(|d| {
            Command::new(env!("CARGO_BIN_EXE_pampc"))
                .args(args)
                .arg("--out")
                .arg(d.path())
                .output()
                .is_ok_and(|o| o.status.success())
        });
        let (a, b) = (csv_files(dirs[0].path()), csv_files(dirs[1].path()));
        files += a.len();
        if !ok || a.is_empty() || a != b {
            differing.push(args[0].clone());
        }
    }
    outcome(
        "9 bitwise reproducible output",
        differing.is_empty(),
        format!("{} subcommands, {files} CSV files; differing or failed: {differing:?}", commands.len()),
    )
}

#[test]
fn acceptance() {
    let mut outcomes = avoidance_and_alpha();
    outcomes.push(visibility());
    outcomes.push(timing());
    outcomes.push(chance_soundness());
    outcomes.push(derivatives());
    outcomes.push(hough());
    outcomes.push(assignment());
    outcomes.push(reproducibility());
    outcomes.sort_by_key(|o| o.name);
    println!("\nsummary:");
    for o in &outcomes {
        println!("  [{}] {}", if o.pass { "PASS" } else { "FAIL" }, o.name);
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("{} ({})", o.name, o.detail)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join("; "));
}
