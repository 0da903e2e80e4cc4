use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::problem::{NlpProblem, NX};
use super::reference::State;
use super::solution::{QpStatus, SolveStatus, SqpSolution};
use crate::dynamics::rk4_with_jacobians;
use crate::error::{Error, Result};
use crate::qp::{DenseQp, QpError, QpSolution};

/// Result of one real-time iteration: the plan to apply now and the
/// shifted plan to warm-start the next control step.
#[derive(Clone, Debug)]
pub struct RtiStep {
    pub solution: SqpSolution,
    pub warm_start: SqpSolution,
}

/// One SQP iteration followed by a shift of the result.
pub fn rti_step(problem: &NlpProblem, warm_start: &SqpSolution) -> Result<RtiStep> {
    let solution = sqp_iteration(problem, warm_start)?;
    let warm_start = solution.shifted(problem);
    Ok(RtiStep { solution, warm_start })
}

/// Runs SQP iterations without shifting until the KKT residual drops below
/// `tol` or `max_iter` iterations have been performed.
pub fn solve_to_convergence(problem: &NlpProblem, tol: f64, max_iter: usize) -> Result<SqpSolution> {
    solve_from(problem, &SqpSolution::cold_start(problem), tol, max_iter)
}

pub fn solve_from(problem: &NlpProblem, start: &SqpSolution, tol: f64, max_iter: usize) -> Result<SqpSolution> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
    }
    let mut sol = start.clone();
    for k in 1..=max_iter.max(1) {
        sol = sqp_iteration(problem, &sol)?;
        sol.stats.iterations = k;
        if sol.stats.kkt_residual < tol {
            sol.stats.status = SolveStatus::Converged;
            return Ok(sol);
        }
    }
    sol.stats.status = SolveStatus::MaxIterations;
    Ok(sol)
}

/// Gauss-Newton SQP iteration with condensing: the state deviations are
/// eliminated through the linearized dynamics, leaving a dense QP in the
/// stage inputs (and `α`).
pub fn sqp_iteration(problem: &NlpProblem, warm: &SqpSolution) -> Result<SqpSolution> {
    if !warm.is_compatible(problem) {
        return Err(Error::Construction(format!(
            "warm start horizon {} does not match problem horizon {}",
            warm.horizon(),
            problem.horizon()
        )));
    }
    let start = Instant::now();
    let n = problem.horizon();
    let nv = problem.nv();
    let nvar = n * nv;

    // Δx_i = G_i Δv + g_i
    let mut big_g: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
    let mut small_g: Vec<State> = Vec::with_capacity(n + 1);
    big_g.push(DMatrix::zeros(NX, nvar));
    small_g.push(problem.x_init - warm.states[0]);
    for i in 0..n {
        let (next, a, b) = rk4_with_jacobians(problem.model(), &warm.states[i], &warm.inputs[i], problem.dt());
        let defect = next - warm.states[i + 1];
        let mut gi = DMatrix::zeros(NX, nvar);
        if i > 0 {
            let cols = i * nv;
            gi.columns_mut(0, cols).copy_from(&(a * big_g[i].columns(0, cols)));
        }
        gi.view_mut((0, i * nv), (NX, 4)).copy_from(&b);
        big_g.push(gi);
        small_g.push(a * small_g[i] + defect);
    }

    let mut hessian = DMatrix::<f64>::zeros(nvar, nvar);
    let mut gradient = DVector::<f64>::zeros(nvar);
    let mut accumulate = |jx: &DMatrix<f64>, jv: Option<&DMatrix<f64>>, rho: &DVector<f64>, i: usize| {
        let cols = if jv.is_some() { (i + 1) * nv } else { nvar };
        let mut m = jx * big_g[i].columns(0, cols);
        if let Some(jv) = jv {
            let mut block = m.columns_mut(i * nv, nv);
            block += jv;
        }
        let c = rho + jx * small_g[i];
        let mut h = hessian.view_mut((0, 0), (cols, cols));
        h.gemm_tr(1.0, &m, &m, 1.0);
        let mut g = gradient.rows_mut(0, cols);
        g.gemv_tr(1.0, &m, &c, 1.0);
    };
    for i in 0..n {
        let blocks = problem.stage_blocks(i, &warm.states[i], &warm.inputs[i], warm.alpha[i]);
        let rows: usize = blocks.iter().map(|b| b.rho.len()).sum();
        let mut jx = DMatrix::zeros(rows, NX);
        let mut jv = DMatrix::zeros(rows, nv);
        let mut rho = DVector::zeros(rows);
        let mut r = 0;
        for b in &blocks {
            let m = b.rho.len();
            jx.rows_mut(r, m).copy_from(&b.jx);
            jv.rows_mut(r, m).copy_from(&b.jv);
            rho.rows_mut(r, m).copy_from(&b.rho);
            r += m;
        }
        accumulate(&jx, Some(&jv), &rho, i);
    }
    let terminal = problem.terminal_block(&warm.states[n]);
    accumulate(&terminal.jx, None, &terminal.rho, n);
    for k in 0..nvar {
        hessian[(k, k)] += 1e-10;
    }

    let (lo, hi) = problem.input_bounds();
    let mut lower = DVector::zeros(nvar);
    let mut upper = DVector::zeros(nvar);
    for i in 0..n {
        for k in 0..nv {
            let current = if k < 4 { warm.inputs[i][k] } else { warm.alpha[i] };
            lower[i * nv + k] = lo[k] - current;
            upper[i * nv + k] = hi[k] - current;
        }
    }

    // g + ∇g·Δx + g_α Δα ≤ 0  ⇔  −∇g·G Δv − g_α Δα ≥ g + ∇g·g_i
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..=n {
        let ia = problem.alpha_index(i);
        for c in problem.stage_constraints(&warm.states[i], warm.alpha[ia]) {
            let gp = big_g[i].rows(0, 3);
            let mut row = -(c.d_position * gp).transpose();
            if nv == 5 {
                row[ia * nv + 4] -= c.d_alpha;
            }
            let rhs = c.value + (c.d_position * small_g[i].fixed_rows::<3>(0))[0];
            rows.push((row, rhs));
        }
    }
    let mut qp = DenseQp::new(hessian, gradient);
    qp.lower = lower;
    qp.upper = upper;
    qp.constraints = DMatrix::from_fn(rows.len(), nvar, |r, c| rows[r].0[c]);
    qp.constraint_lower = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));

    let (step, qp_status, qp_iterations, active) = match qp.solve() {
        Ok(s) => {
            let active = count_active(&s);
            (Some(s.x), QpStatus::Optimal, s.iterations, active)
        }
        Err(QpError::Infeasible) => match soften(&qp, problem.settings.slack_penalty).solve() {
            Ok(s) => {
                let active = count_active(&s);
                (Some(s.x.rows(0, nvar).into_owned()), QpStatus::Softened, s.iterations, active)
            }
            Err(_) => (None, QpStatus::Failed, 0, 0),
        },
        Err(_) => (None, QpStatus::Failed, 0, 0),
    };

    let mut sol = warm.clone();
    let mut step_norm = 0.0;
    if let Some(dv) = step {
        step_norm = dv.amax();
        for i in 0..n {
            for k in 0..4 {
                sol.inputs[i][k] = (warm.inputs[i][k] + dv[i * nv + k]).clamp(lo[k], hi[k]);
            }
            if nv == 5 {
                sol.alpha[i] = (warm.alpha[i] + dv[i * nv + 4]).clamp(lo[4], hi[4]);
            }
        }
        for i in 0..=n {
            sol.states[i] = warm.states[i] + small_g[i] + State::from_iterator((&big_g[i] * &dv).iter().copied());
        }
        sol.states[0] = problem.x_init;
    }
    let solver_time_us = start.elapsed().as_micros() as u64;

    let defect_norm = problem.defect_norm(&sol);
    sol.stats.iterations = 1;
    sol.stats.status = SolveStatus::Iterate;
    sol.stats.qp_status = qp_status;
    sol.stats.qp_iterations = qp_iterations;
    sol.stats.active_constraints = active;
    sol.stats.step_norm = step_norm;
    sol.stats.defect_norm = defect_norm;
    sol.stats.kkt_residual = if qp_status == QpStatus::Failed { f64::INFINITY } else { step_norm + defect_norm };
    sol.stats.objective = problem.objective(&sol);
    sol.stats.solver_time_us = solver_time_us;
    Ok(sol)
}

fn count_active(s: &QpSolution) -> usize {
    s.constraint_multipliers
        .iter()
        .chain(s.lower_multipliers.iter())
        .chain(s.upper_multipliers.iter())
        .filter(|&&m| m > 0.0)
        .count()
}

/// Adds a non-negative slack to every general constraint row with an L1
/// penalty (plus a small quadratic term to keep the Hessian definite).
fn soften(qp: &DenseQp, penalty: f64) -> DenseQp {
    let n = qp.dim();
    let m = qp.constraints.nrows();
    let mut h = DMatrix::zeros(n + m, n + m);
    h.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    for k in 0..m {
        h[(n + k, n + k)] = 1e-3;
    }
    let mut g = DVector::from_element(n + m, penalty);
    g.rows_mut(0, n).copy_from(&qp.gradient);
    let mut c = DMatrix::zeros(m, n + m);
    c.view_mut((0, 0), (m, n)).copy_from(&qp.constraints);
    c.view_mut((0, n), (m, m)).fill_with_identity();
    let mut lower = DVector::zeros(n + m);
    lower.rows_mut(0, n).copy_from(&qp.lower);
    let mut upper = DVector::from_element(n + m, f64::INFINITY);
    upper.rows_mut(0, n).copy_from(&qp.upper);
    DenseQp { hessian: h, gradient: g, lower, upper, constraints: c, constraint_lower: qp.constraint_lower.clone() }
}
