use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::reference::{Input, ReferenceTrajectory, State};
use super::settings::MpcSettings;
use super::solution::SqpSolution;
use crate::dynamics::{rk4_with_jacobians, ReducedModel, QUAT};
use crate::error::{Error, Result};
use crate::geometry::PerceptionModel;
use crate::obstacles::{chance_constraint, collision_cost, nearest, EllipsoidObstacle};

pub const NX: usize = 10;

/// Which cost terms and constraints a controller uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Reference tracking only.
    Classical,
    /// Reference plus line tracking, `α ≡ 0`.
    Tracking,
    /// Reference plus obstacle cost and constraint, `α ≡ α_max`.
    Avoidance,
    /// Everything, with `α` optimized per stage.
    #[serde(rename = "pampc")]
    PerceptionAware,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Classical, Variant::Tracking, Variant::Avoidance, Variant::PerceptionAware];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Classical => "classical",
            Variant::Tracking => "tracking",
            Variant::Avoidance => "avoidance",
            Variant::PerceptionAware => "pampc",
        }
    }

    pub fn uses_perception(self) -> bool {
        matches!(self, Variant::Tracking | Variant::PerceptionAware)
    }

    pub fn uses_obstacles(self) -> bool {
        matches!(self, Variant::Avoidance | Variant::PerceptionAware)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Free,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Tracking,
    Input,
    Perception,
    Collision,
    Alpha,
}

/// Residual block `ρ(x_i, v_i)` of a least-squares cost term with its
/// Jacobians; the term contributes `|ρ|²` to the objective.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub kind: CostKind,
    pub rho: DVector<f64>,
    pub jx: DMatrix<f64>,
    pub jv: DMatrix<f64>,
}

/// Linearizable stage inequality `g(x_i, α_i) ≤ 0`.
#[derive(Clone, Copy, Debug)]
pub struct StageConstraint {
    pub obstacle: usize,
    pub value: f64,
    pub d_position: RowVector3<f64>,
    pub d_alpha: f64,
}

/// Per-stage objective breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: usize,
    pub tracking: f64,
    pub input: f64,
    pub perception: f64,
    pub collision: f64,
    pub alpha: f64,
}

impl StageCost {
    pub fn total(&self) -> f64 {
        self.tracking + self.input + self.perception + self.collision + self.alpha
    }
}

/// Full nonlinear program over the stacked variables
/// `w = [x_0, …, x_N, v_0, …, v_{N−1}]`, used for derivative checks.
#[derive(Clone, Debug)]
pub struct NlpEvaluation {
    pub objective: f64,
    pub gradient: DVector<f64>,
    /// `x_0 − x_init` followed by the dynamics defects.
    pub equality: DVector<f64>,
    pub equality_jacobian: DMatrix<f64>,
    /// Rows `g ≤ 0`.
    pub inequality: DVector<f64>,
    pub inequality_jacobian: DMatrix<f64>,
}

/// One instance of the optimal control problem: horizon, reference,
/// initial state and the active cost terms and constraints.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub variant: Variant,
    pub settings: MpcSettings,
    pub reference: ReferenceTrajectory,
    pub x_init: State,
    pub perception: Option<PerceptionModel>,
    pub obstacles: Vec<EllipsoidObstacle>,
    model: ReducedModel,
    perception_sqrt: Vector3<f64>,
}

pub fn build_classical(settings: &MpcSettings, reference: ReferenceTrajectory, x_init: State) -> Result<NlpProblem> {
    NlpProblem::build(Variant::Classical, settings, reference, x_init, None, &[])
}

pub fn build_pampc(
    settings: &MpcSettings,
    reference: ReferenceTrajectory,
    x_init: State,
    perception: PerceptionModel,
    obstacles: &[EllipsoidObstacle],
) -> Result<NlpProblem> {
    NlpProblem::build(Variant::PerceptionAware, settings, reference, x_init, Some(perception), obstacles)
}

impl NlpProblem {
    pub fn build(
        variant: Variant,
        settings: &MpcSettings,
        reference: ReferenceTrajectory,
        x_init: State,
        perception: Option<PerceptionModel>,
        obstacles: &[EllipsoidObstacle],
    ) -> Result<Self> {
        settings.validate()?;
        reference.validate()?;
        if reference.horizon() != settings.horizon {
            return Err(Error::Construction(format!(
                "reference horizon {} does not match {}",
                reference.horizon(),
                settings.horizon
            )));
        }
        if (reference.dt - settings.dt).abs() > 1e-12 {
            return Err(Error::Construction("reference dt does not match the controller dt".into()));
        }
        if !x_init.iter().all(|v| v.is_finite()) || x_init.fixed_rows::<4>(QUAT).norm() < 1e-6 {
            return Err(Error::Construction("invalid initial state".into()));
        }
        if variant.uses_perception() && perception.is_none() {
            return Err(Error::Construction(format!("{variant} controller needs a perception model")));
        }
        for o in obstacles {
            o.validate()?;
        }
        Ok(Self {
            variant,
            perception: if variant.uses_perception() { perception } else { None },
            obstacles: if variant.uses_obstacles() { obstacles.to_vec() } else { Vec::new() },
            model: ReducedModel::new(settings.quad.clone()),
            perception_sqrt: Vector3::from(settings.weights.perception).map(f64::sqrt),
            settings: settings.clone(),
            reference,
            x_init,
        })
    }

    pub fn horizon(&self) -> usize {
        self.settings.horizon
    }

    pub fn dt(&self) -> f64 {
        self.settings.dt
    }

    pub fn model(&self) -> &ReducedModel {
        &self.model
    }

    pub fn alpha_mode(&self) -> AlphaMode {
        let w = &self.settings.weights;
        match self.variant {
            Variant::PerceptionAware => AlphaMode::Free,
            Variant::Avoidance => AlphaMode::Fixed(w.alpha_max),
            Variant::Classical | Variant::Tracking => AlphaMode::Fixed(0.0),
        }
    }

    /// Decision variables per stage: four inputs, plus `α` when free.
    pub fn nv(&self) -> usize {
        match self.alpha_mode() {
            AlphaMode::Free => 5,
            AlphaMode::Fixed(_) => 4,
        }
    }

    pub fn input_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let q = &self.settings.quad;
        let w = q.rate_max;
        let mut lo = vec![q.thrust_min, -w, -w, -w];
        let mut hi = vec![q.thrust_max, w, w, w];
        if self.alpha_mode() == AlphaMode::Free {
            lo.push(0.0);
            hi.push(self.settings.weights.alpha_max);
        }
        (DVector::from_vec(lo), DVector::from_vec(hi))
    }

    fn alpha_bar(&self, alpha: f64) -> f64 {
        1.0 - alpha / self.settings.weights.alpha_max
    }

    fn tracking_block(&self, x: &State, xs: &State, weights: &[f64; 10]) -> ResidualBlock {
        let mut xs = *xs;
        // q and −q are the same attitude; compare against the closer sign.
        if x.fixed_rows::<4>(QUAT).dot(&xs.fixed_rows::<4>(QUAT)) < 0.0 {
            let flipped = -xs.fixed_rows::<4>(QUAT);
            xs.fixed_rows_mut::<4>(QUAT).copy_from(&flipped);
        }
        let sq = DVector::from_iterator(NX, weights.iter().map(|w| w.sqrt()));
        ResidualBlock {
            kind: CostKind::Tracking,
            rho: sq.component_mul(&DVector::from_column_slice((x - xs).as_slice())),
            jx: DMatrix::from_diagonal(&sq),
            jv: DMatrix::zeros(NX, self.nv()),
        }
    }

    /// Cost residual blocks of stage `i < N`.
    pub fn stage_blocks(&self, i: usize, x: &State, u: &Input, alpha: f64) -> Vec<ResidualBlock> {
        let w = &self.settings.weights;
        let nv = self.nv();
        let free = self.alpha_mode() == AlphaMode::Free;
        let mut blocks = vec![self.tracking_block(x, &self.reference.states[i], &w.state)];

        let sr = DVector::from_iterator(4, w.input.iter().map(|r| r.sqrt()));
        let mut jv = DMatrix::zeros(4, nv);
        jv.view_mut((0, 0), (4, 4)).set_diagonal(&sr);
        blocks.push(ResidualBlock {
            kind: CostKind::Input,
            rho: sr.component_mul(&DVector::from_column_slice((u - self.reference.inputs[i]).as_slice())),
            jx: DMatrix::zeros(4, NX),
            jv,
        });

        if let Some(model) = &self.perception {
            let ab = self.alpha_bar(alpha);
            let p = x.fixed_rows::<3>(0).into_owned();
            let q: Vector4<f64> = x.fixed_rows::<4>(QUAT).into_owned();
            if let Some(pj) = model.evaluate(&p, &q) {
                let s = Matrix3::from_diagonal(&self.perception_sqrt);
                let weighted = s * pj.residual;
                let mut jx = DMatrix::zeros(3, NX);
                jx.view_mut((0, 0), (3, 3)).copy_from(&(s * pj.d_position * ab));
                jx.view_mut((0, QUAT), (3, 4)).copy_from(&(s * pj.d_attitude * ab));
                let mut jv = DMatrix::zeros(3, nv);
                if free {
                    jv.view_mut((0, 4), (3, 1)).copy_from(&(-weighted / w.alpha_max));
                }
                blocks.push(ResidualBlock {
                    kind: CostKind::Perception,
                    rho: DVector::from_column_slice((weighted * ab).as_slice()),
                    jx,
                    jv,
                });
            }
        }

        if self.variant.uses_obstacles() {
            let p = x.fixed_rows::<3>(0).into_owned();
            let params = &self.settings.collision;
            for o in &self.obstacles {
                let delta = p - o.center;
                let d = delta.norm();
                let rho = collision_cost(d, params).sqrt();
                // d√l/dd = −λ√Q·√s(1−s)/2 with s the logistic value.
                let s = if params.weight > 0.0 { rho * rho / params.weight } else { 0.0 };
                let drho = -params.smoothness * params.weight.sqrt() * s.sqrt() * (1.0 - s) / 2.0;
                let mut jx = DMatrix::zeros(1, NX);
                if d > 1e-12 {
                    jx.view_mut((0, 0), (1, 3)).copy_from(&(delta.transpose() * (drho / d)));
                }
                blocks.push(ResidualBlock {
                    kind: CostKind::Collision,
                    rho: DVector::from_element(1, rho),
                    jx,
                    jv: DMatrix::zeros(1, nv),
                });
            }
        }

        if self.variant != Variant::Classical {
            let sa = w.alpha.sqrt();
            let mut jv = DMatrix::zeros(1, nv);
            if free {
                jv[(0, 4)] = sa;
            }
            blocks.push(ResidualBlock {
                kind: CostKind::Alpha,
                rho: DVector::from_element(1, sa * alpha),
                jx: DMatrix::zeros(1, NX),
                jv,
            });
        }
        blocks
    }

    pub fn terminal_block(&self, x: &State) -> ResidualBlock {
        self.tracking_block(x, &self.reference.states[self.horizon()], &self.settings.weights.terminal)
    }

    /// Alpha index paired with the constraints on state `i`. The terminal
    /// state is constrained too, sharing the last stage's `α`.
    pub fn alpha_index(&self, i: usize) -> usize {
        i.min(self.horizon() - 1)
    }

    /// Chance constraints `cc + c·ᾱ ≤ 0` on one predicted state for the
    /// nearest obstacles.
    pub fn stage_constraints(&self, x: &State, alpha: f64) -> Vec<StageConstraint> {
        if !self.variant.uses_obstacles() {
            return Vec::new();
        }
        let w = &self.settings.weights;
        let cc = &self.settings.chance;
        let p = x.fixed_rows::<3>(0).into_owned();
        let free = self.alpha_mode() == AlphaMode::Free;
        nearest(&self.obstacles, &p, self.settings.nearest_obstacles)
            .into_iter()
            .filter_map(|k| {
                // At the obstacle center the normal is undefined; such a
                // stage is already deep inside and the neighbouring stages
                // carry the constraint.
                let c = chance_constraint(&p, &cc.body_covariance, &self.obstacles[k], cc).ok()?;
                Some(StageConstraint {
                    obstacle: k,
                    value: c.residual + w.coupling * self.alpha_bar(alpha),
                    d_position: c.gradient,
                    d_alpha: if free { -w.coupling / w.alpha_max } else { 0.0 },
                })
            })
            .collect()
    }

    pub fn stage_cost_report(&self, sol: &SqpSolution) -> Vec<StageCost> {
        let n = self.horizon();
        let mut rows: Vec<StageCost> = (0..n)
            .map(|i| {
                let mut c = StageCost { stage: i, ..Default::default() };
                for b in self.stage_blocks(i, &sol.states[i], &sol.inputs[i], sol.alpha[i]) {
                    let v = b.rho.norm_squared();
                    match b.kind {
                        CostKind::Tracking => c.tracking += v,
                        CostKind::Input => c.input += v,
                        CostKind::Perception => c.perception += v,
                        CostKind::Collision => c.collision += v,
                        CostKind::Alpha => c.alpha += v,
                    }
                }
                c
            })
            .collect();
        rows.push(StageCost { stage: n, tracking: self.terminal_block(&sol.states[n]).rho.norm_squared(), ..Default::default() });
        rows
    }

    pub fn objective(&self, sol: &SqpSolution) -> f64 {
        let n = self.horizon();
        let stages: f64 = (0..n)
            .flat_map(|i| self.stage_blocks(i, &sol.states[i], &sol.inputs[i], sol.alpha[i]))
            .map(|b| b.rho.norm_squared())
            .sum();
        stages + self.terminal_block(&sol.states[n]).rho.norm_squared()
    }

    /// Largest dynamics defect `|F(x_i, u_i) − x_{i+1}|_∞`.
    pub fn defect_norm(&self, sol: &SqpSolution) -> f64 {
        (0..self.horizon())
            .map(|i| {
                let next = crate::dynamics::rk4(&self.model, &sol.states[i], &sol.inputs[i], self.dt());
                (next - sol.states[i + 1]).amax()
            })
            .fold((sol.states[0] - self.x_init).amax(), f64::max)
    }

    pub fn max_constraint_violation(&self, sol: &SqpSolution) -> f64 {
        (0..=self.horizon())
            .flat_map(|i| self.stage_constraints(&sol.states[i], sol.alpha[self.alpha_index(i)]))
            .map(|c| c.value)
            .fold(0.0, f64::max)
    }

    pub fn stacked_len(&self) -> usize {
        NX * (self.horizon() + 1) + self.nv() * self.horizon()
    }

    pub fn stack(&self, sol: &SqpSolution) -> DVector<f64> {
        let n = self.horizon();
        let nv = self.nv();
        let mut w = DVector::zeros(self.stacked_len());
        for (i, x) in sol.states.iter().enumerate() {
            w.rows_mut(i * NX, NX).copy_from(x);
        }
        let off = NX * (n + 1);
        for i in 0..n {
            w.rows_mut(off + i * nv, 4).copy_from(&sol.inputs[i]);
            if nv == 5 {
                w[off + i * nv + 4] = sol.alpha[i];
            }
        }
        w
    }

    pub fn unstack(&self, w: &DVector<f64>) -> SqpSolution {
        let n = self.horizon();
        let nv = self.nv();
        let off = NX * (n + 1);
        let states = (0..=n).map(|i| State::from_iterator(w.rows(i * NX, NX).iter().copied())).collect();
        let inputs = (0..n).map(|i| Input::from_iterator(w.rows(off + i * nv, 4).iter().copied())).collect();
        let alpha = (0..n)
            .map(|i| match self.alpha_mode() {
                AlphaMode::Free => w[off + i * nv + 4],
                AlphaMode::Fixed(a) => a,
            })
            .collect();
        SqpSolution::new(states, inputs, alpha)
    }

    /// Objective, gradient and constraint Jacobians of the nonlinear
    /// program, assembled from the same residual blocks the solver uses.
    pub fn evaluate(&self, sol: &SqpSolution) -> NlpEvaluation {
        let n = self.horizon();
        let nv = self.nv();
        let len = self.stacked_len();
        let off = NX * (n + 1);
        let mut objective = 0.0;
        let mut gradient = DVector::zeros(len);
        let mut add = |b: &ResidualBlock, i: usize, with_inputs: bool| {
            objective += b.rho.norm_squared();
            let gx = b.jx.tr_mul(&b.rho) * 2.0;
            let mut seg = gradient.rows_mut(i * NX, NX);
            seg += gx;
            if with_inputs {
                let gv = b.jv.tr_mul(&b.rho) * 2.0;
                let mut seg = gradient.rows_mut(off + i * nv, nv);
                seg += gv;
            }
        };
        for i in 0..n {
            for b in self.stage_blocks(i, &sol.states[i], &sol.inputs[i], sol.alpha[i]) {
                add(&b, i, true);
            }
        }
        add(&self.terminal_block(&sol.states[n]), n, false);

        let mut equality = DVector::zeros(NX * (n + 1));
        let mut eq_jac = DMatrix::zeros(NX * (n + 1), len);
        equality.rows_mut(0, NX).copy_from(&(sol.states[0] - self.x_init));
        eq_jac.view_mut((0, 0), (NX, NX)).fill_with_identity();
        for i in 0..n {
            let (next, a, b) = rk4_with_jacobians(&self.model, &sol.states[i], &sol.inputs[i], self.dt());
            let row = NX * (i + 1);
            equality.rows_mut(row, NX).copy_from(&(next - sol.states[i + 1]));
            eq_jac.view_mut((row, i * NX), (NX, NX)).copy_from(&a);
            eq_jac.view_mut((row, (i + 1) * NX), (NX, NX)).fill_with_identity();
            eq_jac.view_mut((row, (i + 1) * NX), (NX, NX)).neg_mut();
            eq_jac.view_mut((row, off + i * nv), (NX, 4)).copy_from(&b);
        }

        let rows: Vec<(usize, StageConstraint)> = (0..=n)
            .flat_map(|i| {
                self.stage_constraints(&sol.states[i], sol.alpha[self.alpha_index(i)]).into_iter().map(move |c| (i, c))
            })
            .collect();
        let mut inequality = DVector::zeros(rows.len());
        let mut ineq_jac = DMatrix::zeros(rows.len(), len);
        for (r, (i, c)) in rows.iter().enumerate() {
            inequality[r] = c.value;
            ineq_jac.view_mut((r, i * NX), (1, 3)).copy_from(&c.d_position);
            if nv == 5 {
                ineq_jac[(r, off + self.alpha_index(*i) * nv + 4)] = c.d_alpha;
            }
        }
        NlpEvaluation {
            objective,
            gradient,
            equality,
            equality_jacobian: eq_jac,
            inequality,
            inequality_jacobian: ineq_jac,
        }
    }
}
