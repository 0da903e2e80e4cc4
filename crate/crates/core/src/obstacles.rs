//! Ellipsoidal obstacles, the logistic collision cost and the Gaussian
//! chance constraint used to keep the quadrotor away from them.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, RowVector3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Ellipsoid with a Gaussian uncertainty on its center.
///
/// `rotation` is `R_WO`; the shape matrix is built as `R_WOᵀ·D·R_WO`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidObstacle {
    pub center: Vector3<f64>,
    pub semi_axes: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub covariance: Matrix3<f64>,
}

impl EllipsoidObstacle {
    pub fn new(
        center: Vector3<f64>,
        semi_axes: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        covariance: Matrix3<f64>,
    ) -> Result<Self> {
        let obs = Self { center, semi_axes, rotation, covariance };
        obs.validate()?;
        Ok(obs)
    }

    pub fn axis_aligned(center: Vector3<f64>, semi_axes: Vector3<f64>) -> Result<Self> {
        Self::new(center, semi_axes, UnitQuaternion::identity(), Matrix3::zeros())
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        Self::axis_aligned(center, Vector3::repeat(radius))
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.center.as_slice(), "obstacle center")?;
        ensure_finite(self.semi_axes.as_slice(), "obstacle semi-axes")?;
        ensure_finite(self.covariance.as_slice(), "obstacle covariance")?;
        if self.semi_axes.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidArgument("semi-axes must be positive".into()));
        }
        let r = self.rotation.to_rotation_matrix().into_inner();
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 {
            return Err(Error::InvalidArgument("obstacle rotation is not orthonormal".into()));
        }
        check_psd(&self.covariance, "obstacle covariance")
    }

    fn scaled(&self, r: f64, power: f64) -> Matrix3<f64> {
        let rot = self.rotation.to_rotation_matrix().into_inner();
        let d = Matrix3::from_diagonal(&self.semi_axes.map(|a| (a + r).powf(-power)));
        rot.transpose() * d * rot
    }

    /// Shape matrix `Ω_o` of the ellipsoid inflated by `r`.
    pub fn omega(&self, r: f64) -> Matrix3<f64> {
        self.scaled(r, 2.0)
    }

    /// Symmetric square root of [`omega`](Self::omega).
    pub fn omega_sqrt(&self, r: f64) -> Matrix3<f64> {
        self.scaled(r, 1.0)
    }

    /// Quadratic form `(p − p_O)ᵀ Ω_o (p − p_O)`; below 1 means inside.
    pub fn normalized_distance_sq(&self, p: &Vector3<f64>, r: f64) -> f64 {
        let d = p - self.center;
        d.dot(&(self.omega(r) * d))
    }

    pub fn in_collision(&self, p: &Vector3<f64>, r: f64) -> bool {
        self.normalized_distance_sq(p, r) <= 1.0
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.center).norm()
    }
}

fn check_psd(m: &Matrix3<f64>, what: &str) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -1e-12 * m.amax().max(1.0)) {
        return Err(Error::InvalidArgument(format!("{what} is not positive semi-definite")));
    }
    Ok(())
}

pub fn omega_matrix(obs: &EllipsoidObstacle, r: f64) -> Matrix3<f64> {
    obs.omega(r)
}

pub fn in_collision(p: &Vector3<f64>, obs: &EllipsoidObstacle, r: f64) -> bool {
    obs.in_collision(p, r)
}

/// Weight, smoothness and threshold of the logistic collision cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionCostParams {
    pub weight: f64,
    pub smoothness: f64,
    pub threshold: f64,
}

impl Default for CollisionCostParams {
    fn default() -> Self {
        Self { weight: 20.0, smoothness: 3.0, threshold: 1.0 }
    }
}

impl CollisionCostParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(&[self.weight, self.smoothness, self.threshold], "collision cost parameters")?;
        if self.weight < 0.0 || self.smoothness <= 0.0 || self.threshold <= 0.0 {
            return Err(Error::InvalidArgument(
                "collision cost needs weight >= 0, smoothness > 0, threshold > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `Q_o / (1 + exp(λ_o (d − r_o)))`.
pub fn collision_cost(d: f64, params: &CollisionCostParams) -> f64 {
    let z = params.smoothness * (d - params.threshold);
    if z > 700.0 {
        return params.weight * (-z).exp();
    }
    params.weight / (1.0 + z.exp())
}

/// Derivative of [`collision_cost`] with respect to the distance.
pub fn collision_cost_derivative(d: f64, params: &CollisionCostParams) -> f64 {
    if params.weight == 0.0 {
        return 0.0;
    }
    let s = collision_cost(d, params) / params.weight;
    -params.weight * params.smoothness * s * (1.0 - s)
}

/// Which space the direction `n_o` is normalized in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `n_o ∝ Ω^{1/2}(p̂_B − p̂_O)`; exact for spheres.
    #[default]
    Transformed,
    /// `n_o ∝ p̂_B − p̂_O`.
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanceConstraintParams {
    pub delta: f64,
    /// Safety radius of the quadrotor.
    pub radius: f64,
    pub body_covariance: Matrix3<f64>,
    pub normalization: Normalization,
}

impl Default for ChanceConstraintParams {
    fn default() -> Self {
        Self {
            delta: 0.05,
            radius: 0.2,
            body_covariance: Matrix3::from_diagonal_element(0.01),
            normalization: Normalization::Transformed,
        }
    }
}

impl ChanceConstraintParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument(format!("delta {} outside (0, 0.5)", self.delta)));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidArgument("safety radius must be positive".into()));
        }
        check_psd(&self.body_covariance, "body covariance")
    }
}

/// Inverse error function on (−1, 1), refined by Newton steps until
/// `erf(x)` reproduces the argument.
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y > -1.0 && y < 1.0) {
        return Err(Error::Domain(y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y < 0.0 {
        return erf_inv(-y).map(|x| -x);
    }
    let mut x = erf_inv_guess(y);
    let tail = y > 0.5;
    for _ in 0..8 {
        // Residuals in the upper tail are evaluated through erfc to keep
        // relative precision as y approaches 1.
        let f = if tail { (1.0 - y) - libm::erfc(x) } else { libm::erf(x) - y };
        let step = f / (std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp());
        // Halley correction: f'' / f' = −2x.
        let step = step / (1.0 + x * step);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

fn erf_inv_guess(y: f64) -> f64 {
    let w = -((1.0 - y) * (1.0 + y)).ln();
    let p = if w < 5.0 {
        let w = w - 2.5;
        [
            2.810_226_36e-08,
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ]
        .iter()
        .fold(0.0, |acc, c| acc * w + c)
    } else {
        let w = w.sqrt() - 3.0;
        [
            -0.000_200_214_257,
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ]
        .iter()
        .fold(0.0, |acc, c| acc * w + c)
    };
    p * y
}

/// Value and position gradient of the deterministic chance constraint
/// `cc(p̂_B) ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChanceConstraint {
    pub residual: f64,
    pub gradient: RowVector3<f64>,
}

pub fn chance_constraint_residual(
    p_body: &Vector3<f64>,
    body_covariance: &Matrix3<f64>,
    obs: &EllipsoidObstacle,
    params: &ChanceConstraintParams,
) -> Result<f64> {
    chance_constraint(p_body, body_covariance, obs, params).map(|c| c.residual)
}

pub fn chance_constraint(
    p_body: &Vector3<f64>,
    body_covariance: &Matrix3<f64>,
    obs: &EllipsoidObstacle,
    params: &ChanceConstraintParams,
) -> Result<ChanceConstraint> {
    let k = erf_inv(1.0 - 2.0 * params.delta)?;
    let w = obs.omega_sqrt(params.radius);
    let delta = p_body - obs.center;
    let wd = w * delta;
    let (y, t) = match params.normalization {
        Normalization::Transformed => (wd, w),
        Normalization::Euclidean => (delta, Matrix3::identity()),
    };
    let ny = y.norm();
    if ny < 1e-12 {
        return Err(Error::DegenerateDirection);
    }
    let n = y / ny;
    let s = w * (body_covariance + obs.covariance) * w;
    let spread_sq = 2.0 * n.dot(&(s * n));
    let spread = spread_sq.max(0.0).sqrt();
    let margin = n.dot(&wd);

    // dn/dp = (I − n nᵀ) T / |y|
    let dn = (Matrix3::identity() - n * n.transpose()) * t / ny;
    let d_margin = wd.transpose() * dn + n.transpose() * w;
    let d_spread = if spread > 1e-14 {
        (n.transpose() * s * dn) * (2.0 / spread)
    } else {
        RowVector3::zeros()
    };
    Ok(ChanceConstraint { residual: k * spread + 1.0 - margin, gradient: d_spread * k - d_margin })
}

/// Point on the ray `center + t·direction` where the chance constraint is
/// active, found by bisection (the residual is monotone along rays).
pub fn chance_boundary_along(
    direction: &Vector3<f64>,
    body_covariance: &Matrix3<f64>,
    obs: &EllipsoidObstacle,
    params: &ChanceConstraintParams,
) -> Result<Vector3<f64>> {
    let u = direction
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidArgument("zero direction".into()))?;
    let f = |t: f64| chance_constraint_residual(&(obs.center + u * t), body_covariance, obs, params);
    let (mut lo, mut hi) = (1e-9, obs.semi_axes.max() + params.radius);
    while f(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::InvalidArgument("chance constraint boundary not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    Ok(obs.center + u * hi)
}

/// Obstacle entry of a scenario file.
///
/// ```toml
/// [[obstacle]]
/// center = [7.5, 0.0, 2.0]       # m
/// semi_axes = [0.3, 0.3, 2.0]    # m
/// rotation = [1.0, 0.0, 0.0, 0.0] # quaternion (w, x, y, z), optional
/// covariance = [0.01, 0.01, 0.0]  # m², diagonal, optional
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    #[serde(default = "identity_quaternion")]
    pub rotation: [f64; 4],
    #[serde(default)]
    pub covariance: [f64; 3],
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl ObstacleSpec {
    pub fn build(&self) -> Result<EllipsoidObstacle> {
        let [w, x, y, z] = self.rotation;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("obstacle rotation {:?} is not a unit quaternion", self.rotation)));
        }
        EllipsoidObstacle::new(
            Vector3::from(self.center),
            Vector3::from(self.semi_axes),
            UnitQuaternion::from_quaternion(q),
            Matrix3::from_diagonal(&Vector3::from(self.covariance)),
        )
    }
}

impl From<&EllipsoidObstacle> for ObstacleSpec {
    fn from(o: &EllipsoidObstacle) -> Self {
        let q = o.rotation.quaternion();
        Self {
            center: o.center.into(),
            semi_axes: o.semi_axes.into(),
            rotation: [q.w, q.i, q.j, q.k],
            covariance: o.covariance.diagonal().into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ObstacleFile {
    #[serde(default)]
    obstacle: Vec<ObstacleSpec>,
}

pub fn obstacles_from_toml_str(text: &str) -> Result<Vec<EllipsoidObstacle>> {
    let file: ObstacleFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.obstacle.iter().map(ObstacleSpec::build).collect()
}

/// Writes obstacles in the `[[obstacle]]` schema read by
/// [`obstacles_from_toml_str`]. Only the covariance diagonal is kept.
pub fn obstacles_to_toml_string(obstacles: &[EllipsoidObstacle]) -> String {
    let file = ObstacleFile { obstacle: obstacles.iter().map(ObstacleSpec::from).collect() };
    toml::to_string(&file).expect("obstacle specs are plain arrays of floats")
}

pub fn load_obstacles(path: impl AsRef<Path>) -> Result<Vec<EllipsoidObstacle>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    obstacles_from_toml_str(&text)
}

/// Indices of the `k` obstacles with the smallest center distance to `p`.
/// Ties resolve by index so the selection is deterministic.
pub fn nearest(obstacles: &[EllipsoidObstacle], p: &Vector3<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..obstacles.len()).collect();
    idx.sort_by(|&a, &b| {
        obstacles[a].distance(p).total_cmp(&obstacles[b].distance(p)).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}
