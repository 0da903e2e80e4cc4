//! Dense strictly convex QP solver (Goldfarb–Idnani dual active set).
//!
//! Solves
//!
//! ```text
//! min ½ xᵀHx + gᵀx   s.t.  lower ≤ x ≤ upper,  C x ≥ b
//! ```
//!
//! The dual method starts from the unconstrained minimizer and adds the most
//! violated constraint at a time, so every iterate is optimal for the subset
//! of constraints in the active set. Variables on an active bound are set to
//! the bound exactly on return.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum QpError {
    #[error("QP Hessian is not positive definite")]
    NotConvex,
    #[error("QP constraints are infeasible")]
    Infeasible,
    #[error("QP active-set iteration limit reached")]
    IterationLimit,
    #[error("QP dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, Debug)]
pub struct DenseQp {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// One constraint per row.
    pub constraints: DMatrix<f64>,
    pub constraint_lower: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of `C x ≥ b`, all ≥ 0.
    pub constraint_multipliers: DVector<f64>,
    /// Multipliers of `x ≥ lower` and `x ≤ upper`, all ≥ 0.
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
    pub iterations: usize,
}

impl DenseQp {
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            hessian,
            gradient,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            constraints: DMatrix::zeros(0, n),
            constraint_lower: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        let m = self.constraints.nrows();
        if self.hessian.shape() != (n, n)
            || self.lower.len() != n
            || self.upper.len() != n
            || self.constraints.ncols() != n
            || self.constraint_lower.len() != m
        {
            return Err(QpError::Dimension(format!(
                "n = {n}, H {:?}, C {:?}, b {}",
                self.hessian.shape(),
                self.constraints.shape(),
                self.constraint_lower.len()
            )));
        }
        if (0..n).any(|i| self.lower[i] > self.upper[i]) {
            return Err(QpError::Infeasible);
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        self.check()?;
        Solver::new(self)?.run()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Row {
    General(usize),
    Lower(usize),
    Upper(usize),
}

struct Solver<'a> {
    qp: &'a DenseQp,
    n: usize,
    rows: Vec<Row>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    x: DVector<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    is_active: Vec<bool>,
}

const EPS: f64 = 1e-12;

impl<'a> Solver<'a> {
    fn new(qp: &'a DenseQp) -> Result<Self, QpError> {
        let n = qp.dim();
        let chol = qp.hessian.clone().cholesky().ok_or(QpError::NotConvex)?;
        let l = chol.l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(QpError::NotConvex)?;
        let x = chol.solve(&(-&qp.gradient));
        let mut rows: Vec<Row> = (0..qp.constraints.nrows()).map(Row::General).collect();
        rows.extend((0..n).filter(|&i| qp.lower[i].is_finite()).map(Row::Lower));
        rows.extend((0..n).filter(|&i| qp.upper[i].is_finite()).map(Row::Upper));
        let nrows = rows.len();
        Ok(Self {
            qp,
            n,
            rows,
            j: linv.transpose(),
            r: DMatrix::zeros(n, n),
            x,
            active: Vec::new(),
            u: Vec::new(),
            is_active: vec![false; nrows],
        })
    }

    fn q(&self) -> usize {
        self.active.len()
    }

    fn normal_dot(&self, k: usize, v: &DVector<f64>) -> f64 {
        match self.rows[k] {
            Row::General(i) => self.qp.constraints.row(i).transpose().dot(v),
            Row::Lower(i) => v[i],
            Row::Upper(i) => -v[i],
        }
    }

    fn normal_norm(&self, k: usize) -> f64 {
        match self.rows[k] {
            Row::General(i) => self.qp.constraints.row(i).norm(),
            _ => 1.0,
        }
    }

    fn rhs(&self, k: usize) -> f64 {
        match self.rows[k] {
            Row::General(i) => self.qp.constraint_lower[i],
            Row::Lower(i) => self.qp.lower[i],
            Row::Upper(i) => -self.qp.upper[i],
        }
    }

    fn slack(&self, k: usize) -> f64 {
        self.normal_dot(k, &self.x) - self.rhs(k)
    }

    /// `Jᵀ n_k`.
    fn jt_normal(&self, k: usize) -> DVector<f64> {
        match self.rows[k] {
            Row::General(i) => self.j.tr_mul(&self.qp.constraints.row(i).transpose()),
            Row::Lower(i) => self.j.row(i).transpose(),
            Row::Upper(i) => -self.j.row(i).transpose(),
        }
    }

    fn most_violated(&self) -> Option<usize> {
        let mut best = None;
        let mut worst = 0.0;
        for k in 0..self.rows.len() {
            if self.is_active[k] {
                continue;
            }
            let scale = self.normal_norm(k);
            if scale < EPS {
                if self.rhs(k) > 1e-9 {
                    // 0 ≥ b with b > 0 can never hold.
                    return Some(k);
                }
                continue;
            }
            let s = self.slack(k) / scale;
            let tol = 1e-10 * (1.0 + self.rhs(k).abs() / scale);
            if s < -tol && s < worst {
                worst = s;
                best = Some(k);
            }
        }
        best
    }

    fn run(mut self) -> Result<QpSolution, QpError> {
        let max_iter = 10 * (self.n + self.rows.len()) + 100;
        let mut iterations = 0;
        while let Some(p) = self.most_violated() {
            if self.normal_norm(p) < EPS {
                return Err(QpError::Infeasible);
            }
            let mut up = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(QpError::IterationLimit);
                }
                let q = self.q();
                let d = self.jt_normal(p);
                let z = self.j.columns(q, self.n - q) * d.rows(q, self.n - q);
                let r = self.back_substitute(&d);

                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for (idx, (&rj, &uj)) in r.iter().zip(&self.u).enumerate() {
                    if rj > EPS {
                        let t = uj / rj;
                        if t < t1 {
                            t1 = t;
                            drop = Some(idx);
                        }
                    }
                }
                let zn = self.normal_dot(p, &z);
                let t2 = if z.norm() > EPS && zn > EPS { -self.slack(p) / zn } else { f64::INFINITY };

                if t1.is_infinite() && t2.is_infinite() {
                    return Err(QpError::Infeasible);
                }
                if t2.is_infinite() {
                    for (uj, rj) in self.u.iter_mut().zip(r.iter()) {
                        *uj -= t1 * rj;
                    }
                    up += t1;
                    self.drop_constraint(drop.expect("partial step without blocking constraint"));
                    continue;
                }
                let t = t1.min(t2);
                self.x.axpy(t, &z, 1.0);
                for (uj, rj) in self.u.iter_mut().zip(r.iter()) {
                    *uj -= t * rj;
                }
                up += t;
                if t2 <= t1 {
                    self.add_constraint(p, d, up);
                    break;
                }
                self.drop_constraint(drop.expect("partial step without blocking constraint"));
            }
        }
        Ok(self.finish(iterations))
    }

    /// Solves `R r = d[..q]`.
    fn back_substitute(&self, d: &DVector<f64>) -> Vec<f64> {
        let q = self.q();
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    fn rotate_j_columns(&mut self, a: usize, b: usize, c: f64, s: f64) {
        for i in 0..self.n {
            let (ja, jb) = (self.j[(i, a)], self.j[(i, b)]);
            self.j[(i, a)] = c * ja + s * jb;
            self.j[(i, b)] = -s * ja + c * jb;
        }
    }

    fn add_constraint(&mut self, p: usize, mut d: DVector<f64>, multiplier: f64) {
        let q = self.q();
        for col in (q + 1..self.n).rev() {
            let (a, b) = (d[col - 1], d[col]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[col - 1] = h;
            d[col] = 0.0;
            self.rotate_j_columns(col - 1, col, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(p);
        self.u.push(multiplier);
        self.is_active[p] = true;
    }

    fn drop_constraint(&mut self, pos: usize) {
        let q = self.q();
        let k = self.active.remove(pos);
        self.u.remove(pos);
        self.is_active[k] = false;
        for col in pos..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..self.n {
            self.r[(i, q - 1)] = 0.0;
        }
        // Restore triangularity: column j now has a sub-diagonal entry.
        for jcol in pos..q - 1 {
            let (a, b) = (self.r[(jcol, jcol)], self.r[(jcol + 1, jcol)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in jcol..q - 1 {
                let (ra, rb) = (self.r[(jcol, col)], self.r[(jcol + 1, col)]);
                self.r[(jcol, col)] = c * ra + s * rb;
                self.r[(jcol + 1, col)] = -s * ra + c * rb;
            }
            self.r[(jcol + 1, jcol)] = 0.0;
            self.rotate_j_columns(jcol, jcol + 1, c, s);
        }
    }

    fn finish(mut self, iterations: usize) -> QpSolution {
        let n = self.n;
        let m = self.qp.constraints.nrows();
        let mut cm = DVector::zeros(m);
        let mut lm = DVector::zeros(n);
        let mut um = DVector::zeros(n);
        for (&k, &u) in self.active.iter().zip(&self.u) {
            match self.rows[k] {
                Row::General(i) => cm[i] = u,
                Row::Lower(i) => lm[i] = u,
                Row::Upper(i) => um[i] = u,
            }
        }
        for i in 0..n {
            self.x[i] = self.x[i].clamp(self.qp.lower[i], self.qp.upper[i]);
        }
        for &k in &self.active {
            match self.rows[k] {
                Row::Lower(i) => self.x[i] = self.qp.lower[i],
                Row::Upper(i) => self.x[i] = self.qp.upper[i],
                Row::General(_) => {}
            }
        }
        QpSolution {
            objective: self.qp.objective(&self.x),
            x: self.x,
            constraint_multipliers: cm,
            lower_multipliers: lm,
            upper_multipliers: um,
            iterations,
        }
    }
}
