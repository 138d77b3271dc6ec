//! Projection of a polyline onto bounded speed and acceleration.
//!
//! Minimizes `1/2 |Q - P|^2` subject to `|Q_(a+1) - Q_a| <= K1` and
//! `|2 Q_a - Q_(a-1) - Q_(a+1)| <= K2` by ADMM on the splitting
//! `u = D1 Q`, `w = D2 Q`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::PointSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicConstraints {
    /// Largest segment length; `inf` disables.
    pub k1: f64,
    /// Largest second difference; `inf` disables.
    pub k2: f64,
}

impl KinematicConstraints {
    pub fn new(k1: f64, k2: f64) -> Result<Self, AdmmError> {
        if !(k1 > 0.0) || !(k2 > 0.0) {
            return Err(AdmmError::InvalidBounds { k1, k2 });
        }
        Ok(Self { k1, k2 })
    }

    /// Largest violation of either family.
    pub fn violation<T: Scalar>(&self, q: &PointSet<T>) -> f64 {
        let (speed, accel) = differences(q);
        let v1 = speed.iter().map(|&s| s - self.k1).fold(0.0, f64::max);
        let v2 = accel.iter().map(|&a| a - self.k2).fold(0.0, f64::max);
        v1.max(v2)
    }

    pub fn is_satisfied<T: Scalar>(&self, q: &PointSet<T>) -> bool {
        let (speed, accel) = differences(q);
        speed.iter().all(|&s| s <= self.k1) && accel.iter().all(|&a| a <= self.k2)
    }
}

/// Norms of first and second differences.
fn differences<T: Scalar>(q: &PointSet<T>) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let d = q.dim();
    let speed = (0..n.saturating_sub(1))
        .map(|a| (0..d).map(|k| (q.point(a + 1)[k] - q.point(a)[k]).as_f64().powi(2)).sum::<f64>().sqrt())
        .collect();
    let accel = (1..n.saturating_sub(1))
        .map(|a| {
            (0..d)
                .map(|k| (q.point(a)[k] * T::lit(2.0) - q.point(a - 1)[k] - q.point(a + 1)[k]).as_f64().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    (speed, accel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub penalty: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { penalty: 1.0, tolerance: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome<T> {
    pub vertices: PointSet<T>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest constraint violation of `vertices`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("kinematic bounds must be positive (k1 = {k1}, k2 = {k2})")]
    InvalidBounds { k1: f64, k2: f64 },
    #[error("invalid ADMM settings: {0}")]
    InvalidConfig(String),
    #[error(
        "ADMM stopped after {} iterations (primal {:e}, dual {:e})",
        best.iterations,
        best.primal_residual,
        best.dual_residual
    )]
    MaxIterations { best: Box<AdmmOutcome<f64>> },
}

/// Cholesky factor of a symmetric positive definite matrix with two
/// off-diagonal bands.
struct Banded {
    // l[i] = (L_ii, L_i,i-1, L_i,i-2)
    l: Vec<[f64; 3]>,
}

impl Banded {
    /// `a[i] = (A_ii, A_i,i-1, A_i,i-2)`.
    fn factor(a: &[[f64; 3]]) -> Self {
        let n = a.len();
        let mut l = vec![[0.0; 3]; n];
        for i in 0..n {
            let l2 = if i >= 2 { a[i][2] / l[i - 2][0] } else { 0.0 };
            let l1 = if i >= 1 {
                let cross = if i >= 2 { l2 * l[i - 1][1] } else { 0.0 };
                (a[i][1] - cross) / l[i - 1][0]
            } else {
                0.0
            };
            let d = a[i][0] - l1 * l1 - l2 * l2;
            l[i] = [d.sqrt(), l1, l2];
        }
        Self { l }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut v = b[i];
            if i >= 1 {
                v -= self.l[i][1] * b[i - 1];
            }
            if i >= 2 {
                v -= self.l[i][2] * b[i - 2];
            }
            b[i] = v / self.l[i][0];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= self.l[i + 1][1] * b[i + 1];
            }
            if i + 2 < n {
                v -= self.l[i + 2][2] * b[i + 2];
            }
            b[i] = v / self.l[i][0];
        }
    }
}

fn project_ball(v: &mut [f64], radius: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        for x in v {
            *x *= s;
        }
    }
}

/// Row-major `m x d` blocks of difference vectors.
struct Family {
    radius: f64,
    rows: usize,
    z: Vec<f64>,
    u: Vec<f64>,
}

fn d1(q: &[f64], n: usize, d: usize, out: &mut [f64]) {
    for a in 0..n - 1 {
        for k in 0..d {
            out[a * d + k] = q[(a + 1) * d + k] - q[a * d + k];
        }
    }
}

fn d1t_add(v: &[f64], n: usize, d: usize, scale: f64, out: &mut [f64]) {
    for a in 0..n - 1 {
        for k in 0..d {
            out[(a + 1) * d + k] += scale * v[a * d + k];
            out[a * d + k] -= scale * v[a * d + k];
        }
    }
}

fn d2(q: &[f64], n: usize, d: usize, out: &mut [f64]) {
    for a in 1..n - 1 {
        for k in 0..d {
            out[(a - 1) * d + k] = 2.0 * q[a * d + k] - q[(a - 1) * d + k] - q[(a + 1) * d + k];
        }
    }
}

fn d2t_add(v: &[f64], n: usize, d: usize, scale: f64, out: &mut [f64]) {
    for a in 1..n - 1 {
        for k in 0..d {
            let x = scale * v[(a - 1) * d + k];
            out[a * d + k] += 2.0 * x;
            out[(a - 1) * d + k] -= x;
            out[(a + 1) * d + k] -= x;
        }
    }
}

/// Nearest polyline (in the sum of squared vertex distances) meeting the
/// kinematic bounds. Feasible inputs are returned unchanged.
pub fn project_kinematic<T: Scalar>(
    vertices: &PointSet<T>,
    bounds: &KinematicConstraints,
    config: &AdmmConfig,
) -> Result<AdmmOutcome<T>, AdmmError> {
    if !(bounds.k1 > 0.0) || !(bounds.k2 > 0.0) {
        return Err(AdmmError::InvalidBounds { k1: bounds.k1, k2: bounds.k2 });
    }
    if !(config.penalty > 0.0) || !(config.tolerance > 0.0) || config.max_iter == 0 {
        return Err(AdmmError::InvalidConfig(format!("{config:?}")));
    }
    if bounds.is_satisfied(vertices) {
        return Ok(AdmmOutcome {
            vertices: vertices.clone(),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            violation: 0.0,
        });
    }
    let n = vertices.len();
    let d = vertices.dim();
    let p: Vec<f64> = vertices.coords().iter().map(|v| v.as_f64()).collect();
    let r = config.penalty;

    let use1 = bounds.k1.is_finite() && n >= 2;
    let use2 = bounds.k2.is_finite() && n >= 3;
    let mut fams: Vec<(bool, Family)> = Vec::new();
    if use1 {
        fams.push((
            true,
            Family { radius: bounds.k1, rows: n - 1, z: vec![0.0; (n - 1) * d], u: vec![0.0; (n - 1) * d] },
        ));
    }
    if use2 {
        fams.push((
            false,
            Family { radius: bounds.k2, rows: n - 2, z: vec![0.0; (n - 2) * d], u: vec![0.0; (n - 2) * d] },
        ));
    }

    // I + r (D1^T D1 + D2^T D2), banded by vertex index
    let mut a = vec![[1.0, 0.0, 0.0]; n];
    if use1 {
        for i in 0..n - 1 {
            a[i][0] += r;
            a[i + 1][0] += r;
            a[i + 1][1] -= r;
        }
    }
    if use2 {
        for c in 1..n - 1 {
            // row with coefficients (-1, 2, -1) on (c-1, c, c+1)
            let idx = [c - 1, c, c + 1];
            let coef = [-1.0, 2.0, -1.0];
            for (x, &i) in idx.iter().enumerate() {
                for (y, &j) in idx.iter().enumerate() {
                    if j <= i && i - j <= 2 {
                        a[i][i - j] += r * coef[x] * coef[y];
                    }
                }
            }
        }
    }
    let chol = Banded::factor(&a);

    // start from P with consistent splitting variables
    let mut q = p.clone();
    for (first, f) in &mut fams {
        if *first {
            d1(&q, n, d, &mut f.z);
        } else {
            d2(&q, n, d, &mut f.z);
        }
        for row in f.z.chunks_mut(d) {
            project_ball(row, f.radius);
        }
    }

    let mut rhs = vec![0.0; n * d];
    let mut col = vec![0.0; n];
    let mut dq: Vec<Vec<f64>> = fams.iter().map(|(_, f)| vec![0.0; f.rows * d]).collect();
    let mut dz = vec![0.0; n * d];
    let mut best: Option<AdmmOutcome<f64>> = None;
    for it in 1..=config.max_iter {
        rhs.copy_from_slice(&p);
        for (first, f) in &fams {
            let diff: Vec<f64> = f.z.iter().zip(&f.u).map(|(z, u)| z - u).collect();
            if *first {
                d1t_add(&diff, n, d, r, &mut rhs);
            } else {
                d2t_add(&diff, n, d, r, &mut rhs);
            }
        }
        for k in 0..d {
            for i in 0..n {
                col[i] = rhs[i * d + k];
            }
            chol.solve(&mut col);
            for i in 0..n {
                q[i * d + k] = col[i];
            }
        }
        let mut primal = 0.0;
        dz.iter_mut().for_each(|v| *v = 0.0);
        for ((first, f), buf) in fams.iter_mut().zip(dq.iter_mut()) {
            if *first {
                d1(&q, n, d, buf);
            } else {
                d2(&q, n, d, buf);
            }
            let old = f.z.clone();
            for (z, (b, u)) in f.z.chunks_mut(d).zip(buf.chunks(d).zip(f.u.chunks(d))) {
                for k in 0..d {
                    z[k] = b[k] + u[k];
                }
                project_ball(z, f.radius);
            }
            for i in 0..f.u.len() {
                let res = buf[i] - f.z[i];
                f.u[i] += res;
                primal += res * res;
            }
            let change: Vec<f64> = f.z.iter().zip(&old).map(|(a, b)| a - b).collect();
            if *first {
                d1t_add(&change, n, d, r, &mut dz);
            } else {
                d2t_add(&change, n, d, r, &mut dz);
            }
        }
        let primal = primal.sqrt();
        let dual = dz.iter().map(|v| v * v).sum::<f64>().sqrt();
        if primal <= config.tolerance && dual <= config.tolerance {
            let out = PointSet::new(d, q.iter().map(|&v| T::lit(v)).collect()).expect("shape preserved");
            let violation = bounds.violation(&out);
            return Ok(AdmmOutcome {
                vertices: out,
                iterations: it,
                primal_residual: primal,
                dual_residual: dual,
                violation,
            });
        }
        if best.as_ref().is_none_or(|b| primal.max(dual) < b.primal_residual.max(b.dual_residual)) {
            let pts = PointSet::new(d, q.clone()).expect("shape preserved");
            let violation = bounds.violation(&pts);
            best = Some(AdmmOutcome {
                vertices: pts,
                iterations: it,
                primal_residual: primal,
                dual_residual: dual,
                violation,
            });
        }
    }
    let mut best = best.expect("at least one iteration");
    best.iterations = config.max_iter;
    Err(AdmmError::MaxIterations { best: Box::new(best) })
}
