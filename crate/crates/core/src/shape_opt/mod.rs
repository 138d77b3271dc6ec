//! Fitting a polyline to an atomic measure by descent on the transport cost.
//!
//! `G(P) = max_phi g(phi, P)` is differentiated through the optimal potential
//! (its `phi`-derivative vanishes there) and through the length-normalized
//! segment densities.

mod admm;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{density_from_lengths, AtomicMeasure, DualPotential, MeasureError, PointSet, PolylineMeasure};
use crate::scalar::{dist2, Scalar};
use crate::solvers::{solve, SolveError, SolveStatus, SolverConfig, TransportSolution};
use crate::transport::{segment_moment2, SegmentTrace};

pub use admm::{project_kinematic, AdmmConfig, AdmmError, AdmmOutcome, KinematicConstraints};

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("dual potential is not optimal: gradient norm {grad_norm:e} exceeds {limit:e}")]
    StaleDual { grad_norm: f64, limit: f64 },
    #[error("inner transport solve failed at outer iteration {iteration}: {source}")]
    InnerSolveFailed {
        iteration: usize,
        /// Last polyline with a successful solve.
        last: Box<PolylineMeasure<f64>>,
        source: SolveError,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
}

/// Vertex gradients of the transport cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeGradient<T> {
    /// Derivative with the segment densities held fixed.
    pub partial: PointSet<T>,
    /// Derivative including the dependence of the densities on the lengths.
    pub total: PointSet<T>,
}

impl<T: Scalar> ShapeGradient<T> {
    pub fn max_norm(&self) -> T {
        self.total.coords().iter().fold(T::zero(), |a, &v| a.max(v.abs()))
    }
}

/// Per-segment `(int (|l - x_i|^2 - phi_i) dt, int x_i dt, int t x_i dt)`
/// summed over the trace.
struct SegmentMoments<T> {
    cost: T,
    x: Vec<T>,
    tx: Vec<T>,
}

fn moments<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    trace: &SegmentTrace<T>,
    a: usize,
) -> SegmentMoments<T> {
    let d = curve.dim();
    let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
    let mut m = SegmentMoments { cost: T::zero(), x: vec![T::zero(); d], tx: vec![T::zero(); d] };
    let half = T::lit(0.5);
    for e in trace.segment(a) {
        let x = atoms.position(e.cell);
        let len = e.duration();
        let t_moment = half * (e.t_end * e.t_end - e.t_start * e.t_start);
        m.cost += segment_moment2(p, q, x, e.t_start, e.t_end) - phi[e.cell] * len;
        for k in 0..d {
            m.x[k] += len * x[k];
            m.tx[k] += t_moment * x[k];
        }
    }
    m
}

/// Gradient of `G` with respect to the vertices at an optimal potential.
///
/// For vertex `v`, segment `v - 1` contributes
/// `rho_(v-1) (P_v + (P_(v-1) - P_v)/3 - 2 sum int t x_i dt)` and segment `v`
/// contributes `rho_v (P_v + (P_(v+1) - P_v)/3 - 2 sum int (1 - t) x_i dt)`.
/// With densities proportional to lengths, the total adds
/// `sum_b (c_b - c_mean) / S dL_b/dP`, where `c_b` is the unweighted cost of
/// segment `b`, `c_mean = sum rho_b c_b` and `S` the total active length.
pub fn shape_gradient<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    trace: &SegmentTrace<T>,
) -> ShapeGradient<T> {
    let d = curve.dim();
    let nv = curve.segment_count() + 1;
    let third = T::lit(1.0 / 3.0);
    let two = T::lit(2.0);
    let mut partial = vec![T::zero(); nv * d];
    let mut costs = vec![T::zero(); nv - 1];
    for a in 0..nv - 1 {
        let m = moments(atoms, curve, phi, trace, a);
        costs[a] = m.cost;
        let rho = curve.density(a);
        if rho == T::zero() {
            continue;
        }
        let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
        for k in 0..d {
            let start = p[k] + (q[k] - p[k]) * third - two * (m.x[k] - m.tx[k]);
            let end = q[k] + (p[k] - q[k]) * third - two * m.tx[k];
            partial[a * d + k] += rho * start;
            partial[(a + 1) * d + k] += rho * end;
        }
    }

    let mut total = partial.clone();
    let active: Vec<usize> = (0..nv - 1).filter(|&a| curve.is_active(a)).collect();
    let lengths: Vec<T> = active.iter().map(|&a| curve.segment_length(a)).collect();
    let s = lengths.iter().fold(T::zero(), |acc, &l| acc + l);
    if s > T::zero() {
        let mean = active.iter().zip(&lengths).fold(T::zero(), |acc, (&a, &l)| acc + l / s * costs[a]);
        for (&a, &len) in active.iter().zip(&lengths) {
            if len == T::zero() {
                continue;
            }
            let w = (costs[a] - mean) / s;
            let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
            for k in 0..d {
                let u = (q[k] - p[k]) / len;
                total[(a + 1) * d + k] += w * u;
                total[a * d + k] -= w * u;
            }
        }
    }
    ShapeGradient {
        partial: PointSet::new(d, partial).expect("sized by construction"),
        total: PointSet::new(d, total).expect("sized by construction"),
    }
}

/// Shape gradient from a solver result, refusing potentials whose gradient
/// norm is more than ten times `grad_tol`.
pub fn checked_shape_gradient<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    solution: &TransportSolution<T>,
    grad_tol: f64,
) -> Result<ShapeGradient<T>, ShapeError> {
    let g = solution.grad_norm().as_f64();
    if !(g <= 10.0 * grad_tol) {
        return Err(ShapeError::StaleDual { grad_norm: g, limit: 10.0 * grad_tol });
    }
    Ok(shape_gradient(atoms, curve, &solution.phi, &solution.trace))
}

/// Segment midpoint `c` and the mean atom position `x_bar` seen by the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBarycenter<T> {
    pub midpoint: Vec<T>,
    pub seen: Vec<T>,
}

pub fn barycenter_diagnostic<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    trace: &SegmentTrace<T>,
) -> Vec<SegmentBarycenter<T>> {
    let half = T::lit(0.5);
    (0..curve.segment_count())
        .map(|a| {
            let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
            SegmentBarycenter {
                midpoint: p.iter().zip(q).map(|(&x, &y)| (x + y) * half).collect(),
                seen: moments(atoms, curve, phi, trace, a).x,
            }
        })
        .collect()
}

/// Diagonal metric `(rho_(v-1) + rho_v) / 2`, missing neighbors counting as 0.
pub fn vertex_metric<T: Scalar>(curve: &PolylineMeasure<T>) -> Vec<T> {
    let p = curve.segment_count();
    let half = T::lit(0.5);
    (0..=p)
        .map(|v| {
            let left = if v > 0 { curve.density(v - 1) } else { T::zero() };
            let right = if v < p { curve.density(v) } else { T::zero() };
            (left + right) * half
        })
        .collect()
}

/// Smallest metric entry for which a vertex is moved.
pub const METRIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    pub max_iter: usize,
    /// Stop once the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Fraction of the metric step taken.
    pub step_scale: f64,
    /// Halve the step while the transport cost does not decrease.
    pub backtracking: bool,
    pub max_halvings: usize,
    pub constraints: Option<KinematicConstraints>,
    pub admm: AdmmConfig,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-3,
            step_scale: 0.5,
            backtracking: false,
            max_halvings: 8,
            constraints: None,
            admm: AdmmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_inf: f64,
    pub inner_iterations: usize,
    pub inner_status: SolveStatus,
    pub step_scale: f64,
    pub constraint_violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeHistory {
    pub records: Vec<ShapeRecord>,
}

impl ShapeHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "cost",
            "grad_inf",
            "inner_iterations",
            "inner_status",
            "step_scale",
            "constraint_violation",
        ])?;
        for r in &self.records {
            let status = match r.inner_status {
                SolveStatus::Converged => "converged",
                SolveStatus::IterationLimit => "iteration_limit",
                SolveStatus::Stalled => "stalled",
            };
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.cost),
                format!("{:e}", r.grad_inf),
                r.inner_iterations.to_string(),
                status.to_string(),
                format!("{}", r.step_scale),
                format!("{:e}", r.constraint_violation),
            ])?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeStatus {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct ShapeOutcome<T> {
    pub curve: PolylineMeasure<T>,
    pub solution: TransportSolution<T>,
    pub gradient: ShapeGradient<T>,
    pub history: ShapeHistory,
    pub status: ShapeStatus,
}

/// State handed to the observer after every outer iteration.
pub struct ShapeIterate<'a, T> {
    pub iteration: usize,
    pub curve: &'a PolylineMeasure<T>,
    pub record: &'a ShapeRecord,
}

fn inner_iterations<T>(s: &TransportSolution<T>) -> usize {
    s.history.records.len().saturating_sub(1)
}

fn renormalized<T: Scalar>(
    curve: &PolylineMeasure<T>,
    vertices: PointSet<T>,
) -> Result<PolylineMeasure<T>, MeasureError> {
    let rho = density_from_lengths(&vertices, curve.disjoint_mode())?;
    PolylineMeasure::new(vertices, rho, curve.disjoint_mode())
}

fn to_f64<T: Scalar>(c: &PolylineMeasure<T>) -> PolylineMeasure<f64> {
    let v = PointSet::new(c.dim(), c.vertices().coords().iter().map(|x| x.as_f64()).collect()).expect("same shape");
    PolylineMeasure::new(v, c.densities().iter().map(|x| x.as_f64()).collect(), c.disjoint_mode())
        .expect("valid measure stays valid")
}

/// Metric-preconditioned descent on the vertices.
///
/// Each iteration moves `P <- P - step_scale * Sigma^-1 grad_P G`, optionally
/// projects onto the kinematic set, renormalizes the densities by length and
/// re-solves the transport warm-started from the previous potential.
pub fn optimize_polyline<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    initial: &PolylineMeasure<T>,
    solver: &SolverConfig,
    config: &ShapeConfig,
) -> Result<ShapeOutcome<T>, ShapeError> {
    optimize_polyline_with(atoms, initial, solver, config, |_| {})
}

pub fn optimize_polyline_with<T: Scalar, F>(
    atoms: &AtomicMeasure<T>,
    initial: &PolylineMeasure<T>,
    solver: &SolverConfig,
    config: &ShapeConfig,
    mut observer: F,
) -> Result<ShapeOutcome<T>, ShapeError>
where
    F: FnMut(&ShapeIterate<'_, T>),
{
    let violation = |c: &PolylineMeasure<T>| config.constraints.map_or(0.0, |k| k.violation(c.vertices()));
    // ADMM running out of iterations still yields its best iterate
    let project = |verts: PointSet<T>| -> Result<PointSet<T>, ShapeError> {
        let Some(k) = config.constraints else { return Ok(verts) };
        match project_kinematic(&verts, &k, &config.admm) {
            Ok(o) => Ok(o.vertices),
            Err(AdmmError::MaxIterations { best }) => {
                Ok(PointSet::new(verts.dim(), best.vertices.coords().iter().map(|&x| T::lit(x)).collect())?)
            }
            Err(e) => Err(e.into()),
        }
    };
    let mut curve = renormalized(initial, project(initial.vertices().clone())?)?;
    let mut sol = solve(atoms, &curve, &DualPotential::zeros(atoms.len()), solver)
        .map_err(|source| ShapeError::InnerSolveFailed { iteration: 0, last: Box::new(to_f64(initial)), source })?;
    let mut grad = shape_gradient(atoms, &curve, &sol.phi, &sol.trace);
    let mut history = ShapeHistory::default();
    let rec = ShapeRecord {
        iteration: 0,
        cost: sol.cost.as_f64(),
        grad_inf: grad.max_norm().as_f64(),
        inner_iterations: inner_iterations(&sol),
        inner_status: sol.status,
        step_scale: 0.0,
        constraint_violation: violation(&curve),
    };
    history.records.push(rec);
    observer(&ShapeIterate { iteration: 0, curve: &curve, record: &rec });

    let d = curve.dim();
    let mut status = ShapeStatus::IterationLimit;
    for it in 1..=config.max_iter {
        if grad.max_norm().as_f64() < config.grad_tol {
            status = ShapeStatus::Converged;
            break;
        }
        let metric = vertex_metric(&curve);
        let mut scale = config.step_scale;
        let mut halvings = 0;
        let (next_curve, next_sol) =
            loop {
                let mut coords = curve.vertices().coords().to_vec();
                for (v, &m) in metric.iter().enumerate() {
                    if m.as_f64() < METRIC_FLOOR {
                        continue;
                    }
                    for k in 0..d {
                        coords[v * d + k] -= T::lit(scale) * grad.total.coords()[v * d + k] / m;
                    }
                }
                let cand = renormalized(&curve, project(PointSet::new(d, coords)?)?)?;
                let cand_sol = solve(atoms, &cand, &sol.phi, solver).map_err(|source| {
                    ShapeError::InnerSolveFailed { iteration: it, last: Box::new(to_f64(&curve)), source }
                })?;
                if config.backtracking && cand_sol.cost >= sol.cost && halvings < config.max_halvings {
                    scale *= 0.5;
                    halvings += 1;
                    continue;
                }
                break (cand, cand_sol);
            };
        curve = next_curve;
        sol = next_sol;
        grad = shape_gradient(atoms, &curve, &sol.phi, &sol.trace);
        let rec = ShapeRecord {
            iteration: it,
            cost: sol.cost.as_f64(),
            grad_inf: grad.max_norm().as_f64(),
            inner_iterations: inner_iterations(&sol),
            inner_status: sol.status,
            step_scale: scale,
            constraint_violation: violation(&curve),
        };
        history.records.push(rec);
        observer(&ShapeIterate { iteration: it, curve: &curve, record: &rec });
        if it == config.max_iter && rec.grad_inf < config.grad_tol {
            status = ShapeStatus::Converged;
        }
    }
    Ok(ShapeOutcome { curve, solution: sol, gradient: grad, history, status })
}

/// Largest distance between corresponding vertices.
pub fn vertex_distance<T: Scalar>(a: &PointSet<T>, b: &PointSet<T>) -> T {
    (0..a.len()).fold(T::zero(), |m, i| m.max(dist2(a.point(i), b.point(i)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_diagram::{build_oracle, OracleMode};
    use crate::transport::evaluate;

    fn setup(sites: &[[f64; 2]], verts: &[[f64; 2]]) -> (AtomicMeasure<f64>, PolylineMeasure<f64>) {
        (
            AtomicMeasure::uniform(PointSet::from_rows(sites).unwrap()).unwrap(),
            PolylineMeasure::from_vertices(PointSet::from_rows(verts).unwrap(), false).unwrap(),
        )
    }

    fn at_zero(mu: &AtomicMeasure<f64>, nu: &PolylineMeasure<f64>) -> (DualPotential<f64>, SegmentTrace<f64>) {
        let phi = DualPotential::zeros(mu.len());
        let o = build_oracle(mu, &phi, OracleMode::Adjacency);
        let e = evaluate(mu, nu, &phi, &o).unwrap();
        (phi, e.trace)
    }

    #[test]
    fn single_segment_single_dirac() {
        let (mu, nu) = setup(&[[0.0, 0.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        let (phi, tr) = at_zero(&mu, &nu);
        let g = shape_gradient(&mu, &nu, &phi, &tr);
        assert!((g.partial.point(0)[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.partial.point(0)[1], 0.0);
        assert_eq!(g.partial, g.total);
        // far end: 2 int t l(t) dt = 2/3
        assert!((g.partial.point(1)[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mirror_symmetric_gradients() {
        let (mu, nu) = setup(&[[0.2, 0.3], [0.8, 0.3], [0.5, -0.4]], &[[0.0, 0.0], [1.0, 0.0]]);
        let (phi, tr) = at_zero(&mu, &nu);
        let g = shape_gradient(&mu, &nu, &phi, &tr);
        assert!((g.total.point(0)[0] + g.total.point(1)[0]).abs() < 1e-14);
        assert!((g.total.point(0)[1] - g.total.point(1)[1]).abs() < 1e-14);
    }

    #[test]
    fn barycenter_of_single_cell() {
        let (mu, nu) = setup(&[[0.5, 1.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        let (phi, tr) = at_zero(&mu, &nu);
        let b = &barycenter_diagnostic(&mu, &nu, &phi, &tr)[0];
        assert_eq!(b.seen, vec![0.5, 1.0]);
        assert_eq!(b.midpoint, vec![0.5, 0.0]);
        let g = shape_gradient(&mu, &nu, &phi, &tr);
        for k in 0..2 {
            let avg = 0.5 * (g.partial.point(0)[k] + g.partial.point(1)[k]);
            assert!((avg - (b.midpoint[k] - b.seen[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn barycenter_of_split_segment() {
        let (mu, nu) = setup(&[[0.0, 0.0], [1.0, 0.0]], &[[0.0, 0.0], [1.0, 0.0]]);
        let (phi, tr) = at_zero(&mu, &nu);
        let b = &barycenter_diagnostic(&mu, &nu, &phi, &tr)[0];
        assert!((b.seen[0] - 0.5).abs() < 1e-15 && b.seen[1] == 0.0);
        let g = shape_gradient(&mu, &nu, &phi, &tr);
        // centered on what it sees: no net force
        assert!((g.partial.point(0)[0] + g.partial.point(1)[0]).abs() < 1e-12);
    }

    #[test]
    fn metric_at_endpoints() {
        let verts = PointSet::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [4.0, 0.0]]).unwrap();
        let nu = PolylineMeasure::new(verts, vec![0.25, 0.5, 0.25], false).unwrap();
        assert_eq!(vertex_metric(&nu), vec![0.125, 0.375, 0.375, 0.125]);
    }

    #[test]
    fn disjoint_chain_term_skips_bridges() {
        let sites = [[0.1, 0.5], [0.9, 0.4], [0.5, -0.2]];
        let mu = AtomicMeasure::uniform(PointSet::from_rows(&sites).unwrap()).unwrap();
        let verts = PointSet::from_rows(&[[0.0, 0.0], [0.3, 0.1], [0.6, 0.0], [1.0, 0.2]]).unwrap();
        let rho = density_from_lengths(&verts, true).unwrap();
        let nu = PolylineMeasure::new(verts, rho, true).unwrap();
        let (phi, tr) = at_zero(&mu, &nu);
        let g = shape_gradient(&mu, &nu, &phi, &tr);
        // the bridge carries no mass, so both of its chain terms vanish;
        // the total on each chain sums to the partial one
        for k in 0..2 {
            let dt = g.total.point(0)[k] + g.total.point(1)[k] - g.partial.point(0)[k] - g.partial.point(1)[k];
            let ds = g.total.point(2)[k] + g.total.point(3)[k] - g.partial.point(2)[k] - g.partial.point(3)[k];
            assert!(dt.abs() < 1e-14 && ds.abs() < 1e-14);
        }
    }

    #[test]
    fn stale_dual_is_rejected() {
        let (mu, nu) = setup(&[[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]], &[[-0.5, 0.1], [1.5, 0.0]]);
        let cfg = SolverConfig { outer_max: 1, grad_tol: 1e-12, ..SolverConfig::default() };
        let sol = solve(&mu, &nu, &DualPotential::zeros(3), &cfg).unwrap();
        assert!(matches!(checked_shape_gradient(&mu, &nu, &sol, 1e-12), Err(ShapeError::StaleDual { .. })));
    }

    #[test]
    fn segment_shrinks_toward_lone_dirac() {
        let (mu, nu) = setup(&[[0.0, 0.0]], &[[-1.0, 0.5], [1.0, 0.7]]);
        let cfg = ShapeConfig { max_iter: 50, grad_tol: 1e-14, ..ShapeConfig::default() };
        let out = optimize_polyline(&mu, &nu, &SolverConfig::default(), &cfg).unwrap();
        let costs: Vec<f64> = out.history.records.iter().map(|r| r.cost).collect();
        assert_eq!(costs.len(), 51);
        for w in costs.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}
