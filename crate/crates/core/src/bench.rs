//! Benchmark harness: solver comparison on seeded random instances and
//! thread scaling of the transport evaluation.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::uniform_vertices;
use crate::measures::{AtomicMeasure, DualPotential, MeasureError, PointSet, PolylineMeasure};
use crate::power_diagram::{build_oracle, OracleMode};
use crate::solvers::{solve, Branch, Method, SolveError, SolveStatus, SolverConfig};
use crate::transport::{evaluate, TransportError};

/// `n` uniform atoms with equal masses and a polyline of `p` segments with
/// uniform vertices in the unit square, densities proportional to length.
pub fn random_instance(
    n: usize,
    p: usize,
    seed: u64,
) -> Result<(AtomicMeasure<f64>, PolylineMeasure<f64>), MeasureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..2 * n).map(|_| rng.gen::<f64>()).collect();
    let atoms = AtomicMeasure::uniform(PointSet::new(2, coords)?)?;
    let vertices = uniform_vertices(p, &[0.0, 0.0], &[1.0, 1.0], rng.gen());
    let curve = PolylineMeasure::from_vertices(vertices, false)?;
    Ok((atoms, curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
    pub newton_steps: usize,
    pub seconds: f64,
    pub ms_per_iteration: f64,
    pub cost: f64,
    pub grad_norm: f64,
    pub status: SolveStatus,
}

/// Runs every method from `phi = 0` for at most `iterations` outer steps.
pub fn compare_solvers(
    n: usize,
    p: usize,
    seeds: &[u64],
    methods: &[Method],
    iterations: usize,
    grad_tol: f64,
) -> Result<Vec<SolverRow>, SolveError> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let (atoms, curve) = random_instance(n, p, seed).map_err(TransportError::from)?;
        for &method in methods {
            let config = SolverConfig { grad_tol, outer_max: iterations, ..SolverConfig::with_method(method) };
            let start = Instant::now();
            let sol = solve(&atoms, &curve, &DualPotential::zeros(n), &config)?;
            let seconds = start.elapsed().as_secs_f64();
            let done = sol.history.len().saturating_sub(1);
            rows.push(SolverRow {
                method,
                seed,
                n,
                p,
                iterations: done,
                newton_steps: sol.history.records.iter().filter(|r| r.branch == Branch::Newton).count(),
                seconds,
                ms_per_iteration: 1e3 * seconds / done.max(1) as f64,
                cost: sol.cost,
                grad_norm: sol.grad_norm(),
                status: sol.status,
            });
        }
    }
    Ok(rows)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Gradient => "gradient",
        Method::Bb => "bb",
        Method::Nesterov => "nesterov",
        Method::Lbfgs => "lbfgs",
        Method::Hybrid => "hybrid",
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration_limit",
        SolveStatus::Stalled => "stalled",
    }
}

pub fn write_solver_csv<W: Write>(rows: &[SolverRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "seed",
        "n",
        "p",
        "iterations",
        "newton_steps",
        "seconds",
        "ms_per_iteration",
        "cost",
        "grad_norm",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            method_name(r.method).to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.iterations.to_string(),
            r.newton_steps.to_string(),
            format!("{:.6}", r.seconds),
            format!("{:.4}", r.ms_per_iteration),
            format!("{:e}", r.cost),
            format!("{:e}", r.grad_norm),
            status_name(r.status).to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub threads: usize,
    /// Fastest of the repeated evaluations.
    pub seconds: f64,
    pub speedup: f64,
    /// Cost and gradient equal bit for bit to the first thread count.
    pub identical: bool,
}

/// Times `evaluate` on dedicated pools of each size.
pub fn scaling(
    atoms: &AtomicMeasure<f64>,
    curve: &PolylineMeasure<f64>,
    phi: &DualPotential<f64>,
    threads: &[usize],
    repeats: usize,
) -> Result<Vec<ScalingRow>, TransportError> {
    let oracle = build_oracle(atoms, phi, OracleMode::Adjacency);
    let mut reference: Option<(u64, Vec<u64>)> = None;
    let mut base = None;
    let mut rows = Vec::new();
    for &t in threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().expect("thread pool construction");
        let mut best = f64::INFINITY;
        let mut bits = None;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let e = pool.install(|| evaluate(atoms, curve, phi, &oracle))?;
            best = best.min(start.elapsed().as_secs_f64());
            bits = Some((e.cost.to_bits(), e.gradient.iter().map(|g| g.to_bits()).collect::<Vec<_>>()));
        }
        let bits = bits.expect("at least one repeat");
        let identical = match &reference {
            Some(r) => *r == bits,
            None => {
                reference = Some(bits);
                true
            }
        };
        let base = *base.get_or_insert(best);
        rows.push(ScalingRow { threads: t, seconds: best, speedup: base / best, identical });
    }
    Ok(rows)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threads", "seconds", "speedup", "identical"])?;
    for r in rows {
        w.write_record([
            r.threads.to_string(),
            format!("{:.6}", r.seconds),
            format!("{:.3}", r.speedup),
            r.identical.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_seeded() {
        let a = random_instance(20, 5, 1).unwrap();
        let b = random_instance(20, 5, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_instance(20, 5, 2).unwrap());
    }

    #[test]
    fn scaling_is_bit_identical() {
        let (atoms, curve) = random_instance(300, 200, 4).unwrap();
        let rows = scaling(&atoms, &curve, &DualPotential::zeros(300), &[1, 2, 4], 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.identical));
        assert_eq!(rows[0].speedup, 1.0);
    }

    #[test]
    fn solver_table_has_one_row_per_method() {
        let rows = compare_solvers(30, 6, &[0], &[Method::Lbfgs, Method::Hybrid], 20, 1e-9).unwrap();
        assert_eq!(rows.len(), 2);
        let mut buf = Vec::new();
        write_solver_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("hybrid,0,30,6,"));
    }
}
