//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the tracer, the triangulation or the solvers of
//! the library; the oracles only read the input measures.

#![allow(dead_code, clippy::needless_range_loop)]

use curvling::{AtomicMeasure, DualPotential, PointSet, PolylineMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` atoms in the unit square with random positive masses.
pub fn random_atoms(rng: &mut ChaCha8Rng, n: usize) -> AtomicMeasure<f64> {
    let coords: Vec<f64> = (0..2 * n).map(|_| rng.gen()).collect();
    let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    AtomicMeasure::new(PointSet::new(2, coords).unwrap(), masses).unwrap().normalize().unwrap()
}

/// Polyline of `p` segments with vertices drawn in `[-0.1, 1.1]^2` and
/// random positive densities.
pub fn random_curve(rng: &mut ChaCha8Rng, p: usize) -> PolylineMeasure<f64> {
    let coords: Vec<f64> = (0..2 * (p + 1)).map(|_| rng.gen_range(-0.1..1.1)).collect();
    let rho: Vec<f64> = (0..p).map(|_| rng.gen_range(0.1..1.0)).collect();
    PolylineMeasure::new(PointSet::new(2, coords).unwrap(), rho, false).unwrap().normalize().unwrap()
}

pub fn random_phi(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DualPotential<f64> {
    DualPotential::new((0..n).map(|_| scale * rng.gen::<f64>()).collect()).unwrap()
}

fn power(atoms: &AtomicMeasure<f64>, phi: &[f64], i: usize, y: &[f64]) -> f64 {
    let x = atoms.position(i);
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - phi[i]
}

/// Site minimizing the power distance at `y`; smallest index on ties.
pub fn owner(atoms: &AtomicMeasure<f64>, phi: &[f64], y: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = power(atoms, phi, 0, y);
    for i in 1..atoms.len() {
        let v = power(atoms, phi, i, y);
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn point_at(p: &[f64], q: &[f64], t: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| (1.0 - t) * a + t * b).collect()
}

/// Cell sequence along one segment from brute-force ownership queries.
///
/// Cells meet a line in intervals, so every change of owner between two
/// samples is resolved exactly by bisection down to `1e-15` in `t`.
pub fn dense_trace(
    atoms: &AtomicMeasure<f64>,
    phi: &[f64],
    p: &[f64],
    q: &[f64],
    samples: usize,
) -> Vec<(usize, f64, f64)> {
    let own = |t: f64| owner(atoms, phi, &point_at(p, q, t));
    let mut cuts: Vec<(f64, usize)> = Vec::new();
    fn split(own: &dyn Fn(f64) -> usize, t0: f64, a: usize, t1: f64, b: usize, cuts: &mut Vec<(f64, usize)>) {
        if t1 - t0 < 1e-15 {
            cuts.push((0.5 * (t0 + t1), b));
            return;
        }
        let tm = 0.5 * (t0 + t1);
        let c = own(tm);
        if c != a {
            split(own, t0, a, tm, c, cuts);
        }
        if c != b {
            split(own, tm, c, t1, b, cuts);
        }
    }
    let mut prev_t = 0.0;
    let mut prev = own(0.0);
    let first = prev;
    for s in 1..=samples {
        let t = s as f64 / samples as f64;
        let c = own(t);
        if c != prev {
            split(&own, prev_t, prev, t, c, &mut cuts);
        }
        prev_t = t;
        prev = c;
    }
    let mut out = Vec::new();
    let mut cell = first;
    let mut start = 0.0;
    for (t, next) in cuts {
        out.push((cell, start, t));
        cell = next;
        start = t;
    }
    out.push((cell, start, 1.0));
    out
}

/// Drops intervals shorter than `min_len` and merges neighbours in the same cell.
pub fn clean(trace: &[(usize, f64, f64)], min_len: f64) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64)> = Vec::new();
    for &(c, a, b) in trace {
        if b - a <= min_len {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.0 == c => last.2 = b,
            Some(last) => {
                // Bridge the removed sliver so the intervals stay contiguous.
                last.2 = a;
                out.push((c, a, b));
            }
            None => out.push((c, 0.0, b)),
        }
    }
    if let Some(last) = out.last_mut() {
        last.2 = 1.0;
    }
    out
}

/// `int_a^b |(1-t) p + t q - x|^2 dt` in closed form.
pub fn moment2(p: &[f64], q: &[f64], x: &[f64], a: f64, b: f64) -> f64 {
    // |u + t v|^2 with u = p - x, v = q - p
    let (mut uu, mut uv, mut vv) = (0.0, 0.0, 0.0);
    for k in 0..x.len() {
        let u = p[k] - x[k];
        let v = q[k] - p[k];
        uu += u * u;
        uv += u * v;
        vv += v * v;
    }
    let f = |t: f64| uu * t + uv * t * t + vv * t * t * t / 3.0;
    f(b) - f(a)
}

/// Dual functional from dense traces: cost and `m_i - nu(Lag_i)`.
pub fn dense_cost(atoms: &AtomicMeasure<f64>, curve: &PolylineMeasure<f64>, phi: &[f64]) -> (f64, Vec<f64>) {
    let n = atoms.len();
    let mut nu = vec![0.0; n];
    let mut cost = 0.0;
    for a in 0..curve.segment_count() {
        let rho = curve.density(a);
        if rho == 0.0 {
            continue;
        }
        let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
        for (i, t0, t1) in dense_trace(atoms, phi, p, q, 64) {
            cost += rho * (moment2(p, q, atoms.position(i), t0, t1) - phi[i] * (t1 - t0));
            nu[i] += rho * (t1 - t0);
        }
    }
    for i in 0..n {
        cost += phi[i] * atoms.masses()[i];
    }
    let grad = (0..n).map(|i| atoms.masses()[i] - nu[i]).collect();
    (cost, grad)
}

/// Midpoint samples of the polyline: `samples` points per segment, each of
/// weight `rho_a / samples`.
pub fn sample_curve(curve: &PolylineMeasure<f64>, samples: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut w = Vec::new();
    for a in 0..curve.segment_count() {
        let rho = curve.density(a);
        if rho == 0.0 {
            continue;
        }
        let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
        for s in 0..samples {
            pts.push(point_at(p, q, (s as f64 + 0.5) / samples as f64));
            w.push(rho / samples as f64);
        }
    }
    (pts, w)
}

/// Exact discrete optimal transport cost `min sum_ik f_ik |x_i - y_k|^2`
/// between supplies `m` at `x` and demands `w` at `y`, by successive
/// shortest paths with Johnson potentials.
///
/// Sources are few, so each Dijkstra settles only sources and relaxes the
/// sinks in bulk; a sink leads back to the sources currently shipping to it.
pub fn discrete_ot(x: &[Vec<f64>], m: &[f64], y: &[Vec<f64>], w: &[f64]) -> f64 {
    let (n, k) = (x.len(), y.len());
    let cost = |i: usize, j: usize| -> f64 { x[i].iter().zip(&y[j]).map(|(a, b)| (a - b) * (a - b)).sum() };
    let c: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|j| cost(i, j)).collect()).collect();
    let mut supply = m.to_vec();
    let mut demand = w.to_vec();
    let mut flow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k]; // per sink: (source, amount)
    let mut pi_s = vec![0.0f64; n];
    let mut pi_t = vec![0.0f64; k];
    let eps = 1e-15;
    loop {
        let active: Vec<usize> = (0..n).filter(|&i| supply[i] > eps).collect();
        if active.is_empty() {
            break;
        }
        let mut ds = vec![f64::INFINITY; n];
        let mut from_sink = vec![usize::MAX; n];
        let mut dt = vec![f64::INFINITY; k];
        let mut from_src = vec![usize::MAX; k];
        let mut settled = vec![false; n];
        for &i in &active {
            ds[i] = 0.0;
        }
        loop {
            let mut best = None;
            for i in 0..n {
                if !settled[i] && ds[i].is_finite() && best.is_none_or(|b: usize| ds[i] < ds[b]) {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            settled[i] = true;
            for j in 0..k {
                // Reduced costs are nonnegative up to rounding.
                let d = ds[i] + (c[i][j] + pi_s[i] - pi_t[j]).max(0.0);
                if d < dt[j] {
                    dt[j] = d;
                    from_src[j] = i;
                    for &(s, f) in &flow[j] {
                        if f > eps && !settled[s] {
                            let ds_new = d + (pi_t[j] - c[s][j] - pi_s[s]).max(0.0);
                            if ds_new < ds[s] {
                                ds[s] = ds_new;
                                from_sink[s] = j;
                            }
                        }
                    }
                }
            }
        }
        // Supplies and demands balance up to rounding.
        let Some(target) =
            (0..k).filter(|&j| demand[j] > eps && dt[j].is_finite()).min_by(|&a, &b| dt[a].total_cmp(&dt[b]))
        else {
            break;
        };
        let reach = dt[target];
        for i in 0..n {
            pi_s[i] += ds[i].min(reach);
        }
        for j in 0..k {
            pi_t[j] += dt[j].min(reach);
        }
        // Walk back to the origin and find the bottleneck.
        let mut path = Vec::new();
        let mut j = target;
        let mut amount = demand[target];
        loop {
            let i = from_src[j];
            path.push((i, j));
            if from_sink[i] == usize::MAX {
                amount = amount.min(supply[i]);
                break;
            }
            let jb = from_sink[i];
            let back = flow[jb].iter().find(|e| e.0 == i).map_or(0.0, |e| e.1);
            amount = amount.min(back);
            j = jb;
        }
        let origin = path.last().unwrap().0;
        supply[origin] -= amount;
        demand[target] -= amount;
        for (idx, &(i, j)) in path.iter().enumerate() {
            add_flow(&mut flow[j], i, amount);
            if idx + 1 < path.len() {
                let jb = from_sink[i];
                add_flow(&mut flow[jb], i, -amount);
            }
        }
    }
    let mut total = 0.0;
    for (j, list) in flow.iter().enumerate() {
        for &(i, f) in list {
            total += f * c[i][j];
        }
    }
    total
}

fn add_flow(list: &mut Vec<(usize, f64)>, i: usize, amount: f64) {
    if let Some(e) = list.iter_mut().find(|e| e.0 == i) {
        e.1 += amount;
        if e.1 <= 1e-18 {
            list.retain(|e| e.0 != i);
        }
    } else if amount > 0.0 {
        list.push((i, amount));
    }
}

/// Max-norm distance between two vectors.
pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
