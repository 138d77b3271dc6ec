mod common;

use common::*;
use curvling::transport::trace_polyline;
use curvling::*;
use proptest::prelude::*;

#[test]
fn discrete_ot_matches_hand_solutions() {
    // Crossing assignment is cheaper than the straight one.
    let x = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    let y = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
    let c = discrete_ot(&x, &[0.5, 0.5], &y, &[0.5, 0.5]);
    assert!((c - 1.0).abs() < 1e-14, "{c}");
    // One source spreads over three sinks.
    let y = vec![vec![0.0, 1.0], vec![0.0, 2.0], vec![3.0, 0.0]];
    let c = discrete_ot(&[vec![0.0, 0.0]], &[1.0], &y, &[0.25, 0.25, 0.5]);
    assert!((c - (0.25 + 1.0 + 4.5)).abs() < 1e-14, "{c}");
}

#[test]
fn discrete_ot_beats_every_greedy_plan() {
    let mut r = rng(5);
    let atoms = random_atoms(&mut r, 6);
    let curve = random_curve(&mut r, 3);
    let (y, w) = sample_curve(&curve, 40);
    let x: Vec<Vec<f64>> = (0..6).map(|i| atoms.position(i).to_vec()).collect();
    let opt = discrete_ot(&x, atoms.masses(), &y, &w);
    // Northwest-corner plans for a few orderings are feasible, hence no cheaper.
    for shift in 0..6 {
        let mut supply: Vec<f64> = atoms.masses().to_vec();
        let mut total = 0.0;
        let mut i = shift;
        for (j, yj) in y.iter().enumerate() {
            let mut need = w[j];
            while need > 1e-15 {
                let take = need.min(supply[i]);
                total += take * x[i].iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                supply[i] -= take;
                need -= take;
                if supply[i] <= 1e-15 {
                    i = (i + 1) % 6;
                }
            }
        }
        assert!(opt <= total + 1e-12);
    }
    // The dual value at any potential bounds the optimum from below.
    let phi = random_phi(&mut r, 6, 0.05);
    let mut dual: f64 = (0..6).map(|i| phi[i] * atoms.masses()[i]).sum();
    for (yj, &wj) in y.iter().zip(&w) {
        let i = owner(&atoms, phi.values(), yj);
        dual += wj * (x[i].iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - phi[i]);
    }
    assert!(dual <= opt + 1e-12);
}

#[test]
fn evaluation_matches_dense_sampling() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let atoms = random_atoms(&mut r, 30);
        let curve = random_curve(&mut r, 8);
        let phi = random_phi(&mut r, 30, 0.02);
        let ev = evaluate(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
        let (cost, grad) = dense_cost(&atoms, &curve, phi.values());
        assert!((ev.cost - cost).abs() < 1e-12, "seed {seed}: {} vs {cost}", ev.cost);
        assert!(max_diff(&ev.gradient, &grad) < 1e-12);
    }
}

#[test]
fn traces_match_dense_sampling() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let atoms = random_atoms(&mut r, 200);
        let curve = random_curve(&mut r, 20);
        let phi = random_phi(&mut r, 200, 0.01);
        let oracle = build_oracle(&atoms, &phi, OracleMode::Adjacency);
        let trace = trace_polyline(&atoms, &curve, &phi, &oracle).unwrap();
        for a in 0..curve.segment_count() {
            let got: Vec<_> = trace.segment(a).iter().map(|e| (e.cell, e.t_start, e.t_end)).collect();
            let want = dense_trace(&atoms, phi.values(), curve.vertex(a), curve.vertex(a + 1), 100);
            let (got, want) = (clean(&got, 1e-12), clean(&want, 1e-12));
            assert_eq!(got.len(), want.len(), "seed {seed} segment {a}");
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.0, w.0);
                assert!((g.1 - w.1).abs() < 1e-9 && (g.2 - w.2).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn closed_form_moment_agrees_with_quadrature() {
    let (p, q, x) = ([0.1, -0.3], [0.7, 0.4], [0.2, 0.2]);
    let n = 20_000;
    let mut acc = 0.0;
    for s in 0..n {
        let t = 0.2 + 0.6 * (s as f64 + 0.5) / n as f64;
        let y = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
        acc += ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)) * 0.6 / n as f64;
    }
    assert!((moment2(&p, &q, &x, 0.2, 0.8) - acc).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_and_brute_force_traces_agree(seed in 0u64..10_000, n in 2usize..60, p in 1usize..12) {
        let mut r = rng(seed);
        let atoms = random_atoms(&mut r, n);
        let curve = random_curve(&mut r, p);
        let phi = random_phi(&mut r, n, 0.05);
        let adj = trace_polyline(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
        let bf = trace_polyline(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::BruteForce)).unwrap();
        prop_assert_eq!(adj.segment_count(), bf.segment_count());
        for a in 0..adj.segment_count() {
            let (x, y) = (adj.segment(a), bf.segment(a));
            prop_assert_eq!(x.len(), y.len());
            for (e, f) in x.iter().zip(y) {
                prop_assert_eq!(e.cell, f.cell);
                prop_assert!((e.t_start - f.t_start).abs() < 1e-9 && (e.t_end - f.t_end).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn evaluation_conserves_mass(seed in 0u64..100_000, n in 1usize..80, p in 1usize..15, scale in 0.0f64..0.3) {
        let mut r = rng(seed);
        let atoms = random_atoms(&mut r, n);
        let curve = random_curve(&mut r, p);
        let phi = random_phi(&mut r, n, scale);
        let ev = evaluate(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
        prop_assert!(ev.gradient.iter().sum::<f64>().abs() < 1e-10);
        prop_assert!((ev.cell_masses.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let empty = ev.cell_masses.iter().filter(|&&m| m == 0.0).count();
        prop_assert_eq!(empty, ev.empty_cells);
    }

    #[test]
    fn cost_is_bounded_by_every_feasible_plan(seed in 0u64..10_000, n in 1usize..8, p in 1usize..4) {
        // Weak duality against the exact discrete problem on a fine sampling.
        let mut r = rng(seed);
        let atoms = random_atoms(&mut r, n);
        let curve = random_curve(&mut r, p);
        let phi = random_phi(&mut r, n, 0.1);
        let ev = evaluate(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
        let (y, w) = sample_curve(&curve, 400);
        let x: Vec<Vec<f64>> = (0..n).map(|i| atoms.position(i).to_vec()).collect();
        let opt = discrete_ot(&x, atoms.masses(), &y, &w);
        // W2(nu, samples) <= max length / (400 sqrt 12), so by the triangle
        // inequality OT(mu, nu) <= (sqrt(opt) + delta)^2.
        let lmax = (0..p).map(|a| curve.segment_length(a)).fold(0.0, f64::max);
        let delta = lmax / (400.0 * 12f64.sqrt());
        prop_assert!(ev.cost <= (opt.sqrt() + delta).powi(2) + 1e-12);
    }
}
