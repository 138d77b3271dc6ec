mod common;

use common::*;
use curvling::io::{read_polyline, render_svg, write_polyline, PolylineDocument, SvgStyle};
use curvling::shape_opt::{shape_gradient, vertex_distance};
use curvling::solvers::Branch;
use curvling::*;
use proptest::prelude::*;

#[test]
fn every_method_ascends_and_the_hybrid_reaches_the_dense_optimum() {
    let mut r = rng(21);
    let atoms = random_atoms(&mut r, 40);
    let curve = random_curve(&mut r, 12);
    let start = eval_cost(&atoms, &curve, &vec![0.0; 40]);
    for m in [Method::Gradient, Method::Bb, Method::Nesterov, Method::Lbfgs, Method::Hybrid] {
        let cfg = SolverConfig { grad_tol: 1e-11, outer_max: 400, ..SolverConfig::with_method(m) };
        let sol = solve(&atoms, &curve, &DualPotential::zeros(40), &cfg).unwrap();
        assert!(sol.cost >= start, "{m:?} lowered the dual");
        if m == Method::Hybrid {
            assert_eq!(sol.status, SolveStatus::Converged);
            // At the optimum the oracle sees the same value and a vanishing gradient.
            let (cost, grad) = dense_cost(&atoms, &curve, sol.phi.values());
            assert!((cost - sol.cost).abs() < 1e-12);
            assert!(grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-10);
            assert!(sol.history.records.iter().any(|r| r.branch == Branch::Newton));
        }
    }
}

fn eval_cost(atoms: &AtomicMeasure64, curve: &PolylineMeasure64, phi: &[f64]) -> f64 {
    dense_cost(atoms, curve, phi).0
}

#[test]
fn optimal_cost_matches_the_discrete_problem() {
    // At the dual optimum the semi-discrete cost equals OT(mu, nu), which the
    // exact discrete problem on a fine sampling approaches from either side.
    let mut r = rng(8);
    let atoms = random_atoms(&mut r, 5);
    let curve = random_curve(&mut r, 2);
    let sol = solve(&atoms, &curve, &DualPotential::zeros(5), &SolverConfig { grad_tol: 1e-13, ..Default::default() })
        .unwrap();
    let x: Vec<Vec<f64>> = (0..5).map(|i| atoms.position(i).to_vec()).collect();
    let (y, w) = sample_curve(&curve, 1000);
    let ot = discrete_ot(&x, atoms.masses(), &y, &w);
    assert!((ot - sol.cost).abs() < 1e-5, "{ot} vs {}", sol.cost);
}

#[test]
fn shape_gradient_matches_differences_of_the_optimal_cost() {
    let mut r = rng(33);
    let atoms = random_atoms(&mut r, 20);
    let verts = random_curve(&mut r, 4).vertices().clone();
    let curve = PolylineMeasure::from_vertices(verts.clone(), false).unwrap();
    let cfg = SolverConfig { grad_tol: 1e-12, outer_max: 2000, ..Default::default() };
    let sol = solve(&atoms, &curve, &DualPotential::zeros(20), &cfg).unwrap();
    assert_eq!(sol.empty_cells, 0);
    let grad = shape_gradient(&atoms, &curve, &sol.phi, &sol.trace);
    let h = 1e-6;
    for k in 0..verts.coords().len() {
        let at = |d: f64| {
            let mut c = verts.coords().to_vec();
            c[k] += d;
            let moved = PolylineMeasure::from_vertices(PointSet::new(2, c).unwrap(), false).unwrap();
            solve(&atoms, &moved, &sol.phi, &cfg).unwrap().cost
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!(
            (fd - grad.total.coords()[k]).abs() < 1e-5 * (1.0 + fd.abs()),
            "coordinate {k}: {fd} vs {}",
            grad.total.coords()[k]
        );
    }
}

#[test]
fn shape_descent_lowers_the_cost() {
    let mut r = rng(2);
    let atoms = random_atoms(&mut r, 30);
    let initial = PolylineMeasure::from_vertices(random_curve(&mut r, 10).vertices().clone(), false).unwrap();
    let solver = SolverConfig { grad_tol: 1e-9, ..Default::default() };
    let shape = ShapeConfig { max_iter: 20, grad_tol: 1e-6, ..ShapeConfig::default() };
    let out = optimize_polyline(&atoms, &initial, &solver, &shape).unwrap();
    let recs = &out.history.records;
    assert!(recs.last().unwrap().cost < 0.5 * recs[0].cost, "{} -> {}", recs[0].cost, recs.last().unwrap().cost);
    assert!(vertex_distance(out.curve.vertices(), initial.vertices()) > 0.0);
}

#[test]
fn disjoint_chains_keep_zero_mass_on_bridges() {
    let mut r = rng(4);
    let atoms = random_atoms(&mut r, 25);
    let initial = PolylineMeasure::from_vertices(random_curve(&mut r, 8).vertices().clone(), true).unwrap();
    let shape = ShapeConfig { max_iter: 5, ..ShapeConfig::default() };
    let out = optimize_polyline(&atoms, &initial, &SolverConfig::default(), &shape).unwrap();
    for a in (1..8).step_by(2) {
        assert_eq!(out.curve.density(a), 0.0);
    }
    assert!((out.curve.densities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn single_precision_agrees_with_double() {
    let mut r = rng(6);
    let atoms = random_atoms(&mut r, 30);
    let curve = random_curve(&mut r, 6);
    let to32 = |p: &PointSet<f64>| PointSet::new(2, p.coords().iter().map(|&v| v as f32).collect()).unwrap();
    let atoms32 = AtomicMeasure::new(to32(atoms.positions()), atoms.masses().iter().map(|&m| m as f32).collect())
        .unwrap()
        .normalize()
        .unwrap();
    let curve32 =
        PolylineMeasure::new(to32(curve.vertices()), curve.densities().iter().map(|&m| m as f32).collect(), false)
            .unwrap()
            .normalize()
            .unwrap();
    let phi64 = DualPotential::zeros(30);
    let phi32 = DualPotential::<f32>::zeros(30);
    let e64 = evaluate(&atoms, &curve, &phi64, &build_oracle(&atoms, &phi64, OracleMode::Adjacency)).unwrap();
    let e32 = evaluate(&atoms32, &curve32, &phi32, &build_oracle(&atoms32, &phi32, OracleMode::Adjacency)).unwrap();
    assert!((e64.cost - e32.cost as f64).abs() < 1e-5);
}

#[test]
fn polyline_files_roundtrip_through_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(12);
    let atoms = random_atoms(&mut r, 15);
    let curve = random_curve(&mut r, 5);
    let path = dir.path().join("c.json");
    write_polyline(&PolylineDocument::from_measure(&curve), &path).unwrap();
    let back: PolylineMeasure64 = read_polyline(&path).unwrap();
    assert_eq!(back, curve);
    let phi = DualPotential::zeros(15);
    let a = evaluate(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
    let b = evaluate(&atoms, &back, &phi, &build_oracle(&atoms, &phi, OracleMode::Adjacency)).unwrap();
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    let svg = render_svg(&back, Some(&atoms), &SvgStyle::default());
    assert_eq!(svg.matches("<circle").count(), 15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_feasible_and_idempotent(seed in 0u64..10_000, p in 1usize..25, k1 in 0.05f64..0.5, k2 in 0.02f64..0.5) {
        let mut r = rng(seed);
        let verts = random_curve(&mut r, p).vertices().clone();
        let bounds = KinematicConstraints::new(k1, k2).unwrap();
        let out = project_kinematic(&verts, &bounds, &AdmmConfig::default()).unwrap();
        prop_assert!(bounds.violation(&out.vertices) <= 1e-6);
        let again = project_kinematic(&out.vertices, &bounds, &AdmmConfig::default()).unwrap();
        prop_assert!(max_diff(again.vertices.coords(), out.vertices.coords()) <= 1e-6);
    }

    #[test]
    fn projection_preserves_the_centroid(seed in 0u64..10_000, p in 1usize..20) {
        // Both constraint families are translation invariant, so the nearest
        // feasible polyline keeps the vertex centroid.
        let mut r = rng(seed);
        let verts = random_curve(&mut r, p).vertices().clone();
        let bounds = KinematicConstraints::new(0.1, 0.05).unwrap();
        let out = project_kinematic(&verts, &bounds, &AdmmConfig::default()).unwrap();
        for k in 0..2 {
            let c0: f64 = verts.iter().map(|v| v[k]).sum::<f64>() / (p + 1) as f64;
            let c1: f64 = out.vertices.iter().map(|v| v[k]).sum::<f64>() / (p + 1) as f64;
            prop_assert!((c0 - c1).abs() < 1e-6);
        }
    }

    #[test]
    fn cost_is_invariant_under_potential_shifts(seed in 0u64..1000, shift in -1.0f64..1.0) {
        let mut r = rng(seed);
        let atoms = random_atoms(&mut r, 12);
        let curve = random_curve(&mut r, 4);
        let phi = random_phi(&mut r, 12, 0.05);
        let moved = DualPotential::new(phi.values().iter().map(|v| v + shift).collect()).unwrap();
        let a = evaluate(&atoms, &curve, &phi, &build_oracle(&atoms, &phi, OracleMode::BruteForce)).unwrap();
        let b = evaluate(&atoms, &curve, &moved, &build_oracle(&atoms, &moved, OracleMode::BruteForce)).unwrap();
        prop_assert!((a.cost - b.cost).abs() < 1e-12);
        prop_assert!(max_diff(&a.gradient, &b.gradient) < 1e-12);
    }
}
