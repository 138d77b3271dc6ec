use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use curvling::bench::{compare_solvers, random_instance, scaling, write_scaling_csv, write_solver_csv};
use curvling::check::{gradient_fd_error, hessian_fd_error};
use curvling::io::{image_to_diracs, load_catalog, read_pgm, write_polyline, write_svg, PolylineDocument};
use curvling::shape_opt::{ShapeError, ShapeIterate};
use curvling::{
    check_genericity, optimize_polyline_with, solve, AtomicMeasure, DualPotential, Method, PolylineMeasure,
};
use serde_json::json;

use crate::config::{Overrides, RunConfig};
use crate::manifest::Manifest;

/// Above this many `(segment, pair)` tests the genericity check is skipped.
const GENERICITY_LIMIT: f64 = 5e7;

fn setup(flags: &Overrides, threads: Option<usize>) -> Result<RunConfig> {
    let cfg = RunConfig::resolve(flags)?;
    cfg.validate()?;
    if threads.is_none() {
        if let Some(t) = cfg.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
    }
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating output directory {}", cfg.output.dir.display()))?;
    Ok(cfg)
}

fn load_atoms(cfg: &RunConfig) -> Result<AtomicMeasure<f64>> {
    if let Some(p) = &cfg.input.image {
        let img = read_pgm(p)?;
        Ok(image_to_diracs(&img, cfg.input.polarity, cfg.input.threshold)?)
    } else if let Some(p) = &cfg.input.points {
        Ok(load_catalog(p, &cfg.input.columns)?)
    } else {
        bail!("no input configured")
    }
}

fn initial_polyline(cfg: &RunConfig, atoms: &AtomicMeasure<f64>, disjoint: bool) -> Result<PolylineMeasure<f64>> {
    let curve = match &cfg.polyline.file {
        Some(path) => {
            let c: PolylineMeasure<f64> = curvling::io::read_polyline(path)?;
            if disjoint && !c.disjoint_mode() {
                PolylineMeasure::from_vertices(c.vertices().clone(), true)?
            } else {
                c
            }
        }
        None => {
            let (lo, hi) = atoms.positions().bounding_box();
            let vertices = cfg.polyline.init.build(cfg.polyline.segments, &lo, &hi, cfg.seed);
            PolylineMeasure::from_vertices(vertices, disjoint)?
        }
    };
    if curve.dim() != atoms.dim() {
        bail!("polyline is {}-dimensional but the atoms are {}-dimensional", curve.dim(), atoms.dim());
    }
    Ok(curve)
}

fn warn_genericity(atoms: &AtomicMeasure<f64>, curve: &PolylineMeasure<f64>) {
    let n = atoms.len() as f64;
    if n * n * curve.segment_count() as f64 > GENERICITY_LIMIT {
        eprintln!("note: genericity test skipped at this size (run `curvling check --force`)");
        return;
    }
    let bad = check_genericity(atoms, curve, 1e-12);
    if !bad.is_empty() {
        eprintln!("warning: {} segment/pair combinations are nearly orthogonal; the dual may be nonsmooth", bad.len());
    }
}

fn document(curve: &PolylineMeasure<f64>, seed: u64, iteration: Option<usize>) -> PolylineDocument {
    PolylineDocument { seed: Some(seed), iteration, ..PolylineDocument::from_measure(curve) }
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_potential(path: &Path, atoms: &AtomicMeasure<f64>, phi: &[f64], gradient: &[f64]) -> Result<()> {
    let mut w = csv_file(path)?;
    let coords = ["x", "y", "z"];
    write!(w, "index")?;
    for name in &coords[..atoms.dim()] {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",mass,phi,cell_mass")?;
    for i in 0..atoms.len() {
        write!(w, "{i}")?;
        for c in atoms.position(i) {
            write!(w, ",{c:e}")?;
        }
        let m = atoms.masses()[i];
        writeln!(w, ",{m:e},{:e},{:e}", phi[i], m - gradient[i])?;
    }
    w.flush()?;
    Ok(())
}

pub fn transport(flags: &Overrides, threads: Option<usize>) -> Result<ExitCode> {
    let cfg = setup(flags, threads)?;
    let start = Instant::now();
    let atoms = load_atoms(&cfg)?;
    let curve = initial_polyline(&cfg, &atoms, cfg.polyline.disjoint_mode)?;
    warn_genericity(&atoms, &curve);
    let sol = solve(&atoms, &curve, &DualPotential::zeros(atoms.len()), &cfg.solver)?;

    let dir = &cfg.output.dir;
    let mut manifest = Manifest::new("transport", &cfg)?;
    let potential = dir.join("potential.csv");
    write_potential(&potential, &atoms, sol.phi.values(), &sol.gradient)?;
    let history = dir.join("history.csv");
    sol.history.write_csv(csv_file(&history)?)?;
    let polyline = dir.join("polyline.json");
    write_polyline(&document(&curve, cfg.seed, None), &polyline)?;
    let svg = dir.join("render.svg");
    write_svg(&curve, cfg.output.draw_points.then_some(&atoms), &cfg.output.svg, &svg)?;
    manifest.outputs = vec![potential, history, polyline, svg];
    manifest.elapsed_seconds = start.elapsed().as_secs_f64();
    manifest.summary = json!({
        "atoms": atoms.len(),
        "segments": curve.segment_count(),
        "cost": sol.cost,
        "wasserstein": sol.cost.max(0.0).sqrt(),
        "grad_norm": sol.grad_norm(),
        "empty_cells": sol.empty_cells,
        "iterations": sol.history.len().saturating_sub(1),
        "status": sol.status,
    });
    manifest.write(dir)?;
    println!(
        "W2^2 = {:.12e}  |grad| = {:.3e}  status {:?}  ({} iterations)",
        sol.cost,
        sol.grad_norm(),
        sol.status,
        sol.history.len().saturating_sub(1)
    );
    Ok(ExitCode::SUCCESS)
}

pub fn curvle(flags: &Overrides, threads: Option<usize>, disjoint: bool) -> Result<ExitCode> {
    let cfg = setup(flags, threads)?;
    let start = Instant::now();
    let atoms = load_atoms(&cfg)?;
    let curve = initial_polyline(&cfg, &atoms, disjoint || cfg.polyline.disjoint_mode)?;
    warn_genericity(&atoms, &curve);
    let dir = cfg.output.dir.clone();
    let command = if disjoint { "filaments" } else { "curvle" };
    let mut manifest = Manifest::new(command, &cfg)?;

    let mut dumps: Vec<PathBuf> = Vec::new();
    let mut dump_error = None;
    let observer = |it: &ShapeIterate<'_, f64>| {
        eprintln!(
            "iter {:4}  G = {:.6e}  |grad|_inf = {:.3e}  inner {}",
            it.iteration, it.record.cost, it.record.grad_inf, it.record.inner_iterations
        );
        if cfg.output.dump_every > 0 && it.iteration.is_multiple_of(cfg.output.dump_every) {
            let path = dir.join(format!("polyline_{:05}.json", it.iteration));
            match write_polyline(&document(it.curve, cfg.seed, Some(it.iteration)), &path) {
                Ok(()) => dumps.push(path),
                Err(e) => {
                    dump_error.get_or_insert(e);
                }
            }
        }
    };
    let outcome = match optimize_polyline_with(&atoms, &curve, &cfg.solver, &cfg.shape, observer) {
        Ok(o) => o,
        Err(ShapeError::InnerSolveFailed { iteration, last, source }) => {
            let path = dir.join("failed_polyline.json");
            write_polyline(&document(&last, cfg.seed, Some(iteration)), &path)?;
            bail!("dual solve failed at outer iteration {iteration}: {source} (last polyline in {})", path.display());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = dump_error {
        return Err(e.into());
    }

    let polyline = dir.join("polyline.json");
    let iterations = outcome.history.records.len().saturating_sub(1);
    write_polyline(&document(&outcome.curve, cfg.seed, Some(iterations)), &polyline)?;
    let shape_history = dir.join("shape_history.csv");
    outcome.history.write_csv(csv_file(&shape_history)?)?;
    let dual_history = dir.join("history.csv");
    outcome.solution.history.write_csv(csv_file(&dual_history)?)?;
    let svg = dir.join("render.svg");
    write_svg(&outcome.curve, cfg.output.draw_points.then_some(&atoms), &cfg.output.svg, &svg)?;
    manifest.outputs = vec![polyline, shape_history, dual_history, svg];
    manifest.outputs.extend(dumps);
    manifest.elapsed_seconds = start.elapsed().as_secs_f64();
    let first = outcome.history.records.first().map(|r| r.cost);
    let violation = cfg.shape.constraints.map(|k| k.violation(outcome.curve.vertices()));
    manifest.summary = json!({
        "atoms": atoms.len(),
        "segments": outcome.curve.segment_count(),
        "initial_cost": first,
        "final_cost": outcome.solution.cost,
        "grad_inf": outcome.gradient.max_norm(),
        "outer_iterations": iterations,
        "status": outcome.status,
        "constraint_violation": violation,
    });
    manifest.write(&dir)?;
    println!(
        "G: {:.6e} -> {:.6e}  |grad|_inf = {:.3e}  status {:?}  ({} outer iterations)",
        first.unwrap_or(f64::NAN),
        outcome.solution.cost,
        outcome.gradient.max_norm(),
        outcome.status,
        iterations
    );
    Ok(ExitCode::SUCCESS)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(csv_file(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn bench_solvers(
    n: usize,
    p: usize,
    seeds: &[u64],
    iterations: usize,
    grad_tol: f64,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let methods = [Method::Hybrid, Method::Lbfgs, Method::Nesterov, Method::Bb, Method::Gradient];
    let rows = compare_solvers(n, p, seeds, &methods, iterations, grad_tol)?;
    write_solver_csv(&rows, sink(out)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn bench_scaling(
    n: usize,
    p: usize,
    seed: u64,
    thread_counts: &[usize],
    repeats: usize,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let (atoms, curve) = random_instance(n, p, seed)?;
    let rows = scaling(&atoms, &curve, &DualPotential::zeros(n), thread_counts, repeats)?;
    write_scaling_csv(&rows, sink(out)?)?;
    if rows.iter().all(|r| r.identical) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: results differ between thread counts");
        Ok(ExitCode::FAILURE)
    }
}

pub fn check(flags: &Overrides, tolerance: f64, force: bool, random: Option<&[usize]>) -> Result<ExitCode> {
    let (atoms, curve, seed) = match random {
        Some(&[n, p]) => {
            let seed = flags.seed.unwrap_or(0);
            let (a, c) = random_instance(n, p, seed)?;
            (a, c, seed)
        }
        Some(_) => bail!("--random takes two values: n,p"),
        None => {
            let cfg = RunConfig::resolve(flags)?;
            cfg.validate()?;
            let atoms = load_atoms(&cfg)?;
            let curve = initial_polyline(&cfg, &atoms, cfg.polyline.disjoint_mode)?;
            (atoms, curve, cfg.seed)
        }
    };
    let n = atoms.len();
    println!("instance: {n} atoms, {} segments, seed {seed}", curve.segment_count());
    let mut ok = true;
    if force || (n * n) as f64 * curve.segment_count() as f64 <= GENERICITY_LIMIT {
        let bad = check_genericity(&atoms, &curve, tolerance);
        println!("genericity at tolerance {tolerance:e}: {} violations", bad.len());
        for v in bad.iter().take(10) {
            println!("  segment {} atoms ({}, {})", v.segment, v.i, v.j);
        }
        ok &= bad.is_empty();
    } else {
        println!("genericity: skipped at this size (use --force)");
    }
    if n > 2000 && !force {
        println!("finite differences: skipped for more than 2000 atoms (use --force)");
    } else {
        let phi = DualPotential::zeros(n);
        let g = gradient_fd_error(&atoms, &curve, &phi, 1e-5)?;
        let h = hessian_fd_error(&atoms, &curve, &phi, 1e-6)?;
        println!("gradient vs central differences: max error {g:.3e} (limit 1e-6)");
        println!("Hessian vs differences of the gradient: max error {h:.3e} (limit 1e-4)");
        ok &= g <= 1e-6 && h <= 1e-4;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
