//! Maximization of the concave dual functional.
//!
//! Quasi-Newton and hybrid methods go through [`maximize`]; the first-order
//! schemes (gradient, Barzilai-Borwein, Nesterov) through
//! [`maximize_first_order`]. [`solve`] and [`solve_first_order`] bind these to
//! the transport objective.

mod cg;
mod lbfgs;
mod line_search;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{AtomicMeasure, DualPotential, PolylineMeasure};
use crate::power_diagram::{build_oracle, OracleMode};
use crate::scalar::{dot, Scalar};
use crate::transport::{evaluate, gershgorin_bound, hessian, SegmentTrace, SparseHessian, TransportError};

pub use cg::{newton_direction, CgOutcome};
pub use lbfgs::Lbfgs;
pub use line_search::{wolfe_line_search, Accepted, LineSearchError, Trial, WolfeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gradient,
    Bb,
    Nesterov,
    Lbfgs,
    Hybrid,
}

impl Method {
    pub fn is_first_order(self) -> bool {
        matches!(self, Method::Gradient | Method::Bb | Method::Nesterov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    /// Target for the Euclidean norm of the gradient.
    pub grad_tol: f64,
    pub outer_max: usize,
    pub lbfgs_memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Evaluation budget of one line search.
    pub line_search_max: usize,
    /// Lipschitz estimate for Nesterov; defaults to half the Gershgorin
    /// bound at the starting point.
    pub nesterov_l: Option<f64>,
    /// Constant step for gradient ascent instead of a line search.
    pub fixed_step: Option<f64>,
    /// Relative residual required from the Newton subsolver.
    pub newton_tol: f64,
    pub newton_search: NewtonSearch,
    pub oracle: OracleMode,
}

/// Step rule for the Newton branch of the hybrid method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonSearch {
    /// Same strong Wolfe search as the quasi-Newton branch.
    Wolfe,
    /// Step halving from 1, requiring ascent and a decrease of the gradient norm.
    Backtracking,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Hybrid,
            grad_tol: 1e-6,
            outer_max: 1000,
            lbfgs_memory: 10,
            c1: 1e-4,
            c2: 0.9,
            line_search_max: 50,
            nesterov_l: None,
            fixed_step: None,
            newton_tol: 1e-10,
            newton_search: NewtonSearch::Wolfe,
            oracle: OracleMode::Adjacency,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |what: &str| Err(SolveError::InvalidConfig(what.to_string()));
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return bad("need 0 < c1 < c2 < 1");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.outer_max == 0 {
            return bad("outer_max must be at least 1");
        }
        if self.lbfgs_memory == 0 {
            return bad("lbfgs_memory must be at least 1");
        }
        if self.line_search_max == 0 {
            return bad("line_search_max must be at least 1");
        }
        if matches!(self.nesterov_l, Some(l) if !(l > 0.0 && l.is_finite())) {
            return bad("nesterov_l must be positive");
        }
        if matches!(self.fixed_step, Some(s) if !(s > 0.0 && s.is_finite())) {
            return bad("fixed_step must be positive");
        }
        Ok(())
    }

    fn wolfe<T: Scalar>(&self) -> WolfeParams<T> {
        WolfeParams { c1: T::lit(self.c1), c2: T::lit(self.c2), max_evals: self.line_search_max }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point has {got} entries, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// How the step of an iteration was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Initial,
    QuasiNewton,
    Newton,
    Gradient,
    BarzilaiBorwein,
    Nesterov,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Initial => "initial",
            Branch::QuasiNewton => "quasi_newton",
            Branch::Newton => "newton",
            Branch::Gradient => "gradient",
            Branch::BarzilaiBorwein => "barzilai_borwein",
            Branch::Nesterov => "nesterov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub empty_cells: usize,
    pub branch: Branch,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceHistory {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceHistory {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "cost", "grad_norm", "step", "empty_cells", "branch"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.cost),
                format!("{:e}", r.grad_norm),
                format!("{:e}", r.step),
                r.empty_cells.to_string(),
                r.branch.as_str().to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// No acceptable step could be found from the last iterate.
    Stalled,
}

/// Value and gradient of the objective at one point, plus data the
/// objective needs to build its Hessian there.
#[derive(Debug, Clone)]
pub struct Sample<T, S> {
    pub value: T,
    pub gradient: Vec<T>,
    pub empty_cells: usize,
    pub state: S,
}

impl<T: Scalar, S> Sample<T, S> {
    pub fn grad_norm(&self) -> T {
        dot(&self.gradient, &self.gradient).sqrt()
    }
}

/// A concave function to maximize.
pub trait Objective<T: Scalar> {
    type State: Clone;

    fn evaluate(&mut self, x: &[T]) -> Result<Sample<T, Self::State>, SolveError>;

    /// Hessian at a sampled point, when available. Rows must sum to zero.
    fn hessian(&mut self, _x: &[T], _sample: &Sample<T, Self::State>) -> Option<SparseHessian<T>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T, S> {
    pub x: Vec<T>,
    pub sample: Sample<T, S>,
    pub history: ConvergenceHistory,
    pub status: SolveStatus,
    pub evaluations: usize,
}

fn record<T: Scalar, S>(it: usize, s: &Sample<T, S>, step: T, branch: Branch) -> IterationRecord {
    IterationRecord {
        iteration: it,
        cost: s.value.as_f64(),
        grad_norm: s.grad_norm().as_f64(),
        step: step.as_f64(),
        empty_cells: s.empty_cells,
        branch,
    }
}

fn axpy<T: Scalar>(x: &[T], s: T, d: &[T]) -> Vec<T> {
    x.iter().zip(d).map(|(&a, &b)| a + s * b).collect()
}

type Payload<T, S> = (Vec<T>, Sample<T, S>);
type SearchResult<T, S> = Result<Accepted<T, Payload<T, S>>, LineSearchError<T, Payload<T, S>>>;

fn line_search<T: Scalar, O: Objective<T>>(
    obj: &mut O,
    x: &[T],
    current: &Sample<T, O::State>,
    d: &[T],
    s0: T,
    params: &WolfeParams<T>,
    evals: &mut usize,
) -> SearchResult<T, O::State> {
    let slope0 = dot(&current.gradient, d);
    let mut count = 0usize;
    let result = wolfe_line_search(
        |s| {
            count += 1;
            let xt = axpy(x, s, d);
            let st = obj.evaluate(&xt).ok()?;
            Some(Trial { value: st.value, slope: dot(&st.gradient, d), payload: (xt, st) })
        },
        current.value,
        slope0,
        s0,
        params,
    );
    *evals += count;
    result
}

/// Line search along `d`, then along the gradient if that fails. `None`
/// means no point improving the objective was found.
#[allow(clippy::too_many_arguments)]
fn guarded_step<T: Scalar, O: Objective<T>>(
    obj: &mut O,
    x: &[T],
    current: &Sample<T, O::State>,
    d: &[T],
    s0: T,
    params: &WolfeParams<T>,
    evals: &mut usize,
    fell_back: &mut bool,
) -> Option<(T, Payload<T, O::State>)> {
    *fell_back = false;
    match line_search(obj, x, current, d, s0, params, evals) {
        Ok(a) => return Some((a.step, a.payload)),
        Err(LineSearchError::Failure { best: Some(b), .. }) => return Some((b.step, b.payload)),
        Err(_) => {}
    }
    *fell_back = true;
    let g = current.gradient.clone();
    let gn = dot(&g, &g).sqrt();
    if !(gn > T::zero()) {
        return None;
    }
    match line_search(obj, x, current, &g, T::one() / gn, params, evals) {
        Ok(a) => Some((a.step, a.payload)),
        Err(LineSearchError::Failure { best: Some(b), .. }) => Some((b.step, b.payload)),
        Err(_) => None,
    }
}

/// Halves the Newton step from 1 until the objective increases
/// sufficiently and the gradient norm drops by the factor `1 - s/2`.
fn newton_backtracking<T: Scalar, O: Objective<T>>(
    obj: &mut O,
    x: &[T],
    current: &Sample<T, O::State>,
    d: &[T],
    params: &WolfeParams<T>,
    evals: &mut usize,
) -> Option<(T, Payload<T, O::State>)> {
    let slope0 = dot(&current.gradient, d);
    let norm0 = current.grad_norm();
    let noise = T::lit(16.0) * T::epsilon() * current.value.abs();
    let half = T::lit(0.5);
    let mut s = T::one();
    for _ in 0..params.max_evals.min(NEWTON_HALVINGS) {
        let xt = axpy(x, s, d);
        *evals += 1;
        if let Ok(st) = obj.evaluate(&xt) {
            if st.value >= current.value + params.c1 * s * slope0 - noise
                && st.grad_norm() <= (T::one() - half * s) * norm0
            {
                return Some((s, (xt, st)));
            }
        }
        s *= half;
    }
    None
}

const NEWTON_HALVINGS: usize = 12;

fn check_start<T: Scalar>(x0: &[T], n: Option<usize>) -> Result<(), SolveError> {
    if let Some(n) = n {
        if x0.len() != n {
            return Err(SolveError::SizeMismatch { expected: n, got: x0.len() });
        }
    }
    Ok(())
}

/// L-BFGS, or the hybrid method when `config.method` is `Hybrid`: once
/// no cell is empty and the Hessian is regular, the Newton direction on the
/// complement of the constants replaces the quasi-Newton one. The L-BFGS
/// memory is updated after every accepted step in both branches.
pub fn maximize<T: Scalar, O: Objective<T>>(
    obj: &mut O,
    x0: Vec<T>,
    config: &SolverConfig,
) -> Result<SolveOutcome<T, O::State>, SolveError> {
    config.validate()?;
    let params = config.wolfe::<T>();
    let tol = T::lit(config.grad_tol);
    let mut evals = 1;
    let mut x = x0;
    let mut cur = obj.evaluate(&x)?;
    let mut history = ConvergenceHistory::default();
    history.records.push(record(0, &cur, T::zero(), Branch::Initial));
    let mut memory = Lbfgs::new(config.lbfgs_memory);
    let mut status = SolveStatus::IterationLimit;
    let hybrid = config.method == Method::Hybrid;

    for it in 1..=config.outer_max {
        if cur.grad_norm() <= tol {
            status = SolveStatus::Converged;
            break;
        }
        let mut branch = Branch::QuasiNewton;
        let mut d = None;
        if hybrid && cur.empty_cells == 0 {
            if let Some(h) = obj.hessian(&x, &cur) {
                if h.flags().near_tangent == 0 {
                    let out = newton_direction(&h, &cur.gradient, T::lit(config.newton_tol), x.len());
                    if out.converged && dot(&out.direction, &cur.gradient) > T::zero() {
                        branch = Branch::Newton;
                        d = Some(out.direction);
                    }
                }
            }
        }
        let mut accepted = None;
        if let (Some(dn), NewtonSearch::Backtracking) = (d.as_ref(), config.newton_search) {
            accepted = newton_backtracking(obj, &x, &cur, dn, &params, &mut evals);
            if accepted.is_none() {
                branch = Branch::QuasiNewton;
                d = None;
            }
        }
        let (step, (xn, sn)) = match accepted {
            Some(a) => a,
            None => {
                let mut d = d.unwrap_or_else(|| memory.direction(&cur.gradient));
                if !(dot(&d, &cur.gradient) > T::zero()) {
                    memory.reset();
                    d = cur.gradient.clone();
                }
                let s0 = if branch == Branch::QuasiNewton && memory.is_empty() {
                    T::one() / cur.grad_norm()
                } else {
                    T::one()
                };
                let mut fell_back = false;
                let Some(found) = guarded_step(obj, &x, &cur, &d, s0, &params, &mut evals, &mut fell_back) else {
                    status = SolveStatus::Stalled;
                    break;
                };
                if fell_back {
                    memory.reset();
                    branch = Branch::Gradient;
                }
                found
            }
        };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = cur.gradient.iter().zip(&sn.gradient).map(|(&a, &b)| a - b).collect();
        memory.update(s, y);
        x = xn;
        cur = sn;
        history.records.push(record(it, &cur, step, branch));
        if it == config.outer_max && cur.grad_norm() <= tol {
            status = SolveStatus::Converged;
        }
    }
    Ok(SolveOutcome { x, sample: cur, history, status, evaluations: evals })
}

/// Gradient ascent (Wolfe or fixed step), Barzilai-Borwein with a Wolfe
/// safeguard, or Nesterov's accelerated gradient with step `1/L`.
pub fn maximize_first_order<T: Scalar, O: Objective<T>>(
    obj: &mut O,
    x0: Vec<T>,
    config: &SolverConfig,
) -> Result<SolveOutcome<T, O::State>, SolveError> {
    config.validate()?;
    if !config.method.is_first_order() {
        return Err(SolveError::InvalidConfig(format!("{:?} is not a first-order method", config.method)));
    }
    let params = config.wolfe::<T>();
    let tol = T::lit(config.grad_tol);
    let mut evals = 1;
    let mut x = x0;
    let mut cur = obj.evaluate(&x)?;
    let mut history = ConvergenceHistory::default();
    history.records.push(record(0, &cur, T::zero(), Branch::Initial));
    let mut status = SolveStatus::IterationLimit;

    let lipschitz = match (config.method, config.nesterov_l) {
        (Method::Nesterov, Some(l)) => T::lit(l),
        (Method::Nesterov, None) => {
            let l = obj.hessian(&x, &cur).map_or(T::zero(), |h| gershgorin_bound(&h) * T::lit(0.5));
            if l > T::zero() {
                l
            } else {
                T::one()
            }
        }
        _ => T::one(),
    };
    let branch = match config.method {
        Method::Bb => Branch::BarzilaiBorwein,
        Method::Nesterov => Branch::Nesterov,
        _ => Branch::Gradient,
    };
    // previous iterate for momentum / BB pairs
    let mut x_prev = x.clone();
    let mut g_prev: Option<Vec<T>> = None;
    let mut last_step = T::one() / cur.grad_norm().max(T::min_positive_value());

    for it in 1..=config.outer_max {
        if cur.grad_norm() <= tol {
            status = SolveStatus::Converged;
            break;
        }
        match config.method {
            Method::Nesterov => {
                // x_{k+1} = y_k + grad(y_k) / L, y_{k+1} = x_{k+1} + (k-1)/(k+2) (x_{k+1} - x_k);
                // `x` holds the extrapolated point y and `cur` its sample.
                let step = T::one() / lipschitz;
                let xn = axpy(&x, step, &cur.gradient);
                let k = T::from_usize_lossy(it);
                let beta = (k - T::one()) / (k + T::lit(2.0));
                let y: Vec<T> = xn.iter().zip(&x_prev).map(|(&a, &b)| a + beta * (a - b)).collect();
                x_prev = xn;
                cur = obj.evaluate(&y)?;
                evals += 1;
                x = y;
                history.records.push(record(it, &cur, step, branch));
            }
            Method::Gradient if config.fixed_step.is_some() => {
                let step = T::lit(config.fixed_step.unwrap_or(1.0));
                x = axpy(&x, step, &cur.gradient);
                cur = obj.evaluate(&x)?;
                evals += 1;
                history.records.push(record(it, &cur, step, branch));
            }
            _ => {
                let s0 = match (config.method, &g_prev) {
                    (Method::Bb, Some(gp)) => {
                        let s: Vec<T> = x.iter().zip(&x_prev).map(|(&a, &b)| a - b).collect();
                        let y: Vec<T> = gp.iter().zip(&cur.gradient).map(|(&a, &b)| a - b).collect();
                        let sy = dot(&s, &y);
                        if sy > T::zero() {
                            dot(&s, &s) / sy
                        } else {
                            last_step
                        }
                    }
                    _ => last_step,
                };
                let d = cur.gradient.clone();
                let mut fell_back = false;
                let Some((step, (xn, sn))) = guarded_step(obj, &x, &cur, &d, s0, &params, &mut evals, &mut fell_back)
                else {
                    status = SolveStatus::Stalled;
                    break;
                };
                last_step = step;
                x_prev = std::mem::replace(&mut x, xn);
                g_prev = Some(std::mem::replace(&mut cur, sn).gradient);
                history.records.push(record(it, &cur, step, branch));
            }
        }
        if it == config.outer_max && cur.grad_norm() <= tol {
            status = SolveStatus::Converged;
        }
    }
    Ok(SolveOutcome { x, sample: cur, history, status, evaluations: evals })
}

/// The dual functional of a fixed atomic/polyline pair.
pub struct TransportObjective<'a, T> {
    pub atoms: &'a AtomicMeasure<T>,
    pub curve: &'a PolylineMeasure<T>,
    pub oracle: OracleMode,
}

impl<T: Scalar> Objective<T> for TransportObjective<'_, T> {
    type State = SegmentTrace<T>;

    fn evaluate(&mut self, x: &[T]) -> Result<Sample<T, SegmentTrace<T>>, SolveError> {
        let phi = DualPotential::for_measure(self.atoms, x.to_vec()).map_err(TransportError::from)?;
        let oracle = build_oracle(self.atoms, &phi, self.oracle);
        let e = evaluate(self.atoms, self.curve, &phi, &oracle)?;
        Ok(Sample { value: e.cost, gradient: e.gradient, empty_cells: e.empty_cells, state: e.trace })
    }

    fn hessian(&mut self, _x: &[T], sample: &Sample<T, SegmentTrace<T>>) -> Option<SparseHessian<T>> {
        Some(hessian(self.atoms, self.curve, &sample.state))
    }
}

/// Optimal potential for the pair, plus its trace and history.
#[derive(Debug, Clone)]
pub struct TransportSolution<T> {
    pub phi: DualPotential<T>,
    pub cost: T,
    pub gradient: Vec<T>,
    pub empty_cells: usize,
    pub trace: SegmentTrace<T>,
    pub history: ConvergenceHistory,
    pub status: SolveStatus,
    pub evaluations: usize,
}

impl<T: Scalar> TransportSolution<T> {
    pub fn grad_norm(&self) -> T {
        dot(&self.gradient, &self.gradient).sqrt()
    }

    fn from_outcome(o: SolveOutcome<T, SegmentTrace<T>>) -> Result<Self, SolveError> {
        Ok(Self {
            phi: DualPotential::new(o.x).map_err(TransportError::from)?,
            cost: o.sample.value,
            gradient: o.sample.gradient,
            empty_cells: o.sample.empty_cells,
            trace: o.sample.state,
            history: o.history,
            status: o.status,
            evaluations: o.evaluations,
        })
    }
}

/// Maximizes the dual functional with L-BFGS or the hybrid method; first-order
/// methods are dispatched to [`solve_first_order`].
pub fn solve<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi_init: &DualPotential<T>,
    config: &SolverConfig,
) -> Result<TransportSolution<T>, SolveError> {
    if config.method.is_first_order() {
        return solve_first_order(atoms, curve, phi_init, config);
    }
    check_start(phi_init.values(), Some(atoms.len()))?;
    let mut obj = TransportObjective { atoms, curve, oracle: config.oracle };
    TransportSolution::from_outcome(maximize(&mut obj, phi_init.values().to_vec(), config)?)
}

pub fn solve_first_order<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi_init: &DualPotential<T>,
    config: &SolverConfig,
) -> Result<TransportSolution<T>, SolveError> {
    check_start(phi_init.values(), Some(atoms.len()))?;
    let mut obj = TransportObjective { atoms, curve, oracle: config.oracle };
    TransportSolution::from_outcome(maximize_first_order(&mut obj, phi_init.values().to_vec(), config)?)
}
