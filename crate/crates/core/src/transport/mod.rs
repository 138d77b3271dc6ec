//! Transport cost between an atomic measure and a polyline measure.
//!
//! For a potential `phi` the dual functional is
//! `g(phi) = sum_(i,a) rho_a * int (|l_a(t) - x_i|^2 - phi_i) dt + sum_i phi_i m_i`,
//! where each integral runs over the parameter interval of segment `a` that
//! lies in the Laguerre cell of `x_i`. `g` is concave and its gradient is
//! `m_i - nu(Lag_i)`.

mod hessian;
mod trace;

use rayon::prelude::*;
use thiserror::Error;

use crate::measures::{AtomicMeasure, DualPotential, MeasureError, PolylineMeasure};
use crate::power_diagram::NeighborOracle;
use crate::scalar::{dist2, Scalar};

pub use hessian::{gershgorin_bound, hessian, HessianFlags, SparseHessian, TANGENT_FLOOR};
pub use trace::{next_crossing, trace_polyline, Crossing, SegmentTrace, TraceEntry, PARALLEL_GUARD};

use trace::{chunk_ranges, Tracer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("tracer stalled on segment {segment} in cell {cell} at t = {t}")]
    TraceStall { segment: usize, cell: usize, t: f64 },
    #[error("potential has {potential} entries but the measure has {atoms} atoms")]
    SizeMismatch { potential: usize, atoms: usize },
    #[error("dimension mismatch: atoms in R^{atoms}, polyline in R^{curve}")]
    DimensionMismatch { atoms: usize, curve: usize },
    #[error("{count} crossings nearly tangent to a cell facet")]
    NearTangentCrossing { count: usize },
    #[error("oracle built for {oracle} sites, measure has {atoms}")]
    OracleMismatch { oracle: usize, atoms: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Value, gradient and trace of the dual functional at one potential.
#[derive(Debug, Clone)]
pub struct TransportEvaluation<T> {
    pub cost: T,
    pub gradient: Vec<T>,
    /// Number of atoms whose cell receives no polyline mass.
    pub empty_cells: usize,
    /// `nu(Lag_i)` for every atom.
    pub cell_masses: Vec<T>,
    pub trace: SegmentTrace<T>,
}

impl<T: Scalar> TransportEvaluation<T> {
    pub fn grad_norm(&self) -> T {
        self.gradient.iter().fold(T::zero(), |a, &g| a + g * g).sqrt()
    }
}

fn check_inputs<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    oracle: &NeighborOracle,
) -> Result<(), TransportError> {
    if phi.len() != atoms.len() {
        return Err(TransportError::SizeMismatch { potential: phi.len(), atoms: atoms.len() });
    }
    if curve.dim() != atoms.dim() {
        return Err(TransportError::DimensionMismatch { atoms: atoms.dim(), curve: curve.dim() });
    }
    if oracle.len() != atoms.len() {
        return Err(TransportError::OracleMismatch { oracle: oracle.len(), atoms: atoms.len() });
    }
    Ok(())
}

/// `int_a^b |l(t) - x|^2 dt` for `l(t) = (1-t) p + t q`, by two-point
/// Gauss-Legendre, which is exact for quadratics.
#[inline]
pub(crate) fn segment_moment2<T: Scalar>(p: &[T], q: &[T], x: &[T], a: T, b: T) -> T {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let off = half * T::lit(1.0 / 3f64.sqrt());
    let mut acc = T::zero();
    for t in [mid - off, mid + off] {
        let mut s = T::zero();
        for k in 0..x.len() {
            let d = (T::one() - t) * p[k] + t * q[k] - x[k];
            s += d * d;
        }
        acc += s;
    }
    acc * half
}

struct ChunkResult<T> {
    entries: Vec<TraceEntry<T>>,
    counts: Vec<usize>,
    cost: T,
}

/// Evaluates `g`, its gradient and the empty-cell count.
///
/// Segments are split into fixed chunks traced in parallel on the current
/// rayon pool; partial sums are merged in chunk order, so the result is the
/// same bit for bit for any number of threads.
pub fn evaluate<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    oracle: &NeighborOracle,
) -> Result<TransportEvaluation<T>, TransportError> {
    check_inputs(atoms, curve, phi, oracle)?;
    let tracer = Tracer { atoms, curve, phi, oracle };
    let ranges = chunk_ranges(curve.segment_count());
    let chunks: Vec<ChunkResult<T>> = ranges
        .into_par_iter()
        .map(|range| {
            let start = range.start;
            let (entries, counts) = tracer.trace_range(range)?;
            let mut cost = T::zero();
            let mut pos = 0;
            for (k, &c) in counts.iter().enumerate() {
                let a = start + k;
                let rho = curve.density(a);
                let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
                let mut seg = T::zero();
                for e in &entries[pos..pos + c] {
                    let x = atoms.position(e.cell);
                    seg += segment_moment2(p, q, x, e.t_start, e.t_end) - phi[e.cell] * e.duration();
                }
                cost += rho * seg;
                pos += c;
            }
            Ok(ChunkResult { entries, counts, cost })
        })
        .collect::<Result<_, TransportError>>()?;

    let n = atoms.len();
    let mut cell_masses = vec![T::zero(); n];
    let mut cost = T::zero();
    let mut entries = Vec::with_capacity(chunks.iter().map(|c| c.entries.len()).sum());
    let mut offsets = Vec::with_capacity(curve.segment_count() + 1);
    offsets.push(0);
    for chunk in chunks {
        cost += chunk.cost;
        for c in chunk.counts {
            offsets.push(offsets[offsets.len() - 1] + c);
        }
        entries.extend(chunk.entries);
    }
    let trace = SegmentTrace::from_parts(entries, offsets);
    for (a, seg) in trace.iter() {
        let rho = curve.density(a);
        for e in seg {
            cell_masses[e.cell] += rho * e.duration();
        }
    }
    for i in 0..n {
        cost += phi[i] * atoms.masses()[i];
    }
    let gradient: Vec<T> = atoms.masses().iter().zip(&cell_masses).map(|(&m, &v)| m - v).collect();
    let empty_cells = cell_masses.iter().filter(|&&v| v == T::zero()).count();
    Ok(TransportEvaluation { cost, gradient, empty_cells, cell_masses, trace })
}

/// Transport cost of a fixed trace, without the gradient.
pub fn cost_of_trace<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    trace: &SegmentTrace<T>,
) -> T {
    let mut cost = T::zero();
    for (a, seg) in trace.iter() {
        let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
        let mut s = T::zero();
        for e in seg {
            s += segment_moment2(p, q, atoms.position(e.cell), e.t_start, e.t_end) - phi[e.cell] * e.duration();
        }
        cost += curve.density(a) * s;
    }
    for i in 0..atoms.len() {
        cost += phi[i] * atoms.masses()[i];
    }
    cost
}

/// Index of the site with the smallest power distance to `y` (smallest index on ties).
pub fn power_owner<T: Scalar>(atoms: &AtomicMeasure<T>, phi: &DualPotential<T>, y: &[T]) -> usize {
    let mut best = 0;
    let mut best_pow = T::infinity();
    for i in 0..atoms.len() {
        let p = dist2(y, atoms.position(i)) - phi[i];
        if p < best_pow {
            best_pow = p;
            best = i;
        }
    }
    best
}
