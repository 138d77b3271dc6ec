//! Sparse second derivative of the dual functional.

use crate::measures::{AtomicMeasure, PolylineMeasure};
use crate::scalar::{dist2, dot_diff, Scalar};

use super::{SegmentTrace, TransportError};

/// Floor applied to `|cos theta|` between a segment and a site pair.
pub const TANGENT_FLOOR: f64 = 1e-10;

/// Irregularities met while assembling; a flagged Hessian is not a reliable
/// Newton model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HessianFlags {
    /// Crossings with `|cos theta|` below the floor (entry clamped).
    pub near_tangent: usize,
    /// Zero-length intervals strictly inside a segment, i.e. passes through
    /// a junction of three or more cells.
    pub corner_crossings: usize,
}

impl HessianFlags {
    pub fn is_regular(&self) -> bool {
        self.near_tangent == 0 && self.corner_crossings == 0
    }
}

/// Symmetric matrix with rows summing to zero: nonnegative off-diagonal
/// entries stored by row, diagonal equal to minus the row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHessian<T> {
    n: usize,
    diag: Vec<T>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    flags: HessianFlags,
}

impl<T: Scalar> SparseHessian<T> {
    /// Assembles from off-diagonal contributions `(i, j, v)`; duplicates add up
    /// in input order.
    pub fn from_pairs(n: usize, mut pairs: Vec<(usize, usize, T)>, flags: HessianFlags) -> Self {
        let mut sym = Vec::with_capacity(pairs.len() * 2);
        for (i, j, v) in pairs.drain(..) {
            debug_assert_ne!(i, j);
            sym.push((i, j, v));
            sym.push((j, i, v));
        }
        sym.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(sym.len());
        let mut vals: Vec<T> = Vec::with_capacity(sym.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sym {
            if last == Some((i, j)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let diag = (0..n).map(|i| -vals[row_ptr[i]..row_ptr[i + 1]].iter().fold(T::zero(), |a, &v| a + v)).collect();
        Self { n, diag, row_ptr, cols, vals, flags }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_pairs(n, Vec::new(), HessianFlags::default())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn flags(&self) -> HessianFlags {
        self.flags
    }

    /// Fails when any crossing had to be clamped.
    pub fn require_regular(&self) -> Result<(), TransportError> {
        if self.flags.near_tangent > 0 {
            Err(TransportError::NearTangentCrossing { count: self.flags.near_tangent })
        } else {
            Ok(())
        }
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }

    /// Off-diagonal entries of row `i` as `(column, value)`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.diag[i];
        }
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn nnz_off_diagonal(&self) -> usize {
        self.vals.len()
    }

    /// `out = H x`. Off-diagonal terms are summed before the diagonal, in the
    /// same order as the diagonal was built, so `H 1` is exactly zero.
    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[i] = acc + self.diag[i] * x[i];
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); self.n]; self.n];
        for i in 0..self.n {
            m[i][i] = self.diag[i];
            for (j, v) in self.row(i) {
                m[i][j] = v;
            }
        }
        m
    }
}

/// Hessian of the dual functional with respect to the potential.
///
/// Each crossing from cell `i` to cell `j` on segment `a` contributes
/// `rho_a / (2 |x_j - x_i| |cos theta| L_a) = rho_a / (2 |<P_(a+1) - P_a, x_j - x_i>|)`
/// to `H_ij`. Segments without mass contribute nothing.
pub fn hessian<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    trace: &SegmentTrace<T>,
) -> SparseHessian<T> {
    let floor = T::lit(TANGENT_FLOOR);
    let two = T::lit(2.0);
    let mut flags = HessianFlags::default();
    let mut pairs = Vec::new();
    for (a, seg) in trace.iter() {
        let rho = curve.density(a);
        if !(rho > T::zero()) || seg.len() < 2 {
            continue;
        }
        let (p, q) = (curve.vertex(a), curve.vertex(a + 1));
        let len = dist2(p, q).sqrt();
        let last = seg.len() - 1;
        for (k, w) in seg.windows(2).enumerate() {
            if k + 1 < last && w[1].t_start == w[1].t_end {
                flags.corner_crossings += 1;
            }
            let (i, j) = (w[0].cell, w[1].cell);
            let (xi, xj) = (atoms.position(i), atoms.position(j));
            let sep = dist2(xi, xj).sqrt();
            let mut v = Vec::with_capacity(p.len());
            v.extend(q.iter().zip(p).map(|(&b, &a0)| b - a0));
            let mut proj = dot_diff(&v, xj, xi).abs();
            if proj < floor * len * sep {
                flags.near_tangent += 1;
                proj = floor * len * sep;
            }
            pairs.push((i, j, rho / (two * proj)));
        }
    }
    SparseHessian::from_pairs(atoms.len(), pairs, flags)
}

/// `2 max_i sum_(j != i) |H_ij|`, an upper bound on the spectral radius.
pub fn gershgorin_bound<T: Scalar>(h: &SparseHessian<T>) -> T {
    let mut best = T::zero();
    for i in 0..h.dim() {
        let s = h.row(i).fold(T::zero(), |a, (_, v)| a + v.abs());
        if s > best {
            best = s;
        }
    }
    T::lit(2.0) * best
}
