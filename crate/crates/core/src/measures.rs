//! The two input measures: a weighted point cloud and a measure carried by a polyline.

use thiserror::Error;

use crate::scalar::{dist2, dot, dot_diff, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("coordinate buffer of length {len} is not a multiple of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("expected {expected} weights, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("measure has no atoms")]
    Empty,
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("total mass is zero")]
    ZeroTotalMass,
    #[error("total length of the active segments is zero")]
    ZeroTotalLength,
    #[error("atoms {0} and {1} share the same position")]
    DuplicatePosition(usize, usize),
    #[error("segment {0} carries mass but has zero length")]
    DegenerateSegment(usize),
    #[error("segment {0} must have zero density in disjoint mode")]
    DisjointViolation(usize),
    #[error("potential has {got} entries, measure has {expected} atoms")]
    PotentialLength { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Flat storage of points of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(MeasureError::Dimension(dim));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(MeasureError::Ragged { len: coords.len(), dim });
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(MeasureError::NonFinite(k / dim));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(2);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(MeasureError::Ragged { len: r.len(), dim });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn point_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn translated(&self, shift: &[T]) -> Self {
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            for (c, &s) in p.iter_mut().zip(shift) {
                *c += s;
            }
        }
        out
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = vec![T::infinity(); self.dim];
        let mut hi = vec![T::neg_infinity(); self.dim];
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

fn check_weights<T: Scalar>(weights: &[T], expected: usize) -> Result<()> {
    if weights.len() != expected {
        return Err(MeasureError::LengthMismatch { expected, got: weights.len() });
    }
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(MeasureError::NonFinite(index));
        }
        if w < T::zero() {
            return Err(MeasureError::NegativeWeight { index, value: w.as_f64() });
        }
    }
    Ok(())
}

fn normalize_weights<T: Scalar>(weights: &mut [T]) -> Result<()> {
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(MeasureError::ZeroTotalMass);
    }
    // Already a probability: keep the stored bits.
    if (total - T::one()).abs() <= T::lit(1e-12) {
        return Ok(());
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// A finite sum of weighted Dirac masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure<T> {
    positions: PointSet<T>,
    masses: Vec<T>,
}

impl<T: Scalar> AtomicMeasure<T> {
    /// Validates the atoms and rescales the masses to a probability.
    pub fn new(positions: PointSet<T>, masses: Vec<T>) -> Result<Self> {
        if positions.is_empty() {
            return Err(MeasureError::Empty);
        }
        check_weights(&masses, positions.len())?;
        if let Some((i, j)) = find_duplicate(&positions) {
            return Err(MeasureError::DuplicatePosition(i, j));
        }
        Self { positions, masses }.normalize()
    }

    pub fn uniform(positions: PointSet<T>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![T::one(); n])
    }

    pub fn normalize(mut self) -> Result<Self> {
        normalize_weights(&mut self.masses)?;
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[T] {
        self.positions.point(i)
    }

    pub fn positions(&self) -> &PointSet<T> {
        &self.positions
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn translated(&self, shift: &[T]) -> Self {
        Self { positions: self.positions.translated(shift), masses: self.masses.clone() }
    }
}

fn find_duplicate<T: Scalar>(points: &PointSet<T>) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points
            .point(a)
            .iter()
            .zip(points.point(b))
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.windows(2).find_map(|w| (points.point(w[0]) == points.point(w[1])).then(|| (w[0].min(w[1]), w[0].max(w[1]))))
}

/// A probability measure carried by the segments of a polyline.
///
/// `densities[a]` is the total mass of segment `a` (from vertex `a` to vertex
/// `a + 1`), i.e. the push-forward of the unit Lebesgue measure on `[0, 1]`
/// scaled by that weight. The per-unit-length density is `densities[a] / length(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylineMeasure<T> {
    vertices: PointSet<T>,
    densities: Vec<T>,
    disjoint_mode: bool,
}

impl<T: Scalar> PolylineMeasure<T> {
    pub fn new(vertices: PointSet<T>, densities: Vec<T>, disjoint_mode: bool) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(MeasureError::TooFewVertices(vertices.len()));
        }
        let p = vertices.len() - 1;
        check_weights(&densities, p)?;
        for (a, &rho) in densities.iter().enumerate() {
            if disjoint_mode && a % 2 == 1 && rho != T::zero() {
                return Err(MeasureError::DisjointViolation(a));
            }
            if rho > T::zero() && dist2(vertices.point(a), vertices.point(a + 1)) == T::zero() {
                return Err(MeasureError::DegenerateSegment(a));
            }
        }
        Self { vertices, densities, disjoint_mode }.normalize()
    }

    /// Polyline whose segment masses are proportional to segment lengths.
    pub fn from_vertices(vertices: PointSet<T>, disjoint_mode: bool) -> Result<Self> {
        let densities = density_from_lengths(&vertices, disjoint_mode)?;
        Self::new(vertices, densities, disjoint_mode)
    }

    pub fn normalize(mut self) -> Result<Self> {
        normalize_weights(&mut self.densities)?;
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.vertices.dim()
    }

    /// Number of segments.
    #[inline]
    pub fn segment_count(&self) -> usize {
        self.densities.len()
    }

    #[inline]
    pub fn vertex(&self, v: usize) -> &[T] {
        self.vertices.point(v)
    }

    pub fn vertices(&self) -> &PointSet<T> {
        &self.vertices
    }

    pub fn densities(&self) -> &[T] {
        &self.densities
    }

    #[inline]
    pub fn density(&self, segment: usize) -> T {
        self.densities[segment]
    }

    pub fn disjoint_mode(&self) -> bool {
        self.disjoint_mode
    }

    /// Whether a segment belongs to the support. Gaps between filaments are
    /// inactive in disjoint mode.
    #[inline]
    pub fn is_active(&self, segment: usize) -> bool {
        !(self.disjoint_mode && segment % 2 == 1)
    }

    pub fn segment_length(&self, segment: usize) -> T {
        dist2(self.vertex(segment), self.vertex(segment + 1)).sqrt()
    }

    pub fn translated(&self, shift: &[T]) -> Self {
        Self {
            vertices: self.vertices.translated(shift),
            densities: self.densities.clone(),
            disjoint_mode: self.disjoint_mode,
        }
    }

    /// Replaces the vertices and recomputes length-proportional densities.
    pub fn with_vertices(&self, vertices: PointSet<T>) -> Result<Self> {
        Self::from_vertices(vertices, self.disjoint_mode)
    }
}

/// Segment masses proportional to segment lengths. In disjoint mode only
/// even segments carry mass; odd ones are gaps.
pub fn density_from_lengths<T: Scalar>(vertices: &PointSet<T>, disjoint_mode: bool) -> Result<Vec<T>> {
    if vertices.len() < 2 {
        return Err(MeasureError::TooFewVertices(vertices.len()));
    }
    let p = vertices.len() - 1;
    let lengths: Vec<T> = (0..p)
        .map(|a| {
            if disjoint_mode && a % 2 == 1 {
                T::zero()
            } else {
                dist2(vertices.point(a), vertices.point(a + 1)).sqrt()
            }
        })
        .collect();
    let total: T = lengths.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(MeasureError::ZeroTotalLength);
    }
    Ok(lengths.into_iter().map(|l| l / total).collect())
}

/// A segment direction nearly orthogonal to the difference of two atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GenericityViolation {
    pub segment: usize,
    pub i: usize,
    pub j: usize,
}

/// Lists every `(segment, i, j)` with `i < j` such that
/// `|<P[a+1] - P[a], x_i - x_j>| <= tolerance * |P[a+1] - P[a]| * |x_i - x_j|`.
///
/// Quadratic in the number of atoms; meant for small inputs.
pub fn check_genericity<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    tolerance: T,
) -> Vec<GenericityViolation> {
    let n = atoms.len();
    let d = atoms.dim();
    let mut out = Vec::new();
    let mut dir = vec![T::zero(); d];
    for a in 0..curve.segment_count() {
        let (p0, p1) = (curve.vertex(a), curve.vertex(a + 1));
        for k in 0..d {
            dir[k] = p1[k] - p0[k];
        }
        let len = dot(&dir, &dir).sqrt();
        for i in 0..n {
            for j in i + 1..n {
                let (xi, xj) = (atoms.position(i), atoms.position(j));
                let ip = dot_diff(&dir, xi, xj).abs();
                if ip <= tolerance * len * dist2(xi, xj).sqrt() {
                    out.push(GenericityViolation { segment: a, i, j });
                }
            }
        }
    }
    out
}

/// Kantorovich potential, one entry per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential<T> {
    values: Vec<T>,
}

impl<T: Scalar> DualPotential<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite(k));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![T::zero(); n] }
    }

    pub fn for_measure(atoms: &AtomicMeasure<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != atoms.len() {
            return Err(MeasureError::PotentialLength { expected: atoms.len(), got: values.len() });
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest entry (smallest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

impl<T> std::ops::Index<usize> for DualPotential<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}
