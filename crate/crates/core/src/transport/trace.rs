//! Following segments through the Laguerre tessellation.

use std::ops::Range;

use crate::measures::{AtomicMeasure, DualPotential, PolylineMeasure};
use crate::power_diagram::NeighborOracle;
use crate::scalar::{dist2, Scalar};

use super::TransportError;

/// Relative guard below which a segment is treated as parallel to a bisector.
pub const PARALLEL_GUARD: f64 = 1e-14;

/// Segments handled by one tracing job. Fixed so that results do not depend
/// on the number of worker threads.
pub(crate) const CHUNK_SEGMENTS: usize = 32;

/// One interval `[t_start, t_end]` of a segment lying in the cell of `cell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub cell: usize,
    pub t_start: T,
    pub t_end: T,
}

impl<T: Scalar> TraceEntry<T> {
    #[inline]
    pub fn duration(&self) -> T {
        self.t_end - self.t_start
    }
}

/// Per-segment ordered intervals. Segments skipped in disjoint mode have no entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrace<T> {
    entries: Vec<TraceEntry<T>>,
    offsets: Vec<usize>,
}

impl<T: Scalar> SegmentTrace<T> {
    pub(crate) fn from_parts(entries: Vec<TraceEntry<T>>, offsets: Vec<usize>) -> Self {
        debug_assert_eq!(offsets.first(), Some(&0));
        Self { entries, offsets }
    }

    pub fn segment_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn segment(&self, a: usize) -> &[TraceEntry<T>] {
        &self.entries[self.offsets[a]..self.offsets[a + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[TraceEntry<T>])> + '_ {
        (0..self.segment_count()).map(move |a| (a, self.segment(a)))
    }

    pub fn entries(&self) -> &[TraceEntry<T>] {
        &self.entries
    }

    /// Copy without intervals shorter than `min_len`, with runs of the same
    /// cell merged. Used to compare traces that differ only in
    /// corner-resolution slivers.
    pub fn simplified(&self, min_len: T) -> Self {
        let mut entries: Vec<TraceEntry<T>> = Vec::with_capacity(self.entries.len());
        let mut offsets = vec![0];
        for (_, seg) in self.iter() {
            let begin = entries.len();
            for e in seg {
                if e.duration() < min_len {
                    continue;
                }
                match entries[begin..].last_mut() {
                    Some(last) if last.cell == e.cell => last.t_end = e.t_end,
                    Some(last) => {
                        // absorb the dropped sliver into the earlier interval
                        last.t_end = e.t_start;
                        entries.push(*e);
                    }
                    None => entries.push(TraceEntry { t_start: T::zero(), ..*e }),
                }
            }
            if let Some(last) = entries[begin..].last_mut() {
                last.t_end = T::one();
            }
            offsets.push(entries.len());
        }
        Self { entries, offsets }
    }
}

/// Result of searching the exit of the current cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing<T> {
    /// The segment leaves into `cell` at parameter `t`.
    Enter { cell: usize, t: T },
    /// No candidate is crossed before the end of the segment.
    SegmentEnds,
}

/// Finds where the segment `from -> to`, currently at parameter `t_now` in
/// the cell of `current`, leaves that cell.
///
/// For a candidate `m` the power distances to `current` and `m` are equal at
/// `t_m = (pow_m(from) - pow_j(from)) / (2 <to - from, x_m - x_j>)`. Only
/// candidates the segment moves towards (positive denominator) can be
/// entered; the earliest `t_m` in `(t_now, 1]` wins. A root that rounding
/// placed before `t_now` is clamped to `t_now`. Ties go to the candidate with
/// the largest `<to - from, x_m - x_j>`, then the smallest index.
#[allow(clippy::too_many_arguments)]
pub fn next_crossing<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    phi: &DualPotential<T>,
    oracle: &NeighborOracle,
    from: &[T],
    to: &[T],
    current: usize,
    previous: Option<usize>,
    t_now: T,
) -> Crossing<T> {
    let d = atoms.dim();
    let xj = atoms.position(current);
    let pow_j = dist2(from, xj) - phi[current];
    let mut dir = [T::zero(); 3];
    for k in 0..d {
        dir[k] = to[k] - from[k];
    }
    let dir_len2 = dir[..d].iter().fold(T::zero(), |a, &c| a + c * c);
    let guard2 = T::lit(4.0 * PARALLEL_GUARD * PARALLEL_GUARD) * dir_len2;
    let two = T::lit(2.0);

    let mut best: Option<(T, T, usize)> = None;
    for m in oracle.candidates(current) {
        if m == current || Some(m) == previous {
            continue;
        }
        let xm = atoms.position(m);
        let mut slope = T::zero();
        let mut sep2 = T::zero();
        for k in 0..d {
            let diff = xm[k] - xj[k];
            slope += dir[k] * diff;
            sep2 += diff * diff;
        }
        let denom = two * slope;
        if denom <= T::zero() || denom * denom <= guard2 * sep2 {
            continue;
        }
        let numer = (dist2(from, xm) - phi[m]) - pow_j;
        let mut t = numer / denom;
        if t > T::one() {
            continue;
        }
        if t < t_now {
            t = t_now;
        }
        let better = match best {
            None => true,
            Some((bt, bs, bm)) => t < bt || (t == bt && (slope > bs || (slope == bs && m < bm))),
        };
        if better {
            best = Some((t, slope, m));
        }
    }
    match best {
        Some((t, _, cell)) => Crossing::Enter { cell, t },
        None => Crossing::SegmentEnds,
    }
}

pub(crate) struct Tracer<'a, T> {
    pub atoms: &'a AtomicMeasure<T>,
    pub curve: &'a PolylineMeasure<T>,
    pub phi: &'a DualPotential<T>,
    pub oracle: &'a NeighborOracle,
}

impl<T: Scalar> Tracer<'_, T> {
    /// Traces the straight path `from -> to` starting in `start`, appending
    /// the visited intervals to `out` when given. Returns the final cell.
    pub fn trace_path(
        &self,
        from: &[T],
        to: &[T],
        start: usize,
        segment: usize,
        mut out: Option<&mut Vec<TraceEntry<T>>>,
    ) -> Result<usize, TransportError> {
        let n = self.atoms.len();
        let mut cur = start;
        let mut prev = None;
        let mut t = T::zero();
        let mut stalled = 0usize;
        loop {
            match next_crossing(self.atoms, self.phi, self.oracle, from, to, cur, prev, t) {
                Crossing::SegmentEnds => {
                    if let Some(out) = out.as_deref_mut() {
                        out.push(TraceEntry { cell: cur, t_start: t, t_end: T::one() });
                    }
                    return Ok(cur);
                }
                Crossing::Enter { cell, t: next } => {
                    if !(next > t) {
                        stalled += 1;
                        if stalled > n + 1 || next.is_nan() {
                            return Err(TransportError::TraceStall { segment, cell, t: t.as_f64() });
                        }
                    } else {
                        stalled = 0;
                    }
                    if let Some(out) = out.as_deref_mut() {
                        out.push(TraceEntry { cell: cur, t_start: t, t_end: next });
                    }
                    prev = Some(cur);
                    cur = cell;
                    t = next;
                }
            }
        }
    }

    /// Cell containing vertex `v`, found by tracing from the site with the
    /// largest potential, which always owns its own position.
    pub fn locate_vertex(&self, v: usize) -> Result<usize, TransportError> {
        let l = self.phi.argmax();
        let origin = self.atoms.position(l).to_vec();
        self.trace_path(&origin, self.curve.vertex(v), l, v, None)
    }

    /// Traces the segments in `range`; the first one locates its start cell
    /// with a path from the heaviest site.
    pub fn trace_range(&self, range: Range<usize>) -> Result<(Vec<TraceEntry<T>>, Vec<usize>), TransportError> {
        let mut entries = Vec::with_capacity(range.len() * 4);
        let mut counts = Vec::with_capacity(range.len());
        let mut cell = self.locate_vertex(range.start)?;
        for a in range {
            let begin = entries.len();
            let (from, to) = (self.curve.vertex(a), self.curve.vertex(a + 1));
            cell = if self.curve.is_active(a) {
                self.trace_path(from, to, cell, a, Some(&mut entries))?
            } else {
                self.trace_path(from, to, cell, a, None)?
            };
            counts.push(entries.len() - begin);
        }
        Ok((entries, counts))
    }
}

pub(crate) fn chunk_ranges(p: usize) -> Vec<Range<usize>> {
    let chunks = p.div_ceil(CHUNK_SEGMENTS).max(1);
    let base = p / chunks;
    let extra = p % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut s = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < extra);
        out.push(s..s + len);
        s += len;
    }
    out
}

/// Intervals of every segment with its Laguerre cells.
pub fn trace_polyline<T: Scalar>(
    atoms: &AtomicMeasure<T>,
    curve: &PolylineMeasure<T>,
    phi: &DualPotential<T>,
    oracle: &NeighborOracle,
) -> Result<SegmentTrace<T>, TransportError> {
    let tracer = Tracer { atoms, curve, phi, oracle };
    let p = curve.segment_count();
    let mut entries = Vec::new();
    let mut offsets = vec![0];
    for range in chunk_ranges(p) {
        let (e, counts) = tracer.trace_range(range)?;
        entries.extend(e);
        for c in counts {
            offsets.push(offsets.last().copied().unwrap_or(0) + c);
        }
    }
    Ok(SegmentTrace::from_parts(entries, offsets))
}
