//! Candidate neighbor sets of Laguerre cells.
//!
//! The segment tracer only needs, for each cell, a list of indices that
//! contains every cell sharing a facet with it. Extra candidates cost time,
//! never correctness, so cell polytopes are never built. The adjacency lists
//! come from the regular triangulation of the weighted sites, computed by
//! Bowyer-Watson insertion with a power (lifted) conflict test. All
//! predicates run in `f64` whatever the scalar type of the measures.

use crate::measures::{AtomicMeasure, DualPotential};
use crate::scalar::Scalar;

const NONE: usize = usize::MAX;

/// How candidate neighbors are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Neighbors in the regular triangulation.
    #[default]
    Adjacency,
    /// Every other site is a candidate.
    BruteForce,
}

#[derive(Debug, Clone)]
pub struct NeighborOracle {
    mode: OracleMode,
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    hidden: Vec<bool>,
    fell_back: bool,
}

/// Iterator over the candidate neighbors of one cell.
pub enum Candidates<'a> {
    List(std::slice::Iter<'a, usize>),
    All(std::ops::Range<usize>),
}

impl Iterator for Candidates<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        match self {
            Candidates::List(it) => it.next().copied(),
            Candidates::All(r) => r.next(),
        }
    }
}

impl NeighborOracle {
    pub fn brute_force(n: usize) -> Self {
        Self {
            mode: OracleMode::BruteForce,
            n,
            offsets: Vec::new(),
            neighbors: Vec::new(),
            hidden: vec![false; n],
            fell_back: false,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when adjacency was requested but the triangulation could not be
    /// built and the brute-force lists are used instead.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    /// Sites whose power cell is empty as a polytope. Always false in brute-force mode.
    pub fn is_hidden(&self, i: usize) -> bool {
        self.hidden[i]
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden.iter().filter(|&&h| h).count()
    }

    /// Candidate neighbors of cell `i`. In brute-force mode this includes `i`
    /// itself; callers skip it.
    #[inline]
    pub fn candidates(&self, i: usize) -> Candidates<'_> {
        match self.mode {
            OracleMode::BruteForce => Candidates::All(0..self.n),
            OracleMode::Adjacency => Candidates::List(self.neighbors[self.offsets[i]..self.offsets[i + 1]].iter()),
        }
    }

    /// Adjacency list of `i` (empty slice in brute-force mode).
    pub fn neighbor_list(&self, i: usize) -> &[usize] {
        match self.mode {
            OracleMode::BruteForce => &[],
            OracleMode::Adjacency => &self.neighbors[self.offsets[i]..self.offsets[i + 1]],
        }
    }

    fn from_lists(lists: Vec<Vec<usize>>, hidden: Vec<bool>) -> Self {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for l in lists {
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        Self { mode: OracleMode::Adjacency, n, offsets, neighbors, hidden, fell_back: false }
    }
}

/// Builds the neighbor oracle for sites `atoms` weighted by `phi`.
///
/// Adjacency mode never fails: if the triangulation breaks down the oracle
/// falls back to brute force and records it in [`NeighborOracle::fell_back`].
pub fn build_oracle<T: Scalar>(atoms: &AtomicMeasure<T>, phi: &DualPotential<T>, mode: OracleMode) -> NeighborOracle {
    let n = atoms.len();
    assert_eq!(phi.len(), n, "potential length must match the number of atoms");
    if mode == OracleMode::BruteForce || n == 1 {
        let mut o = NeighborOracle::brute_force(n);
        if n == 1 {
            o.mode = mode;
            o.offsets = vec![0, 0];
        }
        return o;
    }
    let points: Vec<f64> = atoms.positions().coords().iter().map(|c| c.as_f64()).collect();
    let weights: Vec<f64> = phi.values().iter().map(|w| w.as_f64()).collect();
    match RegularTriangulation::build(atoms.dim(), &points, &weights) {
        Ok(tri) => tri.into_oracle(),
        Err(_) => {
            let mut o = NeighborOracle::brute_force(n);
            o.fell_back = true;
            o
        }
    }
}

#[derive(Debug)]
pub(crate) struct TriangulationFailure;

/// Regular triangulation of weighted points in dimension 2 or 3.
pub(crate) struct RegularTriangulation {
    dim: usize,
    n_real: usize,
    pts: Vec<f64>,
    wts: Vec<f64>,
    verts: Vec<usize>,
    nbrs: Vec<usize>,
    alive: Vec<bool>,
    free: Vec<usize>,
    hidden: Vec<bool>,
    last: usize,
    stamp: Vec<u32>,
    epoch: u32,
    scratch: Scratch,
}

/// Buffers reused across insertions.
#[derive(Default)]
struct Scratch {
    cavity: Vec<usize>,
    boundary: Vec<(usize, usize)>,
    touched: Vec<usize>,
    on_boundary: Vec<usize>,
    ridges: Vec<((usize, usize), (usize, usize))>,
    created: Vec<(usize, usize)>,
}

impl RegularTriangulation {
    pub(crate) fn build(dim: usize, points: &[f64], weights: &[f64]) -> Result<Self, TriangulationFailure> {
        let n = weights.len();
        let k = dim + 1;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for c in 0..dim {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let diag = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let (wmin, wmax) = weights.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
        let spread = diag.max((wmax - wmin).max(0.0).sqrt()).max(1e-12);
        let radius = 1e3 * spread;
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();

        let mut pts = points.to_vec();
        let mut wts = weights.to_vec();
        // Super simplex with inradius 3 * radius, weight of the lightest site.
        let dirs: Vec<Vec<f64>> = if dim == 2 {
            [90.0f64, 210.0, 330.0]
                .iter()
                .map(|a| {
                    let r = a.to_radians();
                    vec![6.0 * r.cos(), 6.0 * r.sin()]
                })
                .collect()
        } else {
            let s = 3.0 * 3.0f64.sqrt();
            vec![vec![s, s, s], vec![s, -s, -s], vec![-s, s, -s], vec![-s, -s, s]]
        };
        for d in &dirs {
            for c in 0..dim {
                pts.push(center[c] + radius * d[c]);
            }
            wts.push(wmin);
        }

        let mut tri = Self {
            dim,
            n_real: n,
            pts,
            wts,
            verts: Vec::new(),
            nbrs: Vec::new(),
            alive: Vec::new(),
            free: Vec::new(),
            hidden: vec![false; n],
            last: 0,
            stamp: Vec::new(),
            epoch: 0,
            scratch: Scratch::default(),
        };
        let expected = if dim == 2 { 2 * n + 8 } else { 7 * n + 16 };
        tri.verts.reserve(expected * k);
        tri.nbrs.reserve(expected * k);
        tri.alive.reserve(expected);
        tri.stamp.reserve(expected);
        let mut first: Vec<usize> = (n..n + k).collect();
        if tri.orient(&first) < 0.0 {
            first.swap(0, 1);
        }
        tri.push_simplex(&first, &vec![NONE; k]);

        for q in insertion_order(dim, points, n) {
            tri.insert(q)?;
        }
        Ok(tri)
    }

    #[inline]
    fn p(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn simplex(&self, s: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.verts[s * k..(s + 1) * k]
    }

    fn push_simplex(&mut self, v: &[usize], nb: &[usize]) -> usize {
        let k = self.dim + 1;
        if let Some(s) = self.free.pop() {
            self.verts[s * k..(s + 1) * k].copy_from_slice(v);
            self.nbrs[s * k..(s + 1) * k].copy_from_slice(nb);
            self.alive[s] = true;
            self.stamp[s] = 0;
            s
        } else {
            self.verts.extend_from_slice(v);
            self.nbrs.extend_from_slice(nb);
            self.alive.push(true);
            self.stamp.push(0);
            self.alive.len() - 1
        }
    }

    /// Signed volume (times d!) of the simplex with vertex list `v`.
    fn orient(&self, v: &[usize]) -> f64 {
        let a = self.p(v[0]);
        if self.dim == 2 {
            let (b, c) = (self.p(v[1]), self.p(v[2]));
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        } else {
            let (b, c, d) = (self.p(v[1]), self.p(v[2]), self.p(v[3]));
            let (bx, by, bz) = (b[0] - a[0], b[1] - a[1], b[2] - a[2]);
            let (cx, cy, cz) = (c[0] - a[0], c[1] - a[1], c[2] - a[2]);
            let (dx, dy, dz) = (d[0] - a[0], d[1] - a[1], d[2] - a[2]);
            bx * (cy * dz - cz * dy) - by * (cx * dz - cz * dx) + bz * (cx * dy - cy * dx)
        }
    }

    /// Orientation of simplex `s` with its `slot`-th vertex replaced by `q`.
    fn orient_replaced(&self, s: usize, slot: usize, q: usize) -> f64 {
        let mut v = [0usize; 4];
        let sv = self.simplex(s);
        v[..sv.len()].copy_from_slice(sv);
        v[slot] = q;
        self.orient(&v[..sv.len()])
    }

    /// Whether the lifted point of `q` lies strictly below the lifted
    /// hyperplane of simplex `s`.
    fn in_conflict(&self, s: usize, q: usize) -> bool {
        let d = self.dim;
        let x = self.p(q);
        let wq = self.wts[q];
        // rows (r_k, h_k) relative to q; the query sits at the origin with height 0.
        // The lifted plane has height det[r | h] / det[r | 1] at the origin.
        let mut r = [[0.0f64; 3]; 4];
        let mut h = [0.0f64; 4];
        for (row, &vk) in self.simplex(s).iter().enumerate() {
            let pk = self.p(vk);
            let mut hh = 0.0;
            for c in 0..d {
                let v = pk[c] - x[c];
                r[row][c] = v;
                hh += v * v;
            }
            h[row] = hh - self.wts[vk] + wq;
        }
        let (num, den) = if d == 2 { (det3(&r, &h), det3(&r, &[1.0; 4])) } else { (det4(&r, &h), det4(&r, &[1.0; 4])) };
        num * den > 0.0
    }

    fn locate(&self, q: usize) -> Result<usize, TriangulationFailure> {
        let k = self.dim + 1;
        let mut s = self.last;
        if !self.alive[s] {
            s = self.alive.iter().position(|&a| a).ok_or(TriangulationFailure)?;
        }
        let budget = 64 + 4 * self.alive.len();
        for turn in 0..budget {
            let mut moved = false;
            for off in 0..k {
                let slot = (off + turn) % k;
                if self.orient_replaced(s, slot, q) < 0.0 {
                    let nb = self.nbrs[s * k + slot];
                    if nb == NONE {
                        return Err(TriangulationFailure);
                    }
                    s = nb;
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Ok(s);
            }
        }
        Err(TriangulationFailure)
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    fn restamp(&mut self, set: &[usize]) -> u32 {
        let ep = self.next_epoch();
        for &s in set {
            self.stamp[s] = ep;
        }
        ep
    }

    fn insert(&mut self, q: usize) -> Result<(), TriangulationFailure> {
        let k = self.dim + 1;
        let start = self.locate(q)?;
        if !self.in_conflict(start, q) {
            self.hidden[q] = true;
            self.last = start;
            return Ok(());
        }

        // conflict region, grown breadth-first from the containing simplex
        let mut ep = self.next_epoch();
        let mut cavity = std::mem::take(&mut self.scratch.cavity);
        cavity.clear();
        cavity.push(start);
        self.stamp[start] = ep;
        let mut head = 0;
        while head < cavity.len() {
            let s = cavity[head];
            head += 1;
            for slot in 0..k {
                let nb = self.nbrs[s * k + slot];
                if nb != NONE && self.stamp[nb] != ep && self.in_conflict(nb, q) {
                    self.stamp[nb] = ep;
                    cavity.push(nb);
                }
            }
        }

        // Every boundary facet must see q strictly on its inner side. Rounding
        // can break this; shrink the region, or grow it around the start simplex.
        let mut clean = false;
        for _ in 0..64 {
            let mut grow = Vec::new();
            let mut removed = false;
            let mut i = 0;
            while i < cavity.len() {
                let s = cavity[i];
                let bad = (0..k).find(|&slot| {
                    let nb = self.nbrs[s * k + slot];
                    (nb == NONE || self.stamp[nb] != ep) && self.orient_replaced(s, slot, q) <= 0.0
                });
                match bad {
                    None => i += 1,
                    Some(slot) if s == start => {
                        let nb = self.nbrs[s * k + slot];
                        if nb == NONE {
                            return Err(TriangulationFailure);
                        }
                        grow.push(nb);
                        i += 1;
                    }
                    Some(_) => {
                        self.stamp[s] = 0;
                        cavity.swap_remove(i);
                        removed = true;
                    }
                }
            }
            if grow.is_empty() && !removed {
                clean = true;
                break;
            }
            for nb in grow {
                if self.stamp[nb] != ep {
                    self.stamp[nb] = ep;
                    cavity.push(nb);
                }
            }
            if removed {
                // keep the part connected to the start simplex
                let member = self.restamp(&cavity);
                let mut kept = vec![start];
                let ep_kept = self.next_epoch();
                self.stamp[start] = ep_kept;
                let mut h = 0;
                while h < kept.len() {
                    let s = kept[h];
                    h += 1;
                    for slot in 0..k {
                        let nb = self.nbrs[s * k + slot];
                        if nb != NONE && self.stamp[nb] == member {
                            self.stamp[nb] = ep_kept;
                            kept.push(nb);
                        }
                    }
                }
                cavity = kept;
            }
            ep = self.restamp(&cavity);
        }
        if !clean {
            return Err(TriangulationFailure);
        }
        self.finish_insert(q, cavity, ep)
    }

    fn finish_insert(&mut self, q: usize, cavity: Vec<usize>, ep: u32) -> Result<(), TriangulationFailure> {
        let k = self.dim + 1;
        let mut boundary = std::mem::take(&mut self.scratch.boundary);
        let mut touched = std::mem::take(&mut self.scratch.touched);
        boundary.clear();
        touched.clear();
        for &s in &cavity {
            for slot in 0..k {
                let nb = self.nbrs[s * k + slot];
                if nb == NONE || self.stamp[nb] != ep {
                    boundary.push((s, slot));
                }
            }
            touched.extend_from_slice(self.simplex(s));
        }
        touched.sort_unstable();
        touched.dedup();
        let mut on_boundary = std::mem::take(&mut self.scratch.on_boundary);
        on_boundary.clear();
        for &(s, slot) in &boundary {
            for (j, &v) in self.simplex(s).iter().enumerate() {
                if j != slot {
                    on_boundary.push(v);
                }
            }
        }
        on_boundary.sort_unstable();
        on_boundary.dedup();
        for &v in &touched {
            if on_boundary.binary_search(&v).is_err() {
                if v >= self.n_real {
                    return Err(TriangulationFailure);
                }
                self.hidden[v] = true;
            }
        }

        // new simplices: each boundary facet joined to q
        // open ridges awaiting their second simplex; few per insertion
        let mut ridge_map = std::mem::take(&mut self.scratch.ridges);
        let mut created = std::mem::take(&mut self.scratch.created);
        ridge_map.clear();
        created.clear();
        let mut v = [0usize; 4];
        let mut nb_init = [NONE; 4];
        for &(s, slot) in &boundary {
            v[..k].copy_from_slice(self.simplex(s));
            v[slot] = q;
            let outer = self.nbrs[s * k + slot];
            nb_init[..k].iter_mut().for_each(|x| *x = NONE);
            nb_init[slot] = outer;
            let t = self.push_simplex(&v[..k], &nb_init[..k]);
            if outer != NONE {
                for j in 0..k {
                    if self.nbrs[outer * k + j] == s {
                        self.nbrs[outer * k + j] = t;
                    }
                }
            }
            created.push((t, slot));
        }
        // cavity simplices die before linking so recycled slots cannot alias
        for &s in &cavity {
            self.alive[s] = false;
            self.stamp[s] = 0;
        }
        for &(t, qslot) in &created {
            for j in 0..k {
                if j == qslot {
                    continue;
                }
                // facet opposite vertex j contains q; identify it by the rest
                let mut key = [NONE; 2];
                let mut c = 0;
                for (jj, &vv) in self.simplex(t).iter().enumerate() {
                    if jj != j && vv != q {
                        key[c] = vv;
                        c += 1;
                    }
                }
                if key[0] > key[1] && key[1] != NONE {
                    key.swap(0, 1);
                }
                match ridge_map.iter().position(|&(rk, _)| rk == (key[0], key[1])) {
                    Some(pos) => {
                        let (_, (u, uj)) = ridge_map.swap_remove(pos);
                        self.nbrs[t * k + j] = u;
                        self.nbrs[u * k + uj] = t;
                    }
                    None => ridge_map.push(((key[0], key[1]), (t, j))),
                }
            }
        }
        if !ridge_map.is_empty() {
            return Err(TriangulationFailure);
        }
        self.free.extend(cavity.iter().copied());
        self.last = created[0].0;
        self.scratch = Scratch { cavity, boundary, touched, on_boundary, ridges: ridge_map, created };
        Ok(())
    }

    fn into_oracle(self) -> NeighborOracle {
        let n = self.n_real;
        let k = self.dim + 1;
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..self.alive.len() {
            if !self.alive[s] {
                continue;
            }
            let sv = self.simplex(s);
            for a in 0..k {
                for b in a + 1..k {
                    let (u, v) = (sv[a], sv[b]);
                    if u < n && v < n {
                        lists[u].push(v);
                        lists[v].push(u);
                    }
                }
            }
        }
        for l in lists.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }

        // Hidden sites borrow the list of the cell that owns their position.
        let hidden_sites: Vec<usize> = (0..n).filter(|&i| self.hidden[i]).collect();
        let mut extra: Vec<(usize, usize)> = Vec::new();
        for &h in &hidden_sites {
            let owner = self.owner_of(h, &lists);
            if let Some(owner) = owner {
                let mut borrowed = lists[owner].clone();
                borrowed.push(owner);
                for &m in &borrowed {
                    if m != h {
                        extra.push((h, m));
                        extra.push((m, h));
                    }
                }
            }
        }
        for (a, b) in extra {
            lists[a].push(b);
        }
        for l in lists.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        NeighborOracle::from_lists(lists, self.hidden)
    }

    /// Non-hidden site minimizing the power distance to the position of `h`,
    /// found by greedy descent on the adjacency graph.
    fn owner_of(&self, h: usize, lists: &[Vec<usize>]) -> Option<usize> {
        let n = self.n_real;
        let x = self.p(h);
        let pow = |i: usize| -> f64 {
            let pi = self.p(i);
            pi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - self.wts[i]
        };
        let mut cur = match self.locate(h) {
            Ok(s) => self
                .simplex(s)
                .iter()
                .copied()
                .filter(|&v| v < n && !self.hidden[v])
                .min_by(|&a, &b| pow(a).total_cmp(&pow(b))),
            Err(_) => None,
        }
        .or_else(|| (0..n).find(|&v| !self.hidden[v]))?;
        loop {
            let here = pow(cur);
            let better = lists[cur]
                .iter()
                .copied()
                .filter(|&m| !self.hidden[m])
                .min_by(|&a, &b| pow(a).total_cmp(&pow(b)).then(a.cmp(&b)));
            match better {
                Some(m) if pow(m) < here => cur = m,
                _ => return Some(cur),
            }
        }
    }
}

/// Determinant of the rows `(r_k[0], r_k[1], last_k)`, `k < 3`.
#[inline]
fn det3(r: &[[f64; 3]; 4], last: &[f64; 4]) -> f64 {
    r[0][0] * (r[1][1] * last[2] - last[1] * r[2][1]) - r[0][1] * (r[1][0] * last[2] - last[1] * r[2][0])
        + last[0] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Determinant of the rows `(r_k[0], r_k[1], r_k[2], last_k)`, `k < 4`.
#[inline]
fn det4(r: &[[f64; 3]; 4], last: &[f64; 4]) -> f64 {
    let m = |i: usize, j: usize| if j < 3 { r[i][j] } else { last[i] };
    // Laplace expansion along the first two rows.
    let minor_top = |a: usize, b: usize| m(0, a) * m(1, b) - m(0, b) * m(1, a);
    let minor_bot = |a: usize, b: usize| m(2, a) * m(3, b) - m(2, b) * m(3, a);
    minor_top(0, 1) * minor_bot(2, 3) - minor_top(0, 2) * minor_bot(1, 3)
        + minor_top(0, 3) * minor_bot(1, 2)
        + minor_top(1, 2) * minor_bot(0, 3)
        - minor_top(1, 3) * minor_bot(0, 2)
        + minor_top(2, 3) * minor_bot(0, 1)
}

/// Morton order of the sites, so consecutive insertions stay close.
fn insertion_order(dim: usize, points: &[f64], n: usize) -> Vec<usize> {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points.chunks_exact(dim) {
        for c in 0..dim {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let bits = if dim == 2 { 16 } else { 10 };
    let scale = ((1u64 << bits) - 1) as f64;
    let key = |i: usize| -> u64 {
        let p = &points[i * dim..(i + 1) * dim];
        let mut code = 0u64;
        let mut q = [0u64; 3];
        for (c, qc) in q.iter_mut().enumerate().take(dim) {
            let span = hi[c] - lo[c];
            if span > 0.0 {
                *qc = (((p[c] - lo[c]) / span) * scale) as u64;
            }
        }
        for b in (0..bits).rev() {
            for qc in &q[..dim] {
                code = (code << 1) | ((qc >> b) & 1);
            }
        }
        code
    };
    let mut keyed: Vec<(u64, usize)> = (0..n).map(|i| (key(i), i)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}
