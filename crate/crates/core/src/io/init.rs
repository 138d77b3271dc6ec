use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::measures::PointSet;
use crate::scalar::Scalar;

/// Seeded starting shapes for a polyline of `segments` segments inside the
/// box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    RandomWalk,
    GridSerpentine,
    UniformVertices,
}

impl InitKind {
    pub fn build<T: Scalar>(self, segments: usize, lo: &[f64], hi: &[f64], seed: u64) -> PointSet<T> {
        match self {
            InitKind::RandomWalk => random_walk(segments, lo, hi, seed),
            InitKind::GridSerpentine => grid_serpentine(segments, lo, hi, seed),
            InitKind::UniformVertices => uniform_vertices(segments, lo, hi, seed),
        }
    }
}

fn to_points<T: Scalar>(dim: usize, coords: Vec<f64>) -> PointSet<T> {
    PointSet::new(dim, coords.into_iter().map(T::lit).collect()).expect("initializer dimension is 2 or 3")
}

/// Vertices drawn independently and uniformly in the box.
pub fn uniform_vertices<T: Scalar>(segments: usize, lo: &[f64], hi: &[f64], seed: u64) -> PointSet<T> {
    let d = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..(segments + 1) * d).map(|k| rng.gen_range(lo[k % d]..=hi[k % d])).collect();
    to_points(d, coords)
}

/// Walk with isotropic steps of length `0.5 * diameter / sqrt(segments)`,
/// reflected at the box faces.
pub fn random_walk<T: Scalar>(segments: usize, lo: &[f64], hi: &[f64], seed: u64) -> PointSet<T> {
    let d = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diam = (0..d).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
    let step = 0.5 * diam / (segments.max(1) as f64).sqrt();
    let mut x: Vec<f64> = (0..d).map(|k| rng.gen_range(lo[k]..=hi[k])).collect();
    let mut coords = x.clone();
    for _ in 0..segments {
        let dir = loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                break v.into_iter().map(|c| c / n).collect::<Vec<_>>();
            }
        };
        for k in 0..d {
            let mut c = x[k] + step * dir[k];
            if c > hi[k] {
                c = 2.0 * hi[k] - c;
            }
            if c < lo[k] {
                c = 2.0 * lo[k] - c;
            }
            x[k] = c.clamp(lo[k], hi[k]);
        }
        coords.extend_from_slice(&x);
    }
    to_points(d, coords)
}

/// Boustrophedon over a near-square grid of cell centers in the first two
/// axes, jittered by 1% of a cell so no segment is exactly axis-aligned.
/// Further axes sit at the box center.
pub fn grid_serpentine<T: Scalar>(segments: usize, lo: &[f64], hi: &[f64], seed: u64) -> PointSet<T> {
    let d = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = segments + 1;
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    let cell = [(hi[0] - lo[0]) / cols as f64, (hi[1] - lo[1]) / rows as f64];
    let mut coords = Vec::with_capacity(count * d);
    for v in 0..count {
        let r = v / cols;
        let c = if r.is_multiple_of(2) { v % cols } else { cols - 1 - v % cols };
        let grid = [c as f64, r as f64];
        for k in 0..d {
            if k < 2 {
                let jitter = 0.01 * rng.gen_range(-1.0..1.0);
                coords.push(lo[k] + (grid[k] + 0.5 + jitter) * cell[k]);
            } else {
                coords.push(0.5 * (lo[k] + hi[k]));
            }
        }
    }
    to_points(d, coords)
}
