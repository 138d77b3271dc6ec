//! Newton step on the complement of the constant vector.

use crate::scalar::{dot, Scalar};
use crate::transport::SparseHessian;

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub direction: Vec<T>,
    pub iterations: usize,
    /// `|H d + b| / |b|` with `b` the projected right-hand side.
    pub relative_residual: T,
    pub converged: bool,
}

fn project_out_mean<T: Scalar>(v: &mut [T]) {
    let mean = v.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize_lossy(v.len());
    for x in v {
        *x -= mean;
    }
}

/// Solves `-H d = grad` for `d` orthogonal to the ones vector, by Jacobi
/// preconditioned conjugate gradients on the positive semidefinite `-H`.
///
/// The right-hand side is projected onto the range of `H` first; the
/// iteration stops when the true residual is below `rel_tol` relative to it
/// or after `max_iter` steps.
pub fn newton_direction<T: Scalar>(h: &SparseHessian<T>, grad: &[T], rel_tol: T, max_iter: usize) -> CgOutcome<T> {
    let n = h.dim();
    let mut b = grad.to_vec();
    project_out_mean(&mut b);
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return CgOutcome { direction: x, iterations: 0, relative_residual: T::zero(), converged: true };
    }
    let inv_diag: Vec<T> = h.diagonal().iter().map(|&d| if d < T::zero() { -T::one() / d } else { T::one() }).collect();
    let apply = |v: &[T], out: &mut [T]| {
        h.matvec(v, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
    };
    let mut r = b.clone();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&a, &m)| a * m).collect();
    project_out_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut it = 0;
    let target = rel_tol * bnorm;
    let mut res = bnorm;
    while it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt();
        if res <= target {
            // confirm with the true residual
            apply(&x, &mut ap);
            let true_res = ap.iter().zip(&b).fold(T::zero(), |a, (&u, &v)| a + (u - v) * (u - v)).sqrt();
            res = true_res;
            if true_res <= target {
                break;
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        project_out_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    project_out_mean(&mut x);
    let converged = res <= target && x.iter().all(|v| v.is_finite());
    CgOutcome { direction: x, iterations: it, relative_residual: res / bnorm, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::HessianFlags;

    fn path_laplacian(n: usize, w: f64) -> SparseHessian<f64> {
        let pairs = (0..n - 1).map(|i| (i, i + 1, w)).collect();
        SparseHessian::from_pairs(n, pairs, HessianFlags::default())
    }

    #[test]
    fn solves_projected_system() {
        let h = path_laplacian(6, 0.5);
        let g = vec![1.0, -0.5, 0.25, 0.0, -0.25, -0.5];
        let out = newton_direction(&h, &g, 1e-12, 6);
        assert!(out.converged);
        let mut hd = vec![0.0; 6];
        h.matvec(&out.direction, &mut hd);
        for i in 0..6 {
            assert!((hd[i] + g[i]).abs() < 1e-10);
        }
        assert!(out.direction.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_step() {
        let h = path_laplacian(3, 1.0);
        let out = newton_direction(&h, &[0.0; 3], 1e-10, 3);
        assert!(out.converged);
        assert_eq!(out.direction, vec![0.0; 3]);
    }

    #[test]
    fn disconnected_graph_does_not_converge() {
        // two components: constants on each are extra kernel directions
        let h = SparseHessian::from_pairs(4, vec![(0, 1, 1.0), (2, 3, 1.0)], HessianFlags::default());
        let out = newton_direction(&h, &[1.0, 1.0, -1.0, -1.0], 1e-10, 4);
        assert!(!out.converged);
    }
}
