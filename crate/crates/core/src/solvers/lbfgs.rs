//! Limited-memory BFGS model for a concave maximization.

use std::collections::VecDeque;

use crate::scalar::{dot, Scalar};

/// Stores the last `m` pairs `s = x_new - x_old`, `y = grad_old - grad_new`
/// (the curvature pairs of `-g`).
#[derive(Debug, Clone)]
pub struct Lbfgs<T> {
    memory: usize,
    pairs: VecDeque<(Vec<T>, Vec<T>, T)>,
}

impl<T: Scalar> Lbfgs<T> {
    pub fn new(memory: usize) -> Self {
        Self { memory: memory.max(1), pairs: VecDeque::with_capacity(memory.max(1)) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    /// Adds a pair; pairs without positive curvature are skipped. Returns
    /// whether the pair was stored.
    pub fn update(&mut self, s: Vec<T>, y: Vec<T>) -> bool {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > T::epsilon() * yy.sqrt() * dot(&s, &s).sqrt()) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, T::one() / sy));
        true
    }

    /// Ascent direction `H_k grad` by the two-loop recursion, with the
    /// initial matrix scaled by `<s, y> / <y, y>` of the newest pair.
    pub fn direction(&self, grad: &[T]) -> Vec<T> {
        let mut q = grad.to_vec();
        let mut alpha = vec![T::zero(); self.pairs.len()];
        for (k, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let a = *rho * dot(s, &q);
            alpha[k] = a;
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
        }
        if let Some((_, y, rho)) = self.pairs.back() {
            let gamma = T::one() / (*rho * dot(y, y));
            for qi in &mut q {
                *qi *= gamma;
            }
        }
        for (k, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = *rho * dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi += (alpha[k] - b) * si;
            }
        }
        q
    }
}
