//! Strong Wolfe line search (bracketing followed by zoom).
//!
//! Works on the one-dimensional restriction `f(s) = g(x + s d)` of a
//! function being maximized. Each trial returns the value, the slope
//! `<grad g(x + s d), d>` and an arbitrary payload handed back with the
//! accepted step.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams<T> {
    pub c1: T,
    pub c2: T,
    pub max_evals: usize,
}

impl<T: Scalar> Default for WolfeParams<T> {
    fn default() -> Self {
        Self { c1: T::lit(1e-4), c2: T::lit(0.9), max_evals: 50 }
    }
}

/// One trial point of the line search.
#[derive(Debug, Clone)]
pub struct Trial<T, E> {
    pub value: T,
    pub slope: T,
    pub payload: E,
}

#[derive(Debug, Clone)]
pub struct Accepted<T, E> {
    pub step: T,
    pub value: T,
    pub payload: E,
    pub evals: usize,
}

#[derive(Debug, Clone)]
pub enum LineSearchError<T, E> {
    /// `d` does not increase the function at the start point.
    NotAscent { slope: T },
    /// Budget exhausted; `best` is the highest trial satisfying the
    /// sufficient-increase condition, if any.
    Failure { best: Option<Accepted<T, E>>, evals: usize },
}

struct Point<T, E> {
    step: T,
    value: T,
    slope: T,
    payload: Option<E>,
}

/// Searches a step satisfying
/// `f(s) >= f(0) + c1 s f'(0)` and `|f'(s)| <= c2 |f'(0)|`.
///
/// The sufficient-increase test tolerates a decrease of a few ulps of
/// `|f(0)|`, below which function values carry no information. A trial
/// that fails to evaluate (`None`) is treated as too long.
pub fn wolfe_line_search<T, E, F>(
    mut trial: F,
    value0: T,
    slope0: T,
    initial_step: T,
    params: &WolfeParams<T>,
) -> Result<Accepted<T, E>, LineSearchError<T, E>>
where
    T: Scalar,
    E: Clone,
    F: FnMut(T) -> Option<Trial<T, E>>,
{
    if !(slope0 > T::zero()) {
        return Err(LineSearchError::NotAscent { slope: slope0 });
    }
    let noise = T::lit(16.0) * T::epsilon() * value0.abs();
    let armijo = |s: T, v: T| v >= value0 + params.c1 * s * slope0 - noise;
    let curvature = |d: T| d.abs() <= params.c2 * slope0;

    let mut evals = 0usize;
    let mut best: Option<Accepted<T, E>> = None;
    let keep_best = |best: &mut Option<Accepted<T, E>>, s: T, v: T, e: &E, evals: usize| {
        if best.as_ref().is_none_or(|b| v > b.value) {
            *best = Some(Accepted { step: s, value: v, payload: e.clone(), evals });
        }
    };
    let mut probe = |s: T, evals: &mut usize| -> Point<T, E> {
        *evals += 1;
        match trial(s) {
            Some(t) if t.value.is_finite() && t.slope.is_finite() => {
                Point { step: s, value: t.value, slope: t.slope, payload: Some(t.payload) }
            }
            _ => Point { step: s, value: T::neg_infinity(), slope: T::nan(), payload: None },
        }
    };

    let mut prev = Point { step: T::zero(), value: value0, slope: slope0, payload: None };
    let mut s = if initial_step > T::zero() && initial_step.is_finite() { initial_step } else { T::one() };
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        let cur = probe(s, &mut evals);
        if !armijo(cur.step, cur.value) || (!first && cur.value <= prev.value) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(cur.slope) {
            let payload = cur.payload.expect("finite trial has payload");
            return Ok(Accepted { step: cur.step, value: cur.value, payload, evals });
        }
        if let Some(e) = cur.payload.as_ref() {
            keep_best(&mut best, cur.step, cur.value, e, evals);
        }
        if cur.slope <= T::zero() {
            lo = cur;
            hi = prev;
            break;
        }
        if evals >= params.max_evals {
            return Err(LineSearchError::Failure { best, evals });
        }
        first = false;
        prev = cur;
        s *= T::lit(2.0);
    }

    // zoom: `lo` satisfies sufficient increase and has the best value seen
    // on the bracket, and `f'(lo) (hi - lo) > 0`.
    while evals < params.max_evals {
        let width = (hi.step - lo.step).abs();
        if width <= T::epsilon() * lo.step.abs().max(hi.step.abs()) {
            break;
        }
        let s = interpolate(&lo, &hi);
        let cur = probe(s, &mut evals);
        if !armijo(cur.step, cur.value) || cur.value <= lo.value {
            hi = cur;
            continue;
        }
        if curvature(cur.slope) {
            let payload = cur.payload.expect("finite trial has payload");
            return Ok(Accepted { step: cur.step, value: cur.value, payload, evals });
        }
        if let Some(e) = cur.payload.as_ref() {
            keep_best(&mut best, cur.step, cur.value, e, evals);
        }
        if cur.slope * (hi.step - lo.step) <= T::zero() {
            hi = lo;
        }
        lo = cur;
    }
    Err(LineSearchError::Failure { best, evals })
}

/// Cubic interpolation on the bracket, safeguarded to its inner 80 %.
fn interpolate<T: Scalar, E>(lo: &Point<T, E>, hi: &Point<T, E>) -> T {
    let (a, b) = (lo.step, hi.step);
    let (left, right) = (a.min(b), a.max(b));
    let margin = T::lit(0.1) * (right - left);
    let mid = T::lit(0.5) * (a + b);
    if !(hi.value.is_finite() && hi.slope.is_finite()) {
        return mid;
    }
    // minimize -f, so flip signs
    let (fa, fb, da, db) = (-lo.value, -hi.value, -lo.slope, -hi.slope);
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < T::zero() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let s = b - (b - a) * (db + d2 - d1) / (db - da + T::lit(2.0) * d2);
    if s.is_finite() && s > left + margin && s < right - margin {
        s
    } else {
        mid
    }
}
