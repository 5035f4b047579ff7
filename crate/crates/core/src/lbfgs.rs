//! Limited-memory BFGS with a backtracking Armijo line search. The objective
//! may reject a trial point (returns `None`), which shrinks the step; this is
//! how positivity constraints are kept.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the relative objective decrease over `window` iterations
    /// falls below this.
    pub rel_tol: f64,
    pub window: usize,
    /// Stop when the (projected) gradient max-norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 12, max_iter: 5000, rel_tol: 1e-13, window: 10, grad_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative decrease over the last window when stopped.
    pub last_change: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(math::fabs(*x)))
}

/// Minimizes `f` from `x0`. `f` returns the value and the (already projected)
/// gradient, or `None` outside the domain; `x0` must be inside.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Option<LbfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut values = alloc::vec![fx];
    let mut last_change = f64::INFINITY;
    for it in 0..opts.max_iter {
        if max_abs(&g) <= opts.grad_tol {
            return Some(LbfgsResult { x, iterations: it, converged: true, last_change: 0.0 });
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / f64::max(1.0, max_abs(&g)),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v / f64::max(1.0, max_abs(&g))).collect();
            slope = dot(&g, &dir);
        }
        // Weak Wolfe conditions by bracketing and bisection.
        let mut step = 1.0;
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut armijo_point: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..80 {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            match f(&xt) {
                Some((ft, gt)) if ft <= fx + 1e-4 * step * slope => {
                    if dot(&gt, &dir) >= 0.9 * slope {
                        accepted = Some((xt, ft, gt));
                        break;
                    }
                    lo = step;
                    armijo_point = Some((xt, ft, gt));
                }
                _ => hi = step,
            }
            step = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * step };
            if hi.is_finite() && hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let accepted = accepted.or(armijo_point);
        let Some((xn, fnew, gn)) = accepted else {
            if !hist.is_empty() {
                hist.clear();
                continue;
            }
            // Not even the gradient direction decreases: at the
            // floating-point floor of the objective.
            return Some(LbfgsResult { x, iterations: it, converged: last_change <= 1e3 * opts.rel_tol, last_change });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * math::sqrt(dot(&s, &s) * dot(&y, &y)) {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
        values.push(fx);
        if values.len() > opts.window {
            let old = values[values.len() - 1 - opts.window];
            last_change = (old - fx) / f64::max(1e-300, math::fabs(fx).max(math::fabs(old)));
            if last_change <= opts.rel_tol {
                return Some(LbfgsResult { x, iterations: it + 1, converged: true, last_change });
            }
        }
    }
    Some(LbfgsResult { x, iterations: opts.max_iter, converged: false, last_change })
}
