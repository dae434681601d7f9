//! Frank-Wolfe descent with a sampled line search.

use crate::allocation::Allocation;
use crate::fade::Branch;
use crate::scalar::{lit, Scalar};

use super::flow::TransportLp;
use super::objective::Scalarized;

#[derive(Debug, Clone)]
pub(crate) struct Descent<T> {
    pub x: Allocation<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

const LINE_SAMPLES: usize = 8;
const GOLDEN_STEPS: usize = 24;

/// Runs descent from `start` on the objective with branches fixed (or
/// re-derived per evaluation when `branches` is `None`).
pub(crate) fn frank_wolfe<T: Scalar>(
    obj: &Scalarized<'_, T>,
    lp: &TransportLp<'_, T>,
    start: Allocation<T>,
    branches: Option<&[Branch]>,
    tol: T,
    max_iters: usize,
) -> Descent<T> {
    let mut x = start;
    let mut fx = obj.value(&x, branches);
    let mut grad = vec![T::zero(); x.as_slice().len()];
    let mut trial = x.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        obj.gradient(&x, branches, &mut grad);
        let s = lp.minimize(&grad).x;
        let gap: T = grad.iter().zip(x.as_slice()).zip(&s).map(|((g, xi), si)| *g * (*xi - *si)).sum();
        let threshold = tol * fx.abs().max(obj.floor);
        if gap <= threshold {
            converged = true;
            break;
        }
        let eval = |gamma: T, trial: &mut Allocation<T>| -> T {
            for ((t, xi), si) in trial.as_mut_slice().iter_mut().zip(x.as_slice()).zip(&s) {
                *t = *xi + gamma * (*si - *xi);
            }
            obj.value(trial, branches)
        };
        let step = T::one() / lit(LINE_SAMPLES as f64);
        let mut best = (T::zero(), fx);
        let mut best_j = 0;
        for j in 1..=LINE_SAMPLES {
            let gamma = step * lit(j as f64);
            let f = eval(gamma, &mut trial);
            if f < best.1 {
                best = (gamma, f);
                best_j = j;
            }
        }
        // refine around the best sample
        let lo = step * lit(best_j.saturating_sub(1) as f64);
        let hi = (step * lit((best_j + 1) as f64)).min(T::one());
        let ratio = lit::<T>(0.618_033_988_749_895);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = eval(c, &mut trial);
        let mut fd = eval(d, &mut trial);
        for _ in 0..GOLDEN_STEPS {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = eval(c, &mut trial);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = eval(d, &mut trial);
            }
            for (g, f) in [(c, fc), (d, fd)] {
                if f < best.1 {
                    best = (g, f);
                }
            }
        }
        let (gamma, f) = best;
        if !(gamma > T::zero()) || !(fx - f > tol * lit(1e-3) * fx.abs().max(obj.floor)) {
            // no measurable progress along the direction
            if gamma > T::zero() && f < fx {
                eval(gamma, &mut trial);
                std::mem::swap(&mut x, &mut trial);
                fx = f;
            }
            break;
        }
        eval(gamma, &mut trial);
        std::mem::swap(&mut x, &mut trial);
        fx = f;
    }
    Descent { x, value: fx, iterations, converged }
}
