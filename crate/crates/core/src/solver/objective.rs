//! Weighted, normalized objective over an allocation and its gradient.

use crate::allocation::Allocation;
use crate::fade::{select_branch, Branch};
use crate::problem::{breakdown_with, cell_fade, NormalizationPoints, ObjectiveBreakdown, ObjectiveKind, ProblemInstance, Weights};
use crate::scalar::{from_usize, lit, Scalar};

#[derive(Debug, Clone)]
pub(crate) struct Scalarized<'a, T> {
    pub inst: &'a ProblemInstance<T>,
    /// `α_k / (nadir_k − utopia_k)`, zero for dropped terms.
    coef: [T; 3],
    offset: T,
    /// Smallest magnitude used when turning relative tolerances into absolute ones.
    pub floor: T,
}

impl<'a, T: Scalar> Scalarized<'a, T> {
    pub fn new(inst: &'a ProblemInstance<T>, weights: &Weights<T>, points: &NormalizationPoints<T>) -> Self {
        let a = weights.as_array();
        let mut coef = [T::zero(); 3];
        let mut offset = T::zero();
        for (k, (u, scale)) in points.scaling().iter().enumerate() {
            if *scale > T::zero() {
                coef[k] = a[k] / *scale;
                offset += coef[k] * *u;
            }
        }
        Self { inst, coef, offset, floor: T::one() }
    }

    /// A single raw objective with no normalization.
    pub fn raw(inst: &'a ProblemInstance<T>, kind: ObjectiveKind) -> Self {
        let mut coef = [T::zero(); 3];
        coef[kind.index()] = T::one();
        Self { inst, coef, offset: T::zero(), floor: T::min_positive_value() }
    }

    pub fn combine(&self, b: &ObjectiveBreakdown<T>) -> T {
        let f = b.as_array();
        self.coef[0] * f[0] + self.coef[1] * f[1] + self.coef[2] * f[2] - self.offset
    }

    pub fn value(&self, x: &Allocation<T>, branches: Option<&[Branch]>) -> T {
        self.combine(&breakdown_with(x, self.inst, branches))
    }

    /// Contribution of a single vehicle's currents (excluding the constant offset).
    pub fn vehicle_value(&self, v: usize, currents: &[T]) -> T {
        let inst = self.inst;
        let dt = inst.dt_hours();
        let volt = inst.limits.voltage;
        let c_bat = inst.limits.c_bat;
        let tt = inst.grid.tt[v];
        let w0 = from_usize::<T>(tt);
        let mut soc = inst.tasks[v].soc_start;
        let (mut cost, mut fade, mut avail) = (T::zero(), T::zero(), T::zero());
        for (i, &current) in currents.iter().enumerate().take(tt) {
            cost += inst.prices.price(i) * current * volt * dt / lit(1000.0);
            avail -= current * volt / (from_usize::<T>(i) + w0);
            fade += cell_fade(&inst.fade, soc, current, dt, c_bat, None);
            soc += current * dt / c_bat;
        }
        self.coef[0] * cost + self.coef[1] * fade + self.coef[2] * avail
    }

    pub fn constant(&self) -> T {
        -self.offset
    }

    /// Gradient in slot-major layout. At zero current the one-sided derivative
    /// from above is used.
    pub fn gradient(&self, x: &Allocation<T>, branches: Option<&[Branch]>, out: &mut [T]) {
        let inst = self.inst;
        let n = inst.n_vehicles();
        let dt = inst.dt_hours();
        let volt = inst.limits.voltage;
        let c_bat = inst.limits.c_bat;
        let r = dt / c_bat;
        let half = lit::<T>(0.5);
        let params = &inst.fade;
        out.iter_mut().for_each(|g| *g = T::zero());
        let mut direct = vec![T::zero(); inst.horizon()];
        let mut d_soc = vec![T::zero(); inst.horizon()];
        for v in 0..n {
            let tt = inst.grid.tt[v];
            let w0 = from_usize::<T>(tt);
            let mut soc = inst.tasks[v].soc_start;
            for i in 0..tt {
                let current = x.get(i, v);
                let branch = branches.map_or_else(|| select_branch(current, soc, params), |b| b[i * n + v]);
                let c = params.coeffs(branch);
                let soc_avg = soc + half * current * r;
                let active = c.value(soc_avg, current) > T::zero();
                if active {
                    direct[i] = c.d_soc(current) * half * r + c.d_current(soc_avg, current);
                    d_soc[i] = if current > T::zero() { c.d_soc(current) } else { T::zero() };
                } else {
                    direct[i] = T::zero();
                    d_soc[i] = T::zero();
                }
                soc += current * r;
            }
            // later slots see this slot's charge through their initial SoC
            let mut later = T::zero();
            for i in (0..tt).rev() {
                let remaining = from_usize::<T>(tt - 1 - i);
                let fade = direct[i] + params.p1 * half * r + later + params.p1 * r * remaining;
                later += d_soc[i] * r;
                let cost = inst.prices.price(i) * volt * dt / lit(1000.0);
                let avail = -volt / (from_usize::<T>(i) + w0);
                out[i * n + v] = self.coef[0] * cost + self.coef[1] * fade + self.coef[2] * avail;
            }
        }
    }
}
