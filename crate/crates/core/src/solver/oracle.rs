//! Exhaustive grid search for tiny instances.

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::problem::{build_constraints, NormalizationPoints, ProblemInstance};
use crate::scalar::{from_usize, lit, Scalar};

use super::objective::Scalarized;

/// Largest `horizon × n_vehicles` the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 12;

/// Enumerates every cell over `levels` evenly spaced currents in `[0, I_max]`
/// and returns the grid point with the lowest normalized objective.
///
/// Energy windows are relaxed to the nearest achievable grid totals: a vehicle
/// must receive at least the smallest grid total not below its lower bound and
/// at most the largest grid total not above its upper bound (or that lower
/// total when the window holds no grid point). Full charge is never exceeded.
pub fn oracle_grid_search<T: Scalar>(
    inst: &ProblemInstance<T>,
    points: &NormalizationPoints<T>,
    levels: usize,
) -> Result<(Allocation<T>, T)> {
    let h = inst.horizon();
    let n = inst.n_vehicles();
    if h * n > ORACLE_MAX_CELLS {
        return Err(Error::InstanceTooLarge { cells: h * n, limit: ORACLE_MAX_CELLS });
    }
    if levels < 2 {
        return Err(Error::InvalidInstance("oracle needs at least 2 levels".into()));
    }
    let cs = build_constraints(inst);
    let obj = Scalarized::new(inst, &inst.weights, points);
    let step = cs.i_max / from_usize::<T>(levels - 1);
    let unit = step * cs.dt_hours;
    let slack = lit::<T>(1e-9) * cs.c_bat.max(T::one());

    // per vehicle: feasible level tuples with their objective contribution
    let mut options: Vec<Vec<(Vec<usize>, T)>> = Vec::with_capacity(n);
    for v in 0..n {
        let tt = cs.tt[v];
        let w = cs.windows[v];
        let headroom = (T::one() - cs.soc_start[v]) * cs.c_bat + slack;
        let lo_units = ((w.lo_ah - slack) / unit).ceil().max(T::zero());
        let hi_units = ((w.hi_ah + slack) / unit).floor().max(lo_units);
        let mut found = Vec::new();
        let mut idx = vec![0usize; tt];
        let mut currents = vec![T::zero(); h];
        loop {
            let units = from_usize::<T>(idx.iter().sum());
            if units >= lo_units && units <= hi_units && units * unit <= headroom {
                for (c, &k) in currents.iter_mut().zip(&idx) {
                    *c = step * from_usize::<T>(k);
                }
                found.push((idx.clone(), obj.vehicle_value(v, &currents)));
            }
            let mut k = 0;
            while k < tt {
                idx[k] += 1;
                if idx[k] < levels {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == tt {
                break;
            }
        }
        if found.is_empty() {
            return Err(Error::NoFeasibleGridPoint);
        }
        found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        options.push(found);
    }

    // suffix lower bounds for pruning
    let mut floor = vec![T::zero(); n + 1];
    for v in (0..n).rev() {
        floor[v] = floor[v + 1] + options[v][0].1;
    }
    let mut load = vec![0usize; h];
    let caps: Vec<T> = cs.station_cap.iter().map(|c| *c + slack).collect();
    let mut choice = vec![0usize; n];
    let mut best: Option<(Vec<usize>, T)> = None;
    search(&options, &floor, &caps, step, 0, T::zero(), &mut load, &mut choice, &mut best);
    let (picked, value) = best.ok_or(Error::NoFeasibleGridPoint)?;
    let mut alloc = inst.zero_allocation();
    for (v, &o) in picked.iter().enumerate() {
        for (i, &k) in options[v][o].0.iter().enumerate() {
            alloc.set(i, v, step * from_usize::<T>(k));
        }
    }
    Ok((alloc, value + obj.constant()))
}

#[allow(clippy::too_many_arguments)]
fn search<T: Scalar>(
    options: &[Vec<(Vec<usize>, T)>],
    floor: &[T],
    caps: &[T],
    step: T,
    v: usize,
    acc: T,
    load: &mut [usize],
    choice: &mut [usize],
    best: &mut Option<(Vec<usize>, T)>,
) {
    if v == options.len() {
        if best.as_ref().is_none_or(|b| acc < b.1) {
            *best = Some((choice.to_vec(), acc));
        }
        return;
    }
    for (o, (levels, value)) in options[v].iter().enumerate() {
        let total = acc + *value;
        if best.as_ref().is_some_and(|b| total + floor[v + 1] >= b.1) {
            // options are sorted, nothing later can do better
            break;
        }
        let fits = levels.iter().enumerate().all(|(i, &k)| step * from_usize::<T>(load[i] + k) <= caps[i]);
        if !fits {
            continue;
        }
        for (i, &k) in levels.iter().enumerate() {
            load[i] += k;
        }
        choice[v] = o;
        search(options, floor, caps, step, v + 1, total, load, choice, best);
        for (i, &k) in levels.iter().enumerate() {
            load[i] -= k;
        }
    }
}
