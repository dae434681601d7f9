//! Minimizes the normalized weighted-sum objective over the charging polytope.
//!
//! Linear pieces (cost, availability, feasibility) are solved exactly as flow
//! problems. The fade term is handled by Frank-Wolfe descent with the surface
//! branch of every cell held fixed, re-deriving branches from the result until
//! they stop changing. Several starting points are tried and the best true
//! objective wins.

mod descent;
mod flow;
mod objective;
mod oracle;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::fade::Branch;
use crate::problem::{
    branch_assignment, breakdown_with, build_constraints, normalized_objective, ConstraintSet, NormalizationPoints, ObjectiveBreakdown, ObjectiveKind,
    ProblemInstance,
};
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::scheduler::fill_max_power;

use descent::frank_wolfe;
use flow::TransportLp;
use objective::Scalarized;

pub use oracle::{oracle_grid_search, ORACLE_MAX_CELLS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Relative objective tolerance.
    pub tol_obj: T,
    pub max_branch_iters: usize,
    pub max_inner_iters: usize,
    /// Grid levels per cell for [`oracle_grid_search`].
    pub oracle_levels: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { tol_obj: lit(1e-6), max_branch_iters: 20, max_inner_iters: 40, oracle_levels: 8 }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_obj > T::zero()) {
            return Err(Error::InvalidInstance("tol_obj must be positive".into()));
        }
        if self.max_branch_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidInstance("iteration caps must be at least 1".into()));
        }
        if self.oracle_levels < 2 {
            return Err(Error::InvalidInstance("oracle_levels must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Branches stable and descent converged.
    OptimalLocal,
    /// Best point found before an iteration cap.
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    /// Normalized objective.
    pub objective: T,
    pub breakdown: ObjectiveBreakdown<T>,
    pub wall_time_ms: f64,
    /// Descent iterations over all starts.
    pub iterations: usize,
    /// Branch per cell, slot-major.
    pub branch_assignment: Vec<Branch>,
    pub status: SolveStatus,
    pub points: NormalizationPoints<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasibleReason {
    /// These vehicles cannot reach their lower bound even alone.
    VehicleCapacity { vehicles: Vec<usize> },
    /// The station limits leave this much required charge undelivered, Ah.
    StationCapacity { shortfall_ah: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feasibility {
    Feasible,
    Infeasible(InfeasibleReason),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

fn shortfall_tol<T: Scalar>(cs: &ConstraintSet<T>) -> T {
    crate::problem::bound_slack(cs.c_bat)
}

/// Decides whether the linear constraints admit any allocation.
pub fn feasibility_check<T: Scalar>(inst: &ProblemInstance<T>) -> Feasibility {
    let cs = build_constraints(inst);
    if !cs.infeasible_by_construction.is_empty() {
        return Feasibility::Infeasible(InfeasibleReason::VehicleCapacity { vehicles: cs.infeasible_by_construction });
    }
    let short = max_satisfiable(inst, &cs).total_shortfall();
    if short > shortfall_tol(&cs) {
        Feasibility::Infeasible(InfeasibleReason::StationCapacity { shortfall_ah: to_f64(short) })
    } else {
        Feasibility::Feasible
    }
}

/// Total lower-bound charge that cannot be delivered, Ah (zero when feasible).
pub fn unmet_lower_bounds<T: Scalar>(inst: &ProblemInstance<T>) -> Vec<T> {
    let cs = build_constraints(inst);
    max_satisfiable(inst, &cs).shortfall_ah
}

fn max_satisfiable<T: Scalar>(inst: &ProblemInstance<T>, cs: &ConstraintSet<T>) -> flow::LpSolution<T> {
    TransportLp::new(cs, &inst.priority_order()).max_lower_bounds()
}

/// Earliest-departure-first fill at full current until each vehicle is full,
/// sharing the station limit slot by slot.
pub fn max_power_allocation<T: Scalar>(inst: &ProblemInstance<T>) -> Allocation<T> {
    let soc: Vec<T> = inst.tasks.iter().map(|t| t.soc_start).collect();
    let alloc = fill_max_power(&inst.grid.tt, &soc, &inst.priority_order(), &inst.limits, inst.first_slot_reserve);
    if alloc.horizon() == inst.horizon() {
        alloc
    } else {
        inst.zero_allocation()
    }
}

struct Candidate<T> {
    x: Allocation<T>,
    value: T,
    iterations: usize,
    settled: bool,
}

/// Branch-fixing descent from one start, finished by a pass with branches
/// re-derived at every evaluation.
fn refine<T: Scalar>(obj: &Scalarized<'_, T>, lp: &TransportLp<'_, T>, start: Allocation<T>, cfg: &SolverConfig<T>) -> Candidate<T> {
    let inst = obj.inst;
    let mut best_value = obj.value(&start, None);
    let mut best = start.clone();
    let mut x = start;
    let mut branches = branch_assignment(&x, inst);
    let mut iterations = 0;
    let mut settled = false;
    for _ in 0..cfg.max_branch_iters {
        let d = frank_wolfe(obj, lp, x, Some(&branches), cfg.tol_obj, cfg.max_inner_iters);
        iterations += d.iterations;
        x = d.x;
        let v = obj.value(&x, None);
        if v < best_value {
            best_value = v;
            best = x.clone();
        }
        let next = branch_assignment(&x, inst);
        if next == branches {
            settled = d.converged;
            break;
        }
        branches = next;
    }
    let polish = frank_wolfe(obj, lp, best.clone(), None, cfg.tol_obj, cfg.max_inner_iters);
    iterations += polish.iterations;
    if polish.value < best_value {
        best_value = polish.value;
        best = polish.x;
    }
    Candidate { x: best, value: best_value, iterations, settled }
}

/// Runs [`refine`] from every start (in parallel) and keeps the best, earliest on ties.
fn best_of<T: Scalar>(obj: &Scalarized<'_, T>, lp: &TransportLp<'_, T>, starts: Vec<Allocation<T>>, cfg: &SolverConfig<T>) -> Candidate<T> {
    let results: Vec<Candidate<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = starts.into_iter().map(|st| s.spawn(move || refine(obj, lp, st, cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("solver worker panicked")).collect()
    });
    let mut iterations = 0;
    let mut best: Option<Candidate<T>> = None;
    for c in results {
        iterations += c.iterations;
        if best.as_ref().is_none_or(|b| c.value < b.value) {
            best = Some(c);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = iterations;
    best
}

fn slot_index_costs<T: Scalar>(cs: &ConstraintSet<T>, late: bool, fill: bool) -> Vec<T> {
    let n = cs.n_vehicles();
    let h = from_usize::<T>(cs.horizon + 1);
    let mut c = vec![T::zero(); cs.horizon * n];
    for i in 0..cs.horizon {
        let idx = from_usize::<T>(i + 1);
        let base = if late { h - idx } else { idx };
        for v in 0..n {
            c[i * n + v] = if fill { base - h - T::one() } else { base };
        }
    }
    c
}

struct Payoff<T> {
    points: NormalizationPoints<T>,
    optima: Vec<Allocation<T>>,
}

fn lp_starts<T: Scalar>(inst: &ProblemInstance<T>, lp: &TransportLp<'_, T>) -> Vec<Allocation<T>> {
    let cs = lp.constraints();
    [(false, false), (true, false), (false, true)]
        .iter()
        .map(|&(late, fill)| to_alloc(inst, lp.minimize(&slot_index_costs(cs, late, fill)).x))
        .collect()
}

fn to_alloc<T: Scalar>(inst: &ProblemInstance<T>, x: Vec<T>) -> Allocation<T> {
    Allocation::from_vec(inst.horizon(), inst.n_vehicles(), x).expect("lp output matches instance shape")
}

fn payoff<T: Scalar>(inst: &ProblemInstance<T>, lp: &TransportLp<'_, T>, cfg: &SolverConfig<T>) -> Payoff<T> {
    let zero = inst.zero_allocation();
    let mut grad = vec![T::zero(); zero.as_slice().len()];
    let mut linear_opt = |kind| {
        let obj = Scalarized::raw(inst, kind);
        obj.gradient(&zero, None, &mut grad);
        to_alloc(inst, lp.minimize(&grad).x)
    };
    let cost_opt = linear_opt(ObjectiveKind::Cost);
    let avail_opt = linear_opt(ObjectiveKind::Availability);
    let mut starts = lp_starts(inst, lp);
    starts.push(cost_opt.clone());
    starts.push(avail_opt.clone());
    let fade_obj = Scalarized::raw(inst, ObjectiveKind::Fade);
    let fade_opt = best_of(&fade_obj, lp, starts, cfg).x;
    let optima = vec![cost_opt, fade_opt, avail_opt];
    let values: Vec<[T; 3]> = optima.iter().map(|x| breakdown_with(x, inst, None).as_array()).collect();
    let mut utopia = [T::zero(); 3];
    let mut nadir = [T::zero(); 3];
    for k in 0..3 {
        utopia[k] = values[k][k];
        nadir[k] = values.iter().map(|v| v[k]).fold(T::neg_infinity(), T::max);
        // a local fade optimum may be beaten by another single-objective optimum
        utopia[k] = values.iter().map(|v| v[k]).fold(utopia[k], T::min);
    }
    Payoff { points: NormalizationPoints { utopia, nadir }, optima }
}

fn require_feasible<T: Scalar>(inst: &ProblemInstance<T>) -> Result<()> {
    match feasibility_check(inst) {
        Feasibility::Feasible => Ok(()),
        Feasibility::Infeasible(InfeasibleReason::VehicleCapacity { vehicles }) => {
            let ids: Vec<&str> = vehicles.iter().map(|&v| inst.tasks[v].vehicle_id.as_str()).collect();
            Err(Error::Infeasible(format!("vehicle capacity: {}", ids.join(", "))))
        }
        Feasibility::Infeasible(InfeasibleReason::StationCapacity { shortfall_ah }) => {
            Err(Error::Infeasible(format!("station capacity: {shortfall_ah:.6} Ah undeliverable")))
        }
    }
}

/// Utopia and nadir of each objective from the payoff table of the three
/// single-objective optima.
pub fn compute_normalization_points<T: Scalar>(inst: &ProblemInstance<T>, cfg: &SolverConfig<T>) -> Result<NormalizationPoints<T>> {
    cfg.validate()?;
    require_feasible(inst)?;
    let cs = build_constraints(inst);
    let lp = TransportLp::new(&cs, &inst.priority_order());
    Ok(payoff(inst, &lp, cfg).points)
}

/// Solves the instance, computing normalization points first.
pub fn solve<T: Scalar>(inst: &ProblemInstance<T>, cfg: &SolverConfig<T>) -> Result<(Allocation<T>, SolveReport<T>)> {
    solve_inner(inst, None, cfg)
}

/// Solves the instance against precomputed normalization points.
pub fn solve_with_points<T: Scalar>(
    inst: &ProblemInstance<T>,
    points: &NormalizationPoints<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Allocation<T>, SolveReport<T>)> {
    solve_inner(inst, Some(points), cfg)
}

fn solve_inner<T: Scalar>(
    inst: &ProblemInstance<T>,
    points: Option<&NormalizationPoints<T>>,
    cfg: &SolverConfig<T>,
) -> Result<(Allocation<T>, SolveReport<T>)> {
    let started = Instant::now();
    cfg.validate()?;
    require_feasible(inst)?;
    let cs = build_constraints(inst);
    let lp = TransportLp::new(&cs, &inst.priority_order());
    let (points, mut starts) = match points {
        Some(p) => (*p, Vec::new()),
        None => {
            let pay = payoff(inst, &lp, cfg);
            (pay.points, pay.optima)
        }
    };
    let baseline = max_power_allocation(inst);
    let mut all = Vec::new();
    if cs.audit(&baseline, 1e-9).is_ok() {
        all.push(baseline);
    }
    all.extend(lp_starts(inst, &lp));
    all.append(&mut starts);

    let obj = Scalarized::new(inst, &inst.weights, &points);
    let best = best_of(&obj, &lp, all, cfg);
    let x = clean(best.x, &cs);
    let breakdown = breakdown_with(&x, inst, None);
    let report = SolveReport {
        objective: normalized_objective(&breakdown, &points, &inst.weights),
        breakdown,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        iterations: best.iterations,
        branch_assignment: branch_assignment(&x, inst),
        status: if best.settled { SolveStatus::OptimalLocal } else { SolveStatus::Feasible },
        points,
    };
    debug_assert!(cs.audit(&x, 1e-6).is_ok(), "solver left the feasible set: {:?}", cs.audit(&x, 1e-6));
    Ok((x, report))
}

/// Removes rounding noise: clamps to the box and zeroes cells past departure.
fn clean<T: Scalar>(mut x: Allocation<T>, cs: &ConstraintSet<T>) -> Allocation<T> {
    let n = cs.n_vehicles();
    for (cell, val) in x.as_mut_slice().iter_mut().enumerate() {
        let (i, v) = (cell / n, cell % n);
        *val = if i >= cs.tt[v] { T::zero() } else { val.max(T::zero()).min(cs.i_max) };
    }
    x
}

#[cfg(test)]
mod tests;
