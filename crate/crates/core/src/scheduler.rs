//! Fleet state, the two charging policies, task admission and slot-by-slot
//! state updates.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::fade::{calendric_fade_approx, cyclic_fade_approx, total_fade_exact, FadeModelParams, SlotCharge};
use crate::problem::{build_constraints, charging_period, ChargeLimits, ChargingTask, PriceSeries, ProblemInstance, Timestamp, Weights};
use crate::scalar::{lit, to_f64, Scalar};
use crate::solver::{self, unmet_lower_bounds, SolveReport, SolveStatus, SolverConfig};

/// SoC above full that still counts as full.
const SOC_OVERFLOW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState<T> {
    pub task: ChargingTask<T>,
    pub soc_cur: T,
    pub plugged: bool,
    pub slots_remaining: usize,
}

/// Vehicles at the station as of `now`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState<T> {
    pub now: Timestamp,
    pub dt_secs: i64,
    pub vehicles: Vec<VehicleState<T>>,
    /// Station current still drawn during the next slot by vehicles that
    /// already left, A.
    pub first_slot_reserve: T,
}

impl<T: Scalar> FleetState<T> {
    pub fn new(now: Timestamp, dt_secs: i64) -> Self {
        Self { now, dt_secs, vehicles: Vec::new(), first_slot_reserve: T::zero() }
    }

    pub fn plug(&mut self, task: ChargingTask<T>) -> Result<()> {
        task.validate()?;
        let slots_remaining = charging_period(task.t_dep.max(self.now), self.now, self.dt_secs)?;
        self.vehicles.push(VehicleState { soc_cur: task.soc_start, task, plugged: true, slots_remaining });
        Ok(())
    }

    /// Removes a vehicle, returning its final state.
    pub fn unplug(&mut self, vehicle_id: &str) -> Option<VehicleState<T>> {
        let pos = self.vehicles.iter().position(|v| v.task.vehicle_id == vehicle_id)?;
        let mut v = self.vehicles.remove(pos);
        v.plugged = false;
        Some(v)
    }

    pub fn get(&self, vehicle_id: &str) -> Option<&VehicleState<T>> {
        self.vehicles.iter().find(|v| v.task.vehicle_id == vehicle_id)
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Moves the clock and recounts the slots left before each departure.
    pub fn set_now(&mut self, now: Timestamp) {
        self.now = now;
        for v in &mut self.vehicles {
            v.slots_remaining = charging_period(v.task.t_dep.max(now), now, self.dt_secs).unwrap_or(0);
        }
    }

    /// Tasks with `soc_start` set to the current SoC, in fleet order.
    pub fn current_tasks(&self) -> Vec<ChargingTask<T>> {
        self.vehicles
            .iter()
            .filter(|v| v.plugged)
            .map(|v| ChargingTask { soc_start: v.soc_cur, t_dep: v.task.t_dep.max(self.now), ..v.task.clone() })
            .collect()
    }

    pub fn vehicle_ids(&self) -> Vec<String> {
        self.vehicles.iter().filter(|v| v.plugged).map(|v| v.task.vehicle_id.clone()).collect()
    }

    fn priority_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            let (ta, tb) = (&self.vehicles[a].task, &self.vehicles[b].task);
            ta.t_dep.cmp(&tb.t_dep).then_with(|| ta.vehicle_id.cmp(&tb.vehicle_id))
        });
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Policy<T> {
    /// Maximum current until full, earliest departure first.
    Baseline,
    /// Weighted-sum optimization.
    Proposed { weights: Weights<T> },
}

/// Static inputs for building instances from fleet state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext<T> {
    pub limits: ChargeLimits<T>,
    pub fade: FadeModelParams<T>,
    pub solver: SolverConfig<T>,
}

/// Allocation with the vehicle id of every column and the grid anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan<T> {
    pub t_s: Timestamp,
    pub dt_secs: i64,
    pub vehicle_ids: Vec<String>,
    pub alloc: Allocation<T>,
}

impl<T: Scalar> Plan<T> {
    pub fn column(&self, vehicle_id: &str) -> Option<usize> {
        self.vehicle_ids.iter().position(|id| id == vehicle_id)
    }

    /// Planned current for a vehicle in a slot (zero past the horizon).
    pub fn current(&self, slot: usize, vehicle_id: &str) -> T {
        match self.column(vehicle_id) {
            Some(v) if slot < self.alloc.horizon() => self.alloc.get(slot, v),
            _ => T::zero(),
        }
    }
}

/// Earliest-departure-first fill: every vehicle takes the full per-vehicle
/// current, or what the station has left, until it is full. The slot that
/// reaches full charge is cut to the remaining headroom.
pub(crate) fn fill_max_power<T: Scalar>(
    tt: &[usize],
    soc: &[T],
    order: &[usize],
    limits: &ChargeLimits<T>,
    first_slot_reserve: T,
) -> Allocation<T> {
    let horizon = tt.iter().copied().max().unwrap_or(0);
    let mut alloc = Allocation::zeros(horizon, tt.len());
    let dt = limits.dt_hours();
    let mut left: Vec<T> = soc.iter().map(|s| ((T::one() - *s) * limits.c_bat).max(T::zero())).collect();
    for i in 0..horizon {
        let mut cap = if i == 0 { (limits.ic_max - first_slot_reserve).max(T::zero()) } else { limits.ic_max };
        for &v in order {
            if i >= tt[v] || left[v] <= T::zero() {
                continue;
            }
            let take = limits.i_max.min(cap).min(left[v] / dt).max(T::zero());
            if take > T::zero() {
                alloc.set(i, v, take);
                cap -= take;
                left[v] -= take * dt;
            }
        }
    }
    alloc
}

/// Charges at maximum current until full, curtailing later departures first
/// when the station limit binds.
pub fn baseline_schedule<T: Scalar>(state: &FleetState<T>, limits: &ChargeLimits<T>) -> Plan<T> {
    let tt: Vec<usize> = state.vehicles.iter().map(|v| if v.plugged { v.slots_remaining } else { 0 }).collect();
    let soc: Vec<T> = state.vehicles.iter().map(|v| v.soc_cur).collect();
    let alloc = fill_max_power(&tt, &soc, &state.priority_order(), limits, state.first_slot_reserve);
    Plan { t_s: state.now, dt_secs: limits.dt_secs, vehicle_ids: state.vehicles.iter().map(|v| v.task.vehicle_id.clone()).collect(), alloc }
}

/// Optimization instance for the plugged vehicles.
pub fn instance_from_state<T: Scalar>(
    state: &FleetState<T>,
    prices: PriceSeries<T>,
    weights: Weights<T>,
    ctx: &PlanContext<T>,
) -> Result<ProblemInstance<T>> {
    Ok(ProblemInstance::new(state.current_tasks(), state.now, prices, ctx.limits, weights, ctx.fade)?
        .with_first_slot_reserve(state.first_slot_reserve))
}

/// Result of a proposed-policy re-plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedPlan<T> {
    pub plan: Plan<T>,
    pub report: SolveReport<T>,
    /// Vehicles whose lower energy bound had to be reduced to what the
    /// station can still deliver.
    pub relaxed: Vec<String>,
}

/// Builds an instance from the fleet (SoC as of now), normalizes and solves.
///
/// If the fleet can no longer meet every lower bound (which admission
/// prevents for new tasks), each shortfall is subtracted from that vehicle's
/// requirement and the reduced instance is solved instead.
pub fn proposed_schedule<T: Scalar>(
    state: &FleetState<T>,
    prices: PriceSeries<T>,
    weights: Weights<T>,
    ctx: &PlanContext<T>,
) -> Result<ProposedPlan<T>> {
    let mut inst = instance_from_state(state, prices, weights, ctx)?;
    let ids = state.vehicle_ids();
    if inst.n_vehicles() == 0 {
        let report = SolveReport {
            objective: T::zero(),
            breakdown: Default::default(),
            wall_time_ms: 0.0,
            iterations: 0,
            branch_assignment: Vec::new(),
            status: SolveStatus::OptimalLocal,
            points: crate::problem::NormalizationPoints::identity(),
        };
        return Ok(ProposedPlan { plan: Plan { t_s: state.now, dt_secs: ctx.limits.dt_secs, vehicle_ids: ids, alloc: inst.zero_allocation() }, report, relaxed: Vec::new() });
    }
    let mut relaxed = Vec::new();
    if !solver::feasibility_check(&inst).is_feasible() {
        let cs = build_constraints(&inst);
        let mut short = unmet_lower_bounds(&inst);
        // vehicles that cannot make it even alone are capped at what they can reach
        for &v in &cs.infeasible_by_construction {
            let reach = ctx.limits.i_max * crate::scalar::from_usize::<T>(cs.tt[v]) * cs.dt_hours;
            short[v] = short[v].max(cs.windows[v].lo_ah - reach);
        }
        let slack = lit::<T>(1e-9) * ctx.limits.c_bat;
        for (v, s) in short.iter().enumerate() {
            if *s > T::zero() {
                let task = &mut inst.tasks[v];
                let reduced = (task.soc_dep - (*s + slack) / ctx.limits.c_bat).max(task.soc_start.min(task.soc_dep));
                task.soc_dep = reduced.max(T::zero());
                relaxed.push(ids[v].clone());
            }
        }
    }
    let (alloc, report) = solver::solve(&inst, &ctx.solver)?;
    Ok(ProposedPlan { plan: Plan { t_s: state.now, dt_secs: ctx.limits.dt_secs, vehicle_ids: ids, alloc }, report, relaxed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    VehicleCapacity,
    StationCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admission {
    Accepted,
    Rejected(RejectReason),
}

/// Accepts a task iff the fleet plus the task can still meet every lower
/// energy bound. When the fleet alone is already short, the task is accepted
/// only if it does not add to the shortfall.
pub fn admit_task<T: Scalar>(task: &ChargingTask<T>, state: &FleetState<T>, ctx: &PlanContext<T>) -> Result<Admission> {
    task.validate()?;
    let flat = PriceSeries::flat(T::zero(), 1)?;
    let lim = ctx.limits;
    let tt = charging_period(task.t_dep.max(state.now), state.now, lim.dt_secs)?;
    let reach = lim.i_max * crate::scalar::from_usize::<T>(tt) * lim.dt_hours();
    let need = task.required_ah(lim.c_bat);
    let slack = lit::<T>(1e-9) * lim.c_bat;
    if reach + slack < need {
        return Ok(Admission::Rejected(RejectReason::VehicleCapacity));
    }
    let mut with = state.clone();
    with.plug(ChargingTask { soc_start: task.soc_start, ..task.clone() })?;
    let shortfall = |s: &FleetState<T>| -> Result<T> {
        if s.is_empty() {
            return Ok(T::zero());
        }
        let inst = instance_from_state(s, flat.clone(), Weights::unity(), ctx)?;
        Ok(unmet_lower_bounds(&inst).iter().copied().sum())
    };
    let after = shortfall(&with)?;
    if after <= slack {
        return Ok(Admission::Accepted);
    }
    let before = shortfall(state)?;
    if after <= before + slack {
        Ok(Admission::Accepted)
    } else {
        Ok(Admission::Rejected(RejectReason::StationCapacity))
    }
}

/// Realized charging of one vehicle over one (possibly partial) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow<T> {
    pub time: Timestamp,
    pub duration_secs: i64,
    pub vehicle_id: String,
    pub current_a: T,
    pub power_kw: T,
    pub price: T,
    pub cost_usd: T,
    pub energy_ah: T,
    /// SoC at the end of the segment.
    pub soc: T,
    pub fade_exact_ah: T,
    pub fade_approx_ah: T,
}

/// Rows for every plugged vehicle over one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLedger<T> {
    pub time: Timestamp,
    pub duration_secs: i64,
    pub rows: Vec<LedgerRow<T>>,
}

impl<T: Scalar> SlotLedger<T> {
    pub fn energy_ah(&self) -> T {
        self.rows.iter().map(|r| r.energy_ah).sum()
    }

    pub fn station_current(&self) -> T {
        self.rows.iter().map(|r| r.current_a).sum()
    }
}

/// Charges one vehicle at `current` for `duration_secs` of a slot.
///
/// Fade is the full-slot value scaled by the fraction of the slot covered, so
/// splitting a slot at an event does not change the total.
pub fn charge_vehicle<T: Scalar>(
    vehicle: &mut VehicleState<T>,
    current: T,
    time: Timestamp,
    duration_secs: i64,
    price: T,
    limits: &ChargeLimits<T>,
    fade: &FadeModelParams<T>,
) -> Result<LedgerRow<T>> {
    let dt = limits.dt_hours();
    let frac = lit::<T>(duration_secs as f64 / limits.dt_secs as f64);
    let hours = dt * frac;
    let current = current.max(T::zero());
    let energy_ah = current * hours;
    let soc_init = vehicle.soc_cur;
    let soc = soc_init + energy_ah / limits.c_bat;
    if soc > T::one() + lit(SOC_OVERFLOW_TOL) {
        return Err(Error::SocOverflow { vehicle: vehicle.task.vehicle_id.clone(), soc: to_f64(soc) });
    }
    // full-slot stress at this current, clamped so a slot that would overfill
    // is still evaluated inside the model's domain
    let full_ah = (current * dt).min((T::one() - soc_init).max(T::zero()) * limits.c_bat);
    let slot_current = if dt > T::zero() { full_ah / dt } else { T::zero() };
    let slot = SlotCharge::new(soc_init.min(T::one()), slot_current, dt, limits.c_bat);
    let exact = total_fade_exact(&slot, fade)?;
    let soc_avg = soc_init + lit::<T>(0.5) * full_ah / limits.c_bat;
    let approx = cyclic_fade_approx(&slot, fade)? + calendric_fade_approx(soc_avg, fade)?;
    let power_kw = current * limits.voltage / lit(1000.0);
    vehicle.soc_cur = soc.min(T::one());
    Ok(LedgerRow {
        time,
        duration_secs,
        vehicle_id: vehicle.task.vehicle_id.clone(),
        current_a: current,
        power_kw,
        price,
        cost_usd: power_kw * hours * price,
        energy_ah,
        soc: vehicle.soc_cur,
        fade_exact_ah: exact * frac,
        fade_approx_ah: approx * frac,
    })
}

/// Applies `duration_secs` of the plan's slot `slot` to every plugged vehicle
/// and advances the clock.
pub fn apply_slot<T: Scalar>(
    state: &mut FleetState<T>,
    plan: &Plan<T>,
    slot: usize,
    duration_secs: i64,
    price: T,
    limits: &ChargeLimits<T>,
    fade: &FadeModelParams<T>,
) -> Result<SlotLedger<T>> {
    let time = state.now;
    let mut rows = Vec::with_capacity(state.vehicles.len());
    for v in state.vehicles.iter_mut().filter(|v| v.plugged) {
        let current = plan.current(slot, &v.task.vehicle_id);
        rows.push(charge_vehicle(v, current, time, duration_secs, price, limits, fade)?);
    }
    state.set_now(time + duration_secs);
    Ok(SlotLedger { time, duration_secs, rows })
}
