//! Event-driven replay of charging sessions under one policy.
//!
//! All plans share one slot grid aligned to multiples of the slot length.
//! When an event falls inside a slot, that slot finishes at the currents
//! already planned for it (zero for vehicles that just arrived) and the new
//! plan takes over at the next boundary. A vehicle's slot count is rounded
//! up, so its last slot may end after it leaves; a vehicle departing
//! mid-slot is credited with the rest of that slot. Together these keep the
//! remainder of every plan feasible for the next one, so realized charge
//! matches planned charge.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::fade::FadeModelParams;
use crate::ingest::PriceCurve;
use crate::problem::{ChargeLimits, ChargingTask, Timestamp};
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::scheduler::{
    admit_task, apply_slot, baseline_schedule, charge_vehicle, proposed_schedule, Admission, FleetState, LedgerRow, Plan, PlanContext,
    Policy, RejectReason,
};
use crate::solver::SolverConfig;

/// Current above which a slot counts as charging, A.
pub const EPS_ACTIVE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind<T> {
    Arrival(ChargingTask<T>),
    Departure(String),
}

impl<T> EventKind<T> {
    /// Processing order among events at the same instant.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::Arrival(_) => 0,
            EventKind::Departure(_) => 1,
        }
    }

    pub fn vehicle_id(&self) -> &str {
        match self {
            EventKind::Arrival(t) => &t.vehicle_id,
            EventKind::Departure(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    pub time: Timestamp,
    pub kind: EventKind<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub limits: ChargeLimits<T>,
    /// Replacement cost of the whole pack, $.
    pub battery_cost: T,
    /// Fraction of the per-vehicle current limit above which a slot is peak.
    pub peak_threshold: T,
    pub policy: Policy<T>,
    pub fade: FadeModelParams<T>,
    pub solver: SolverConfig<T>,
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        self.fade.validate()?;
        self.solver.validate()?;
        if !(self.peak_threshold > T::zero() && self.peak_threshold <= T::one()) {
            return Err(Error::Config("peak_threshold must be in (0, 1]".into()));
        }
        if !(self.battery_cost > T::zero()) {
            return Err(Error::Config("battery_cost must be positive".into()));
        }
        if let Policy::Proposed { weights } = &self.policy {
            weights.validate()?;
        }
        Ok(())
    }

    fn context(&self) -> PlanContext<T> {
        PlanContext { limits: self.limits, fade: self.fade, solver: self.solver }
    }
}

/// Run totals. Times are hours, money is $, fade is Ah.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub total_charging_cost: T,
    pub total_fade_exact: T,
    pub total_fade_approx: T,
    pub total_value_loss: T,
    pub total_peak_power_period: T,
    pub total_charging_time: T,
    /// Slowest single plan, ms.
    pub max_opt_time_ms: f64,
    pub n_rejected: usize,
    pub n_served: usize,
    /// Plans whose lower energy bounds had to be reduced.
    pub n_relaxed: usize,
    /// Peak power period of each plan, h.
    pub per_event_peak_period: Vec<T>,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn mean_event_peak_period(&self) -> T {
        if self.per_event_peak_period.is_empty() {
            return T::zero();
        }
        self.per_event_peak_period.iter().copied().sum::<T>() / from_usize(self.per_event_peak_period.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureRecord<T> {
    pub vehicle_id: String,
    pub time: Timestamp,
    pub soc: T,
    /// Required departure SoC and the top of the allowed band.
    pub soc_lo: T,
    pub soc_hi: T,
}

impl<T: Scalar> DepartureRecord<T> {
    pub fn within(&self, tol: T) -> bool {
        self.soc >= self.soc_lo - tol && self.soc <= self.soc_hi + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub vehicle_id: String,
    pub time: Timestamp,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome<T> {
    pub metrics: MetricsReport<T>,
    pub ledger: Vec<LedgerRow<T>>,
    pub departures: Vec<DepartureRecord<T>>,
    pub rejections: Vec<Rejection>,
    /// Wall time of each plan, ms.
    pub plan_times_ms: Vec<f64>,
}

/// `Σ Δt` over cells whose power exceeds the threshold share of maximum power.
pub fn peak_power_period<T: Scalar>(alloc: &Allocation<T>, limits: &ChargeLimits<T>, threshold: T) -> T {
    let cut = threshold * limits.i_max * limits.voltage;
    let n = alloc.as_slice().iter().filter(|i| **i * limits.voltage > cut).count();
    from_usize::<T>(n) * limits.dt_hours()
}

/// `Σ Δt` over cells with a nonzero current.
pub fn charging_time<T: Scalar>(alloc: &Allocation<T>, limits: &ChargeLimits<T>) -> T {
    let n = alloc.as_slice().iter().filter(|i| **i > lit(EPS_ACTIVE)).count();
    from_usize::<T>(n) * limits.dt_hours()
}

/// Amortized pack value lost to `fade_ah` of capacity fade.
pub fn value_loss<T: Scalar>(fade_ah: T, battery_cost: T, c_bat: T) -> T {
    battery_cost * fade_ah / c_bat
}

/// Departure SoC band for a task: the required SoC up to `SoC_xtra` above it.
pub fn departure_band<T: Scalar>(task: &ChargingTask<T>, limits: &ChargeLimits<T>) -> (T, T) {
    let lo = task.soc_dep.max(task.soc_start);
    let hi = (task.soc_dep + limits.soc_xtra_ah / limits.c_bat).max(task.soc_start).min(T::one());
    (lo, hi.max(lo))
}

/// Start of the grid slot containing `t`.
fn slot_floor(t: Timestamp, dt: i64) -> Timestamp {
    t - t.rem_euclid(dt)
}

/// Currents the running slot is committed to at `t`, per fleet vehicle, and
/// the boundary where the next plan starts.
fn commitment<T: Scalar>(state: &FleetState<T>, plan: Option<&Plan<T>>, t: Timestamp) -> (Vec<T>, Timestamp) {
    let dt = state.dt_secs;
    let start = slot_floor(t, dt);
    if start == t {
        return (vec![T::zero(); state.vehicles.len()], t);
    }
    let committed = state
        .vehicles
        .iter()
        .map(|v| match plan {
            Some(p) => p.current(((start - p.t_s) / dt) as usize, &v.task.vehicle_id),
            None => T::zero(),
        })
        .collect();
    (committed, start + dt)
}

/// The fleet as it will stand at `next` once the committed currents have run,
/// without the vehicles that leave before then.
fn projected<T: Scalar>(state: &FleetState<T>, committed: &[T], next: Timestamp, lim: &ChargeLimits<T>) -> FleetState<T> {
    let hours = lit::<T>((next - state.now) as f64 / 3600.0);
    let mut ahead = FleetState::new(next, state.dt_secs);
    for (v, current) in state.vehicles.iter().zip(committed) {
        if v.task.t_dep > next {
            let mut v = v.clone();
            v.soc_cur = (v.soc_cur + *current * hours / lim.c_bat).min(T::one());
            ahead.vehicles.push(v);
        }
    }
    ahead.set_now(next);
    ahead
}

/// Prefixes `inner` (anchored at the next boundary) with the committed slot.
fn splice<T: Scalar>(state: &FleetState<T>, committed: &[T], inner: Plan<T>) -> Plan<T> {
    let dt = state.dt_secs;
    let start = slot_floor(state.now, dt);
    if start == inner.t_s {
        return inner;
    }
    let ids = state.vehicle_ids();
    let mut alloc = Allocation::zeros(inner.alloc.horizon() + 1, ids.len());
    for (v, id) in ids.iter().enumerate() {
        alloc.set(0, v, committed[v]);
        for i in 0..inner.alloc.horizon() {
            alloc.set(i + 1, v, inner.current(i, id));
        }
    }
    Plan { t_s: start, dt_secs: dt, vehicle_ids: ids, alloc }
}

/// Replays `events` and accumulates metrics.
pub fn run<T: Scalar>(events: &[Event<T>], prices: &PriceCurve<T>, cfg: &SimConfig<T>) -> Result<SimOutcome<T>> {
    cfg.validate()?;
    let mut events = events.to_vec();
    events.sort_by_key(|e| (e.time, e.kind.rank()));
    let lim = cfg.limits;
    let dt = lim.dt_secs;
    let ctx = cfg.context();
    let mut out = SimOutcome {
        metrics: MetricsReport::default(),
        ledger: Vec::new(),
        departures: Vec::new(),
        rejections: Vec::new(),
        plan_times_ms: Vec::new(),
    };
    let Some(first) = events.first() else {
        return Ok(out);
    };
    let mut state = FleetState::new(first.time, dt);
    let mut plan: Option<Plan<T>> = None;
    let mut rejected: HashSet<String> = HashSet::new();
    let mut seen: HashSet<String> = HashSet::new();

    let mut k = 0;
    while k < events.len() {
        let t = events[k].time;
        let end = k + events[k..].iter().take_while(|e| e.time == t).count();

        // realize the current plan up to t
        while state.now < t {
            let Some(p) = plan.as_ref().filter(|_| !state.is_empty()) else {
                state.set_now(t);
                break;
            };
            let slot = ((state.now - p.t_s) / dt) as usize;
            let slot_start = p.t_s + slot as i64 * dt;
            let seg_end = t.min(slot_start + dt);
            let price = prices.price_at(slot_start)?;
            let duration = seg_end - state.now;
            let ledger = apply_slot(&mut state, p, slot, duration, price, &lim, &cfg.fade)?;
            out.ledger.extend(ledger.rows);
        }

        for e in &events[k..end] {
            match &e.kind {
                EventKind::Departure(id) => {
                    if rejected.remove(id) {
                        continue;
                    }
                    let Some(pos) = state.vehicles.iter().position(|v| &v.task.vehicle_id == id) else {
                        return Err(Error::UnmatchedDeparture(id.clone()));
                    };
                    if let Some(p) = &plan {
                        let off = t - p.t_s;
                        if off % dt != 0 {
                            let slot = (off / dt) as usize;
                            let slot_start = p.t_s + slot as i64 * dt;
                            let current = p.current(slot, id);
                            let price = prices.price_at(slot_start)?;
                            let row = charge_vehicle(&mut state.vehicles[pos], current, t, slot_start + dt - t, price, &lim, &cfg.fade)?;
                            out.ledger.push(row);
                        }
                    }
                    let v = state.unplug(id).expect("vehicle located above");
                    let (soc_lo, soc_hi) = departure_band(&v.task, &lim);
                    out.departures.push(DepartureRecord { vehicle_id: id.clone(), time: t, soc: v.soc_cur, soc_lo, soc_hi });
                }
                EventKind::Arrival(task) => {
                    if !seen.insert(task.vehicle_id.clone()) {
                        return Err(Error::InvalidInstance(format!("vehicle {} arrives twice", task.vehicle_id)));
                    }
                    let task = ChargingTask { t_arr: t, ..task.clone() };
                    let admission = match cfg.policy {
                        Policy::Baseline => Admission::Accepted,
                        Policy::Proposed { .. } => {
                            let (committed, next) = commitment(&state, plan.as_ref(), t);
                            admit_task(&task, &projected(&state, &committed, next, &lim), &ctx)?
                        }
                    };
                    match admission {
                        Admission::Accepted => state.plug(task)?,
                        Admission::Rejected(reason) => {
                            log::info!("rejected {} at {t}: {reason:?}", task.vehicle_id);
                            rejected.insert(task.vehicle_id.clone());
                            out.rejections.push(Rejection { vehicle_id: task.vehicle_id.clone(), time: t, reason });
                        }
                    }
                }
            }
        }

        state.set_now(t);
        plan = if state.is_empty() {
            None
        } else {
            let (committed, next) = commitment(&state, plan.as_ref(), t);
            let ahead = projected(&state, &committed, next, &lim);
            let inner = if ahead.is_empty() {
                Plan { t_s: next, dt_secs: dt, vehicle_ids: Vec::new(), alloc: Allocation::zeros(0, 0) }
            } else {
                match cfg.policy {
                    Policy::Baseline => {
                        let started = std::time::Instant::now();
                        let p = baseline_schedule(&ahead, &lim);
                        out.plan_times_ms.push(started.elapsed().as_secs_f64() * 1e3);
                        p
                    }
                    Policy::Proposed { weights } => {
                        let horizon = ahead.vehicles.iter().map(|v| v.slots_remaining).max().unwrap_or(0);
                        let series = prices.resample(next, dt, horizon)?;
                        let pp = proposed_schedule(&ahead, series, weights, &ctx)?;
                        if !pp.relaxed.is_empty() {
                            log::warn!("plan at {next} relaxed lower bounds for {:?}", pp.relaxed);
                            out.metrics.n_relaxed += 1;
                        }
                        out.plan_times_ms.push(pp.report.wall_time_ms);
                        pp.plan
                    }
                }
            };
            let p = splice(&state, &committed, inner);
            out.metrics.per_event_peak_period.push(peak_power_period(&p.alloc, &lim, cfg.peak_threshold));
            Some(p)
        };
        k = end;
    }
    if !state.is_empty() {
        return Err(Error::InvalidInstance(format!("{} vehicle(s) never depart", state.vehicles.len())));
    }

    let m = &mut out.metrics;
    let hours = |r: &LedgerRow<T>| lit::<T>(r.duration_secs as f64 / 3600.0);
    let peak_cut = cfg.peak_threshold * lim.i_max;
    for r in &out.ledger {
        m.total_charging_cost += r.cost_usd;
        m.total_fade_exact += r.fade_exact_ah;
        m.total_fade_approx += r.fade_approx_ah;
        if r.current_a > peak_cut {
            m.total_peak_power_period += hours(r);
        }
        if r.current_a > lit(EPS_ACTIVE) {
            m.total_charging_time += hours(r);
        }
    }
    m.total_value_loss = value_loss(m.total_fade_exact, cfg.battery_cost, lim.c_bat);
    m.max_opt_time_ms = out.plan_times_ms.iter().copied().fold(0.0, f64::max);
    m.n_rejected = out.rejections.len();
    m.n_served = out.departures.len();
    log::debug!("run done: cost {} fade {}", to_f64(m.total_charging_cost), to_f64(m.total_fade_exact));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PriceRecord;
    use crate::problem::Weights;

    fn limits() -> ChargeLimits<f64> {
        ChargeLimits { i_max: 80.0, ic_max: 320.0, voltage: 410.0, c_bat: 210.0, soc_xtra_ah: 21.0, dt_secs: 1800 }
    }

    fn cfg(policy: Policy<f64>) -> SimConfig<f64> {
        SimConfig {
            limits: limits(),
            battery_cost: 11610.0,
            peak_threshold: 0.75,
            policy,
            fade: Default::default(),
            solver: Default::default(),
        }
    }

    fn flat(price: f64) -> PriceCurve<f64> {
        PriceCurve::new(vec![PriceRecord { timestamp: 0, price }]).unwrap()
    }

    fn session(id: &str, arr: i64, dep: i64, soc_start: f64, soc_dep: f64) -> Vec<Event<f64>> {
        vec![
            Event { time: arr, kind: EventKind::Arrival(ChargingTask { vehicle_id: id.into(), t_arr: arr, t_dep: dep, soc_start, soc_dep }) },
            Event { time: dep, kind: EventKind::Departure(id.into()) },
        ]
    }

    #[test]
    fn metric_helpers() {
        let mut lim = limits();
        lim.dt_secs = 900;
        let a = Allocation::from_vec(3, 1, vec![80.0; 3]).unwrap();
        assert_eq!(peak_power_period(&a, &lim, 0.75), 0.75);
        let a = Allocation::from_vec(3, 1, vec![60.0; 3]).unwrap();
        assert_eq!(peak_power_period(&a, &lim, 0.75), 0.0);
        assert_eq!(charging_time(&Allocation::<f64>::zeros(4, 2), &lim), 0.0);
        lim.dt_secs = 1800;
        let a = Allocation::from_vec(3, 1, vec![5.0, 0.0, 7.0]).unwrap();
        assert_eq!(charging_time(&a, &lim), 1.0);

        assert_eq!(value_loss(0.0, 11610.0, 210.0), 0.0);
        // 0.95 Ah is itself rounded to 0.01 Ah, worth about $0.28 at this ratio
        assert!((value_loss(0.95f64, 11610.0, 209.7) - 52.58).abs() < 0.05);
        assert_eq!(value_loss(210.0, 11610.0, 210.0), 11610.0);
    }

    #[test]
    fn no_events_no_metrics() {
        let out = run::<f64>(&[], &flat(0.1), &cfg(Policy::Baseline)).unwrap();
        assert_eq!(out.metrics, MetricsReport::default());
    }

    #[test]
    fn single_baseline_arrival_matches_counting() {
        // 0.4 → full is 126 Ah: 3 slots at 80 A (40 Ah each) plus 6 Ah
        let events = session("a", 0, 8 * 1800, 0.4, 0.6);
        let out = run(&events, &flat(0.2), &cfg(Policy::Baseline)).unwrap();
        let m = &out.metrics;
        let energy_kwh = 126.0 * 410.0 / 1000.0;
        assert!((m.total_charging_cost - energy_kwh * 0.2).abs() < 1e-9, "{}", m.total_charging_cost);
        assert!((m.total_charging_time - 4.0 * 0.5).abs() < 1e-12);
        assert!((m.total_peak_power_period - 3.0 * 0.5).abs() < 1e-12);
        assert!((out.departures[0].soc - 1.0).abs() < 1e-12);
        assert_eq!(m.total_value_loss, value_loss(m.total_fade_exact, 11610.0, 210.0));
    }

    #[test]
    fn unmatched_departure_is_an_error() {
        let events = vec![Event { time: 0, kind: EventKind::Departure("ghost".into()) }];
        assert_eq!(run(&events, &flat(0.1), &cfg(Policy::Baseline)).unwrap_err(), Error::UnmatchedDeparture("ghost".into()));
    }

    #[test]
    fn prices_must_cover_events() {
        let curve = PriceCurve::new(vec![PriceRecord { timestamp: 10_000, price: 0.1 }]).unwrap();
        let events = session("a", 0, 8 * 1800, 0.4, 0.6);
        let err = run(&events, &curve, &cfg(Policy::Baseline)).unwrap_err();
        assert!(matches!(err, Error::PriceGap(_)));
    }

    #[test]
    fn mid_slot_departure_meets_band() {
        let events = [
            session("a", 0, 5 * 1800 + 600, 0.3, 0.6),
            session("b", 900, 6 * 1800 + 100, 0.35, 0.55),
            session("c", 1000, 3 * 1800 + 1700, 0.5, 0.7),
        ]
        .concat();
        let out = run(&events, &flat(0.15), &cfg(Policy::Proposed { weights: Weights::unity() })).unwrap();
        assert_eq!(out.departures.len(), 3);
        for d in &out.departures {
            assert!(d.within(1e-6), "{d:?}");
        }
        assert_eq!(out.metrics.n_relaxed, 0);
    }

    #[test]
    fn mid_slot_replan_keeps_promised_capacity() {
        // a needs nearly two full slots and fade-only weights push it late;
        // b leaving mid-slot must not shrink what a can still get
        let events = [session("a", 0, 2400, 0.3, 0.3 + 75.0 / 210.0), session("b", 0, 900, 0.5, 0.52)].concat();
        let out = run(&events, &flat(0.1), &cfg(Policy::Proposed { weights: Weights::new(0.0, 1.0, 0.0) })).unwrap();
        assert_eq!(out.metrics.n_relaxed, 0);
        for d in &out.departures {
            assert!(d.within(1e-6), "{d:?}");
        }
    }

    #[test]
    fn arrival_waits_for_the_next_boundary() {
        let events = session("a", 600, 4 * 1800, 0.4, 0.6);
        let out = run(&events, &flat(0.1), &cfg(Policy::Baseline)).unwrap();
        let first = &out.ledger[0];
        assert_eq!((first.time, first.duration_secs, first.current_a), (600, 1200, 0.0));
        assert_eq!(out.ledger[1].time, 1800);
        assert_eq!(out.ledger[1].current_a, 80.0);
    }
}
