//! Frozen optimization instances: slot grid, objective terms, constraints and
//! utopia/nadir normalization of the weighted sum.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::fade::{select_branch, surface_clamped, Branch, FadeModelParams};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Unix seconds.
pub type Timestamp = i64;

/// Spread below which a normalized objective term is dropped.
pub const EPS_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingTask<T> {
    pub vehicle_id: String,
    pub t_arr: Timestamp,
    pub t_dep: Timestamp,
    /// SoC at optimization start.
    pub soc_start: T,
    /// Required SoC at departure.
    pub soc_dep: T,
}

impl<T: Scalar> ChargingTask<T> {
    pub fn validate(&self) -> Result<()> {
        if self.t_arr > self.t_dep {
            return Err(Error::NegativeDuration { t_dep: self.t_dep, t_s: self.t_arr });
        }
        for soc in [self.soc_start, self.soc_dep] {
            if !(soc >= T::zero() && soc <= T::one()) {
                return Err(Error::SocOutOfRange(to_f64(soc)));
            }
        }
        Ok(())
    }

    /// Charge still required to reach `soc_dep`, Ah (zero when already there).
    pub fn required_ah(&self, c_bat: T) -> T {
        ((self.soc_dep - self.soc_start) * c_bat).max(T::zero())
    }
}

/// Number of slots between `t_s` and departure, rounded up.
pub fn charging_period(t_dep: Timestamp, t_s: Timestamp, dt_secs: i64) -> Result<usize> {
    if dt_secs <= 0 {
        return Err(Error::InvalidInstance(format!("slot length must be positive, got {dt_secs} s")));
    }
    if t_dep < t_s {
        return Err(Error::NegativeDuration { t_dep, t_s });
    }
    let span = t_dep - t_s;
    Ok(((span + dt_secs - 1) / dt_secs) as usize)
}

/// Monotonically decreasing ride-availability weights `1/(i + TT)`.
pub fn availability_weights<T: Scalar>(tt: usize) -> Result<Vec<T>> {
    if tt == 0 {
        return Err(Error::EmptyPeriod);
    }
    Ok((0..tt).map(|i| from_usize::<T>(i + tt).recip()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub t_s: Timestamp,
    pub dt_secs: i64,
    /// Per-vehicle slot counts.
    pub tt: Vec<usize>,
    pub horizon: usize,
}

impl SlotGrid {
    pub fn new<T: Scalar>(t_s: Timestamp, dt_secs: i64, tasks: &[ChargingTask<T>]) -> Result<Self> {
        let tt = tasks
            .iter()
            .map(|t| charging_period(t.t_dep, t_s, dt_secs))
            .collect::<Result<Vec<_>>>()?;
        let horizon = tt.iter().copied().max().unwrap_or(0);
        Ok(Self { t_s, dt_secs, tt, horizon })
    }

    pub fn dt_hours<T: Scalar>(&self) -> T {
        lit::<T>(self.dt_secs as f64 / 3600.0)
    }

    pub fn slot_start(&self, slot: usize) -> Timestamp {
        self.t_s + slot as i64 * self.dt_secs
    }
}

/// Electricity price per slot, $/kWh. Lookups past the end repeat the final price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries<T> {
    prices: Vec<T>,
}

impl<T: Scalar> PriceSeries<T> {
    pub fn new(prices: Vec<T>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(p) = prices.iter().find(|p| !(**p >= T::zero())) {
            return Err(Error::InvalidInstance(format!("negative price {}", to_f64(*p))));
        }
        Ok(Self { prices })
    }

    pub fn flat(price: T, len: usize) -> Result<Self> {
        Self::new(vec![price; len.max(1)])
    }

    #[inline]
    pub fn price(&self, slot: usize) -> T {
        self.prices[slot.min(self.prices.len() - 1)]
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.prices
    }
}

/// Objective weights `(α1, α2, α3)` for cost, fade and availability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub cost: T,
    pub fade: T,
    pub availability: T,
}

impl<T: Scalar> Weights<T> {
    pub fn new(cost: T, fade: T, availability: T) -> Self {
        Self { cost, fade, availability }
    }

    pub fn unity() -> Self {
        Self::new(T::one(), T::one(), T::one())
    }

    pub fn only(kind: ObjectiveKind) -> Self {
        let mut w = [T::zero(); 3];
        w[kind.index()] = T::one();
        Self::from_array(w)
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.cost, self.fade, self.availability]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::InvalidInstance("weights must be nonnegative".into()));
        }
        if a.iter().all(|w| *w == T::zero()) {
            return Err(Error::InvalidInstance("weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Cost,
    Fade,
    Availability,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] = [ObjectiveKind::Cost, ObjectiveKind::Fade, ObjectiveKind::Availability];

    pub fn index(self) -> usize {
        match self {
            ObjectiveKind::Cost => 0,
            ObjectiveKind::Fade => 1,
            ObjectiveKind::Availability => 2,
        }
    }
}

/// Station and vehicle parameters shared by every instance built during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeLimits<T> {
    /// Per-vehicle current limit, A.
    pub i_max: T,
    /// Station current limit, A.
    pub ic_max: T,
    /// Charging voltage, V.
    pub voltage: T,
    /// Nominal capacity, Ah.
    pub c_bat: T,
    /// Extra-charge headroom above the departure requirement, Ah.
    pub soc_xtra_ah: T,
    pub dt_secs: i64,
}

impl<T: Scalar> ChargeLimits<T> {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidInstance(m.to_string()));
        if !(self.i_max > T::zero() && self.i_max <= self.ic_max) {
            return fail("require 0 < i_max <= ic_max");
        }
        if !(self.voltage > T::zero()) {
            return fail("voltage must be positive");
        }
        if !(self.c_bat > T::zero()) {
            return fail("c_bat must be positive");
        }
        if !(self.soc_xtra_ah >= T::zero()) {
            return fail("soc_xtra must be nonnegative");
        }
        if self.dt_secs <= 0 {
            return fail("slot length must be positive");
        }
        Ok(())
    }

    pub fn dt_hours(&self) -> T {
        lit::<T>(self.dt_secs as f64 / 3600.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance<T> {
    pub tasks: Vec<ChargingTask<T>>,
    pub grid: SlotGrid,
    pub prices: PriceSeries<T>,
    pub limits: ChargeLimits<T>,
    pub weights: Weights<T>,
    pub fade: FadeModelParams<T>,
    /// Station current already committed during the first slot, A.
    pub first_slot_reserve: T,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(
        tasks: Vec<ChargingTask<T>>,
        t_s: Timestamp,
        prices: PriceSeries<T>,
        limits: ChargeLimits<T>,
        weights: Weights<T>,
        fade: FadeModelParams<T>,
    ) -> Result<Self> {
        limits.validate()?;
        weights.validate()?;
        fade.validate()?;
        for t in &tasks {
            t.validate()?;
        }
        let grid = SlotGrid::new(t_s, limits.dt_secs, &tasks)?;
        Ok(Self { tasks, grid, prices, limits, weights, fade, first_slot_reserve: T::zero() })
    }

    pub fn with_first_slot_reserve(mut self, reserve: T) -> Self {
        self.first_slot_reserve = reserve.max(T::zero());
        self
    }

    pub fn with_weights(&self, weights: Weights<T>) -> Self {
        Self { weights, ..self.clone() }
    }

    pub fn n_vehicles(&self) -> usize {
        self.tasks.len()
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon
    }

    pub fn dt_hours(&self) -> T {
        self.grid.dt_hours()
    }

    pub fn zero_allocation(&self) -> Allocation<T> {
        Allocation::zeros(self.horizon(), self.n_vehicles())
    }

    /// Number of cells that are actually free (`i < TT_v`).
    pub fn decision_cells(&self) -> usize {
        self.grid.tt.iter().sum()
    }

    /// Station limit per slot after any first-slot reservation.
    pub fn station_cap(&self, slot: usize) -> T {
        if slot == 0 {
            (self.limits.ic_max - self.first_slot_reserve).max(T::zero())
        } else {
            self.limits.ic_max
        }
    }

    /// Vehicle order for deterministic tie-breaking: by departure, then id.
    pub fn priority_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tasks.len()).collect();
        order.sort_by(|&a, &b| {
            let (ta, tb) = (&self.tasks[a], &self.tasks[b]);
            ta.t_dep.cmp(&tb.t_dep).then_with(|| ta.vehicle_id.cmp(&tb.vehicle_id)).then(a.cmp(&b))
        });
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown<T> {
    /// Charging cost, $.
    pub cost: T,
    /// Approximate total capacity fade, Ah.
    pub fade: T,
    /// Weighted negative power, W.
    pub availability: T,
}

impl<T: Scalar> ObjectiveBreakdown<T> {
    pub fn as_array(&self) -> [T; 3] {
        [self.cost, self.fade, self.availability]
    }

    pub fn get(&self, kind: ObjectiveKind) -> T {
        self.as_array()[kind.index()]
    }
}

/// Computes the three objective terms of an allocation.
pub fn objective_components<T: Scalar>(alloc: &Allocation<T>, inst: &ProblemInstance<T>) -> Result<ObjectiveBreakdown<T>> {
    check_dimensions(alloc, inst)?;
    for (v, &tt) in inst.grid.tt.iter().enumerate() {
        for i in tt..inst.horizon() {
            if alloc.get(i, v) != T::zero() {
                return Err(Error::DimensionMismatch {
                    expected: format!("I[{i},{v}] = 0 beyond the charging period"),
                    got: format!("{}", to_f64(alloc.get(i, v))),
                });
            }
        }
    }
    Ok(breakdown_with(alloc, inst, None))
}

pub(crate) fn check_dimensions<T: Scalar>(alloc: &Allocation<T>, inst: &ProblemInstance<T>) -> Result<()> {
    if alloc.horizon() != inst.horizon() || alloc.n_vehicles() != inst.n_vehicles() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", inst.horizon(), inst.n_vehicles()),
            got: format!("{}x{}", alloc.horizon(), alloc.n_vehicles()),
        });
    }
    Ok(())
}

/// Objective terms with branches either derived per cell (`None`) or taken
/// from a fixed assignment laid out like the allocation.
pub(crate) fn breakdown_with<T: Scalar>(
    alloc: &Allocation<T>,
    inst: &ProblemInstance<T>,
    branches: Option<&[Branch]>,
) -> ObjectiveBreakdown<T> {
    let n = inst.n_vehicles();
    let dt = inst.dt_hours();
    let v_volt = inst.limits.voltage;
    let energy_price = v_volt * dt / lit(1000.0);
    let mut cost = T::zero();
    let mut availability = T::zero();
    let mut fade = T::zero();
    for v in 0..n {
        let tt = inst.grid.tt[v];
        let w0 = from_usize::<T>(tt);
        let mut soc = inst.tasks[v].soc_start;
        for i in 0..tt {
            let current = alloc.get(i, v);
            cost += inst.prices.price(i) * current * energy_price;
            availability -= current * v_volt / (from_usize::<T>(i) + w0);
            fade += cell_fade(&inst.fade, soc, current, dt, inst.limits.c_bat, branches.map(|b| b[i * n + v]));
            soc += current * dt / inst.limits.c_bat;
        }
    }
    ObjectiveBreakdown { cost, fade, availability }
}

#[inline]
pub(crate) fn cell_fade<T: Scalar>(
    params: &FadeModelParams<T>,
    soc_init: T,
    current: T,
    dt: T,
    c_bat: T,
    branch: Option<Branch>,
) -> T {
    let soc_avg = soc_init + lit::<T>(0.5) * current * dt / c_bat;
    let branch = branch.unwrap_or_else(|| select_branch(current, soc_init, params));
    surface_clamped(params.coeffs(branch), soc_avg, current) + params.p1 * soc_avg + params.p2
}

/// Branch in force at each cell for the given allocation.
pub fn branch_assignment<T: Scalar>(alloc: &Allocation<T>, inst: &ProblemInstance<T>) -> Vec<Branch> {
    let n = inst.n_vehicles();
    let dt = inst.dt_hours();
    let mut out = vec![Branch::Lo; inst.horizon() * n];
    for v in 0..n {
        let mut soc = inst.tasks[v].soc_start;
        for i in 0..inst.grid.tt[v] {
            let current = alloc.get(i, v);
            out[i * n + v] = select_branch(current, soc, &inst.fade);
            soc += current * dt / inst.limits.c_bat;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow<T> {
    pub lo_ah: T,
    pub hi_ah: T,
}

/// A violated constraint found by [`ConstraintSet::audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Negative { slot: usize, vehicle: usize, value: f64 },
    VehicleLimit { slot: usize, vehicle: usize, value: f64 },
    StationLimit { slot: usize, total: f64, cap: f64 },
    OutsidePeriod { slot: usize, vehicle: usize, value: f64 },
    EnergyBelow { vehicle: usize, delivered_ah: f64, lo_ah: f64 },
    EnergyAbove { vehicle: usize, delivered_ah: f64, hi_ah: f64 },
    SocAboveOne { vehicle: usize, soc: f64 },
}

/// Linear constraints of an instance in amps and amp-hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet<T> {
    pub i_max: T,
    pub station_cap: Vec<T>,
    pub windows: Vec<EnergyWindow<T>>,
    pub tt: Vec<usize>,
    pub soc_start: Vec<T>,
    pub c_bat: T,
    pub dt_hours: T,
    pub horizon: usize,
    /// Vehicles that cannot reach their lower energy bound even alone at full current.
    pub infeasible_by_construction: Vec<usize>,
}

impl<T: Scalar> ConstraintSet<T> {
    pub fn n_vehicles(&self) -> usize {
        self.windows.len()
    }

    /// SoC at the start of every slot and at the end of the horizon for one vehicle.
    pub fn soc_trajectory(&self, alloc: &Allocation<T>, vehicle: usize) -> Vec<T> {
        let mut soc = self.soc_start[vehicle];
        let mut out = Vec::with_capacity(self.horizon + 1);
        out.push(soc);
        for i in 0..self.horizon {
            soc += alloc.get(i, vehicle) * self.dt_hours / self.c_bat;
            out.push(soc);
        }
        out
    }

    /// Checks every constraint at absolute tolerance `tol` (A or Ah).
    pub fn audit(&self, alloc: &Allocation<T>, tol: f64) -> std::result::Result<(), Vec<Violation>> {
        let mut bad = Vec::new();
        let n = self.n_vehicles();
        let f = to_f64::<T>;
        for i in 0..self.horizon {
            let mut total = 0.0;
            for v in 0..n {
                let x = f(alloc.get(i, v));
                total += x;
                if x < -tol {
                    bad.push(Violation::Negative { slot: i, vehicle: v, value: x });
                }
                if x > f(self.i_max) + tol {
                    bad.push(Violation::VehicleLimit { slot: i, vehicle: v, value: x });
                }
                if i >= self.tt[v] && x.abs() > tol {
                    bad.push(Violation::OutsidePeriod { slot: i, vehicle: v, value: x });
                }
            }
            if total > f(self.station_cap[i]) + tol {
                bad.push(Violation::StationLimit { slot: i, total, cap: f(self.station_cap[i]) });
            }
        }
        let dt = f(self.dt_hours);
        for v in 0..n {
            let delivered: f64 = (0..self.horizon).map(|i| f(alloc.get(i, v))).sum::<f64>() * dt;
            let w = self.windows[v];
            if delivered < f(w.lo_ah) - tol {
                bad.push(Violation::EnergyBelow { vehicle: v, delivered_ah: delivered, lo_ah: f(w.lo_ah) });
            }
            if delivered > f(w.hi_ah) + tol {
                bad.push(Violation::EnergyAbove { vehicle: v, delivered_ah: delivered, hi_ah: f(w.hi_ah) });
            }
            let soc_end = f(self.soc_start[v]) + delivered / f(self.c_bat);
            if soc_end > 1.0 + tol {
                bad.push(Violation::SocAboveOne { vehicle: v, soc: soc_end });
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

/// Assembles current limits, station limits and per-vehicle energy windows.
///
/// The window is `[need, need + SoC_xtra]` clamped at zero below and at full
/// charge above, where `need = (SoC_dep − SoC_start)·C_bat`.
/// Charge below which a bound violation is treated as rounding, Ah.
pub(crate) fn bound_slack<T: Scalar>(c_bat: T) -> T {
    lit::<T>(1e-7).max(T::epsilon().sqrt()) * c_bat.max(T::one())
}

pub fn build_constraints<T: Scalar>(inst: &ProblemInstance<T>) -> ConstraintSet<T> {
    let lim = &inst.limits;
    let dt = inst.dt_hours();
    let mut windows = Vec::with_capacity(inst.n_vehicles());
    let mut infeasible = Vec::new();
    let slack = bound_slack(lim.c_bat);
    for (v, task) in inst.tasks.iter().enumerate() {
        let need = (task.soc_dep - task.soc_start) * lim.c_bat;
        let headroom = ((T::one() - task.soc_start) * lim.c_bat).max(T::zero());
        let mut lo = need.max(T::zero()).min(headroom);
        let hi = (need + lim.soc_xtra_ah).max(T::zero()).min(headroom).max(lo);
        let reach = lim.i_max * from_usize::<T>(inst.grid.tt[v]) * dt;
        if reach < lo {
            // a requirement met exactly by full current differs from reach by rounding only
            if lo - reach <= slack {
                lo = reach;
            } else {
                infeasible.push(v);
            }
        }
        windows.push(EnergyWindow { lo_ah: lo, hi_ah: hi });
    }
    ConstraintSet {
        i_max: lim.i_max,
        station_cap: (0..inst.horizon()).map(|i| inst.station_cap(i)).collect(),
        windows,
        tt: inst.grid.tt.clone(),
        soc_start: inst.tasks.iter().map(|t| t.soc_start).collect(),
        c_bat: lim.c_bat,
        dt_hours: dt,
        horizon: inst.horizon(),
        infeasible_by_construction: infeasible,
    }
}

/// Per-objective best (utopia) and worst-over-optima (nadir) values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationPoints<T> {
    pub utopia: [T; 3],
    pub nadir: [T; 3],
}

impl<T: Scalar> NormalizationPoints<T> {
    /// Points that leave every raw objective unscaled.
    pub fn identity() -> Self {
        Self { utopia: [T::zero(); 3], nadir: [T::one(); 3] }
    }

    /// Offset and divisor per objective; a zero divisor marks a degenerate term.
    pub fn scaling(&self) -> [(T, T); 3] {
        let mut out = [(T::zero(), T::zero()); 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let spread = self.nadir[k] - self.utopia[k];
            let scale = if spread < lit(EPS_NORM) { T::zero() } else { spread };
            *slot = (self.utopia[k], scale);
        }
        out
    }
}

/// `Σ α_k·(f_k − utopia_k)/(nadir_k − utopia_k)`, dropping degenerate terms.
pub fn normalized_objective<T: Scalar>(breakdown: &ObjectiveBreakdown<T>, points: &NormalizationPoints<T>, weights: &Weights<T>) -> T {
    let f = breakdown.as_array();
    let a = weights.as_array();
    points
        .scaling()
        .iter()
        .enumerate()
        .filter(|(_, (_, scale))| *scale > T::zero())
        .map(|(k, (offset, scale))| a[k] * (f[k] - *offset) / *scale)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn limits() -> ChargeLimits<f64> {
        ChargeLimits { i_max: 50.0, ic_max: 100.0, voltage: 400.0, c_bat: 200.0, soc_xtra_ah: 20.0, dt_secs: 3600 }
    }

    fn task(id: &str, t_dep: i64, soc_start: f64, soc_dep: f64) -> ChargingTask<f64> {
        ChargingTask { vehicle_id: id.into(), t_arr: 0, t_dep, soc_start, soc_dep }
    }

    #[test]
    fn charging_period_examples() {
        assert_eq!(charging_period(125 * 60, 0, 30 * 60).unwrap(), 5);
        assert_eq!(charging_period(0, 0, 30 * 60).unwrap(), 0);
        assert_eq!(charging_period(120 * 60, 0, 30 * 60).unwrap(), 4);
        assert!(matches!(charging_period(-1, 0, 60), Err(Error::NegativeDuration { .. })));
    }

    #[test]
    fn availability_weight_examples() {
        assert_eq!(availability_weights::<f64>(1).unwrap(), vec![1.0]);
        assert_eq!(availability_weights::<f64>(3).unwrap(), vec![1.0 / 3.0, 0.25, 0.2]);
        assert_eq!(availability_weights::<f64>(2).unwrap(), vec![0.5, 1.0 / 3.0]);
        assert_eq!(availability_weights::<f64>(0), Err(Error::EmptyPeriod));
    }

    #[test]
    fn single_slot_cost() {
        let lim = ChargeLimits { dt_secs: 900, ..limits() };
        let inst = ProblemInstance::new(
            vec![task("a", 900, 0.5, 0.5)],
            0,
            PriceSeries::new(vec![0.10]).unwrap(),
            lim,
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let alloc = Allocation::from_vec(1, 1, vec![30.0]).unwrap();
        let b = objective_components(&alloc, &inst).unwrap();
        assert_relative_eq!(b.cost, 0.30, epsilon = 1e-12);
    }

    #[test]
    fn zero_allocation_pays_only_calendric() {
        let inst = ProblemInstance::new(
            vec![task("a", 3 * 3600, 0.25, 0.5)],
            0,
            PriceSeries::flat(0.1, 3).unwrap(),
            limits(),
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let b = objective_components(&inst.zero_allocation(), &inst).unwrap();
        assert_eq!(b.cost, 0.0);
        assert_eq!(b.availability, 0.0);
        assert_relative_eq!(b.fade, 3.0 * (0.0001347 * 0.25 + 0.00005356), max_relative = 1e-14);
    }

    #[test]
    fn two_by_three_breakdown_matches_script() {
        // vehicle a: 3 slots from SoC 0.3; vehicle b: 2 slots from SoC 0.6
        let lim = ChargeLimits { dt_secs: 1800, c_bat: 210.0, voltage: 410.0, i_max: 80.0, ic_max: 160.0, soc_xtra_ah: 21.0 };
        let inst = ProblemInstance::new(
            vec![task("a", 3 * 1800, 0.3, 0.6), task("b", 2 * 1800, 0.6, 0.7)],
            0,
            PriceSeries::new(vec![0.12, 0.05, 0.30]).unwrap(),
            lim,
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let alloc = Allocation::from_vec(3, 2, vec![80.0, 10.0, 20.0, 32.0, 40.0, 0.0]).unwrap();
        let b = objective_components(&alloc, &inst).unwrap();
        assert_relative_eq!(b.cost, 5.207, max_relative = 1e-12);
        assert_relative_eq!(b.availability, -22686.666666666668, max_relative = 1e-12);
        assert_relative_eq!(b.fade, 0.0009501476275809524, max_relative = 1e-10);
    }

    #[test]
    fn rejects_mismatched_or_out_of_period_allocations() {
        let inst = ProblemInstance::new(
            vec![task("a", 3600, 0.2, 0.5), task("b", 7200, 0.2, 0.5)],
            0,
            PriceSeries::flat(0.1, 2).unwrap(),
            limits(),
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        assert!(objective_components(&Allocation::zeros(1, 2), &inst).is_err());
        let mut a = inst.zero_allocation();
        a.set(1, 0, 5.0);
        assert!(objective_components(&a, &inst).is_err());
    }

    #[test]
    fn constraint_examples() {
        let lim = ChargeLimits { soc_xtra_ah: 20.0, ..limits() };
        let inst = ProblemInstance::new(
            vec![task("a", 2 * 3600, 0.3, 0.8)],
            0,
            PriceSeries::flat(0.1, 2).unwrap(),
            lim,
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let cs = build_constraints(&inst);
        assert_eq!(cs.windows[0], EnergyWindow { lo_ah: 100.0, hi_ah: 120.0 });
        assert_eq!(cs.i_max, 50.0);
        assert_eq!(cs.station_cap, vec![100.0, 100.0]);
        assert_eq!(cs.tt, vec![2]);
        // needs 100 Ah and can just reach it
        assert!(cs.infeasible_by_construction.is_empty());

        let short = ProblemInstance::new(
            vec![task("a", 2 * 3600, 0.2, 0.8)],
            0,
            PriceSeries::flat(0.1, 2).unwrap(),
            lim,
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        // 120 Ah required, 100 Ah reachable
        assert_eq!(build_constraints(&short).infeasible_by_construction, vec![0]);
    }

    #[test]
    fn window_clamps_for_charged_vehicles() {
        let inst = ProblemInstance::new(
            vec![task("a", 3600, 0.9, 0.8), task("b", 3600, 0.95, 0.95)],
            0,
            PriceSeries::flat(0.1, 1).unwrap(),
            limits(),
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let cs = build_constraints(&inst);
        assert_eq!(cs.windows[0].lo_ah, 0.0);
        assert_relative_eq!(cs.windows[0].hi_ah, 0.0, epsilon = 1e-12);
        // headroom to full is 10 Ah, below SoC_xtra
        assert_relative_eq!(cs.windows[1].hi_ah, 10.0, epsilon = 1e-12);
        assert_eq!(cs.windows[1].lo_ah, 0.0);
    }

    #[test]
    fn audit_flags_each_violation() {
        let inst = ProblemInstance::new(
            vec![task("a", 3600, 0.3, 0.4), task("b", 2 * 3600, 0.3, 0.4)],
            0,
            PriceSeries::flat(0.1, 2).unwrap(),
            ChargeLimits { ic_max: 60.0, ..limits() },
            Weights::unity(),
            FadeModelParams::default(),
        )
        .unwrap();
        let cs = build_constraints(&inst);
        let ok = Allocation::from_vec(2, 2, vec![20.0, 25.0, 0.0, 0.0]).unwrap();
        assert!(cs.audit(&ok, 1e-6).is_ok());
        let bad = Allocation::from_vec(2, 2, vec![55.0, 10.0, 3.0, -1.0]).unwrap();
        let v = cs.audit(&bad, 1e-6).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::VehicleLimit { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::StationLimit { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::OutsidePeriod { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Negative { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::EnergyAbove { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::EnergyBelow { .. })));
    }

    #[test]
    fn normalization_examples() {
        let pts = NormalizationPoints { utopia: [1.0, 2.0, -10.0], nadir: [3.0, 4.0, -4.0] };
        let at_utopia = ObjectiveBreakdown { cost: 1.0, fade: 2.0, availability: -10.0 };
        let at_nadir = ObjectiveBreakdown { cost: 3.0, fade: 4.0, availability: -4.0 };
        assert_eq!(normalized_objective(&at_utopia, &pts, &Weights::unity()), 0.0);
        assert_eq!(normalized_objective(&at_nadir, &pts, &Weights::unity()), 3.0);
        let mid = ObjectiveBreakdown { cost: 2.0, fade: 4.0, availability: -4.0 };
        assert_eq!(normalized_objective(&mid, &pts, &Weights::new(1.0, 0.0, 0.0)), 0.5);
        let degenerate = NormalizationPoints { utopia: [1.0, 2.0, -10.0], nadir: [1.0, 4.0, -4.0] };
        assert_eq!(normalized_objective(&at_nadir, &degenerate, &Weights::new(1.0, 0.0, 0.0)), 0.0);
    }

    proptest! {
        #[test]
        fn weights_have_period_length_and_decrease(tt in 1usize..400) {
            let w = availability_weights::<f64>(tt).unwrap();
            prop_assert_eq!(w.len(), tt);
            prop_assert!(w.windows(2).all(|p| p[1] < p[0]));
        }

        #[test]
        fn normalized_objective_affine_invariant(
            f in -5.0f64..5.0, u in -5.0f64..0.0, spread in 0.1f64..5.0, a in 0.1f64..10.0, b in -10.0f64..10.0,
        ) {
            let pts = NormalizationPoints { utopia: [u, 0.0, 0.0], nadir: [u + spread, 0.0, 0.0] };
            let br = ObjectiveBreakdown { cost: f, fade: 0.0, availability: 0.0 };
            let scaled_pts = NormalizationPoints { utopia: [a * u + b, 0.0, 0.0], nadir: [a * (u + spread) + b, 0.0, 0.0] };
            let scaled = ObjectiveBreakdown { cost: a * f + b, fade: 0.0, availability: 0.0 };
            let w = Weights::new(0.7, 0.2, 0.1);
            let lhs = normalized_objective(&br, &pts, &w);
            let rhs = normalized_objective(&scaled, &scaled_pts, &w);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn availability_decreases_with_current(i in 0usize..3, v in 0usize..2, bump in 0.1f64..20.0) {
            let inst = ProblemInstance::new(
                vec![task("a", 3 * 3600, 0.1, 0.3), task("b", 3 * 3600, 0.1, 0.3)],
                0,
                PriceSeries::flat(0.1, 3).unwrap(),
                limits(),
                Weights::unity(),
                FadeModelParams::default(),
            ).unwrap();
            let base = Allocation::from_vec(3, 2, vec![10.0; 6]).unwrap();
            let mut more = base.clone();
            more.set(i, v, 10.0 + bump);
            let b0 = objective_components(&base, &inst).unwrap();
            let b1 = objective_components(&more, &inst).unwrap();
            let w = 1.0 / (i as f64 + 3.0);
            prop_assert!(b1.availability < b0.availability);
            prop_assert!(((b1.availability - b0.availability) + w * bump * 400.0).abs() < 1e-6);
        }
    }
}
