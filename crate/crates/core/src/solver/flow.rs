//! Linear programs over the charging polytope.
//!
//! Every LP the solver needs has the same feasible set: box limits per cell,
//! a current limit per slot, and an energy window per vehicle. That set is a
//! flow network `source → vehicle → slot → sink`, so a linear objective is
//! minimized with successive shortest paths. Lower energy bounds ride on
//! dedicated source arcs whose cost is lexicographically dominant, which also
//! yields the largest satisfiable share of every lower bound when the set is
//! empty.

use std::cmp::Ordering;

use crate::problem::ConstraintSet;
use crate::scalar::{from_usize, lit, Scalar};

#[derive(Debug, Clone, Copy)]
struct Cost<T> {
    lex: i64,
    val: T,
}

impl<T: Scalar> Cost<T> {
    fn zero() -> Self {
        Self { lex: 0, val: T::zero() }
    }

    fn add(self, o: Self) -> Self {
        Self { lex: self.lex + o.lex, val: self.val + o.val }
    }

    fn sub(self, o: Self) -> Self {
        Self { lex: self.lex - o.lex, val: self.val - o.val }
    }

    fn cmp(&self, o: &Self) -> Ordering {
        self.lex.cmp(&o.lex).then(self.val.partial_cmp(&o.val).unwrap_or(Ordering::Equal))
    }
}

#[derive(Debug, Clone)]
struct Arc<T> {
    to: usize,
    rev: usize,
    cap: T,
    cost: Cost<T>,
}

/// Solution of one linear program.
#[derive(Debug, Clone)]
pub(crate) struct LpSolution<T> {
    /// Slot-major currents, same layout as an allocation.
    pub x: Vec<T>,
    /// Unmet part of each vehicle's lower energy bound, Ah.
    pub shortfall_ah: Vec<T>,
}

impl<T: Scalar> LpSolution<T> {
    pub fn total_shortfall(&self) -> T {
        self.shortfall_ah.iter().copied().sum()
    }
}

/// The charging polytope, ready to minimize linear objectives over.
#[derive(Debug, Clone)]
pub(crate) struct TransportLp<'a, T> {
    cs: &'a ConstraintSet<T>,
    /// Per-cell tie-break increment, ordered by (departure rank, slot).
    tiebreak: Vec<T>,
}

impl<'a, T: Scalar> TransportLp<'a, T> {
    pub fn new(cs: &'a ConstraintSet<T>, priority: &[usize]) -> Self {
        let n = cs.n_vehicles();
        let h = cs.horizon;
        let mut tiebreak = vec![T::zero(); h * n];
        let denom = from_usize::<T>((h * n).max(1));
        for (rank, &v) in priority.iter().enumerate() {
            for i in 0..h {
                tiebreak[i * n + v] = from_usize::<T>(rank * h + i) / denom;
            }
        }
        Self { cs, tiebreak }
    }

    pub fn constraints(&self) -> &ConstraintSet<T> {
        self.cs
    }

    fn lower_units(&self, v: usize) -> T {
        self.cs.windows[v].lo_ah / self.cs.dt_hours
    }

    fn upper_units(&self, v: usize) -> T {
        self.cs.windows[v].hi_ah / self.cs.dt_hours
    }

    fn perturbed(&self, costs: &[T]) -> Vec<T> {
        let scale = costs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
        let scale = if scale > T::zero() { scale } else { T::one() };
        let step = T::epsilon().sqrt() * lit(1e-2) * scale;
        costs.iter().zip(&self.tiebreak).map(|(c, t)| *c + step * *t).collect()
    }

    /// Minimizes `costs · x` (slot-major costs) over the polytope.
    pub fn minimize(&self, costs: &[T]) -> LpSolution<T> {
        let costs = self.perturbed(costs);
        if let Some(sol) = self.greedy(&costs) {
            return sol;
        }
        self.flow(&costs)
    }

    /// Largest satisfiable lower bounds with zero objective.
    pub fn max_lower_bounds(&self) -> LpSolution<T> {
        let zero = vec![T::zero(); self.cs.horizon * self.cs.n_vehicles()];
        self.flow(&zero)
    }

    fn cap_eps(&self) -> T {
        T::epsilon() * lit(64.0) * self.cs.i_max.max(T::one())
    }

    /// Solves each vehicle independently, returning `None` if the result
    /// breaks a station limit.
    fn greedy(&self, costs: &[T]) -> Option<LpSolution<T>> {
        let cs = self.cs;
        let n = cs.n_vehicles();
        let mut x = vec![T::zero(); cs.horizon * n];
        let mut shortfall = vec![T::zero(); n];
        let mut cells: Vec<usize> = Vec::with_capacity(cs.horizon);
        for v in 0..n {
            cells.clear();
            cells.extend(0..cs.tt[v]);
            cells.sort_by(|&a, &b| {
                costs[a * n + v].partial_cmp(&costs[b * n + v]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
            });
            let mut lower = self.lower_units(v);
            let mut upper = self.upper_units(v);
            for &i in &cells {
                let c = costs[i * n + v];
                if lower <= T::zero() && c >= T::zero() {
                    break;
                }
                let take = cs.i_max.min(upper).min(cs.station_cap[i]).max(T::zero());
                // keep only what the lower bound needs when the cell is not profitable
                let take = if c >= T::zero() { take.min(lower.max(T::zero())) } else { take };
                if take <= T::zero() {
                    continue;
                }
                x[i * n + v] = take;
                lower -= take;
                upper -= take;
            }
            if lower > self.cap_eps() {
                shortfall[v] = lower * cs.dt_hours;
            }
        }
        let eps = self.cap_eps();
        for i in 0..cs.horizon {
            let total: T = x[i * n..(i + 1) * n].iter().copied().sum();
            if total > cs.station_cap[i] + eps {
                return None;
            }
        }
        if shortfall.iter().any(|s| *s > T::zero()) {
            // a vehicle-level shortfall might still be the flow answer, but let
            // the exact path decide
            return None;
        }
        Some(LpSolution { x, shortfall_ah: shortfall })
    }

    fn flow(&self, costs: &[T]) -> LpSolution<T> {
        let cs = self.cs;
        let n = cs.n_vehicles();
        let h = cs.horizon;
        let source = 0;
        let sink = n + h + 1;
        let nodes = n + h + 2;
        let mut graph: Vec<Vec<Arc<T>>> = vec![Vec::new(); nodes];
        let add = |g: &mut Vec<Vec<Arc<T>>>, from: usize, to: usize, cap: T, cost: Cost<T>| -> (usize, usize) {
            let a = g[from].len();
            let b = g[to].len() + usize::from(from == to);
            g[from].push(Arc { to, rev: b, cap, cost });
            g[to].push(Arc { to: from, rev: a, cap: T::zero(), cost: Cost { lex: -cost.lex, val: -cost.val } });
            (from, a)
        };

        let mut mandatory = vec![None; n];
        let mut cell_arcs = vec![None; h * n];
        for v in 0..n {
            let lo = self.lower_units(v).max(T::zero());
            let hi = self.upper_units(v).max(lo);
            if lo > T::zero() {
                mandatory[v] = Some(add(&mut graph, source, 1 + v, lo, Cost { lex: -1, val: T::zero() }));
            }
            if hi > lo {
                add(&mut graph, source, 1 + v, hi - lo, Cost::zero());
            }
            for i in 0..cs.tt[v] {
                cell_arcs[i * n + v] = Some(add(&mut graph, 1 + v, 1 + n + i, cs.i_max, Cost { lex: 0, val: costs[i * n + v] }));
            }
        }
        for i in 0..h {
            add(&mut graph, 1 + n + i, sink, cs.station_cap[i].max(T::zero()), Cost::zero());
        }

        let eps = self.cap_eps();
        let mut potential = initial_potentials(&graph, n, h, eps);
        let max_rounds = 8 * (h * n + 2 * n + h) + 16;
        let mut dist: Vec<Option<Cost<T>>> = vec![None; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        let mut done = vec![false; nodes];
        for _ in 0..max_rounds {
            dist.iter_mut().for_each(|d| *d = None);
            prev.iter_mut().for_each(|p| *p = None);
            done.iter_mut().for_each(|d| *d = false);
            dist[source] = Some(Cost::zero());
            loop {
                let mut best: Option<(usize, Cost<T>)> = None;
                for u in 0..nodes {
                    if done[u] {
                        continue;
                    }
                    if let Some(d) = dist[u] {
                        if best.is_none_or(|(_, bd)| d.cmp(&bd) == Ordering::Less) {
                            best = Some((u, d));
                        }
                    }
                }
                let Some((u, du)) = best else { break };
                done[u] = true;
                let Some(pu) = potential[u] else { continue };
                for (k, arc) in graph[u].iter().enumerate() {
                    if arc.cap <= eps || done[arc.to] {
                        continue;
                    }
                    let Some(pv) = potential[arc.to] else { continue };
                    let mut reduced = arc.cost.add(pu).sub(pv);
                    if reduced.lex == 0 && reduced.val < T::zero() {
                        reduced.val = T::zero();
                    }
                    let nd = du.add(reduced);
                    if dist[arc.to].is_none_or(|d| nd.cmp(&d) == Ordering::Less) {
                        dist[arc.to] = Some(nd);
                        prev[arc.to] = Some((u, k));
                    }
                }
            }
            let Some(dt) = dist[sink] else { break };
            let actual = dt.add(potential[sink].unwrap()).sub(potential[source].unwrap());
            let improving = actual.lex < 0 || (actual.lex == 0 && actual.val < T::zero());
            if !improving {
                break;
            }
            for u in 0..nodes {
                if let (Some(d), Some(p)) = (dist[u], potential[u]) {
                    potential[u] = Some(p.add(d));
                }
            }
            let mut bottleneck = T::infinity();
            let mut node = sink;
            while let Some((u, k)) = prev[node] {
                bottleneck = bottleneck.min(graph[u][k].cap);
                node = u;
            }
            if !(bottleneck > eps) || !bottleneck.is_finite() {
                break;
            }
            let mut node = sink;
            while let Some((u, k)) = prev[node] {
                graph[u][k].cap -= bottleneck;
                let (to, rev) = (graph[u][k].to, graph[u][k].rev);
                graph[to][rev].cap += bottleneck;
                node = u;
            }
        }

        let mut x = vec![T::zero(); h * n];
        for (cell, arc) in cell_arcs.iter().enumerate() {
            if let Some((u, k)) = *arc {
                let a = &graph[u][k];
                let flow = graph[a.to][a.rev].cap;
                x[cell] = if flow > eps { flow.min(cs.i_max) } else { T::zero() };
            }
        }
        let mut shortfall = vec![T::zero(); n];
        for v in 0..n {
            if let Some((u, k)) = mandatory[v] {
                let left = graph[u][k].cap;
                if left > eps {
                    shortfall[v] = left * cs.dt_hours;
                }
            }
        }
        LpSolution { x, shortfall_ah: shortfall }
    }
}

/// Shortest-path distances from the source in the (acyclic) initial network.
fn initial_potentials<T: Scalar>(graph: &[Vec<Arc<T>>], n: usize, h: usize, eps: T) -> Vec<Option<Cost<T>>> {
    let nodes = n + h + 2;
    let mut pot: Vec<Option<Cost<T>>> = vec![None; nodes];
    pot[0] = Some(Cost::zero());
    // topological order: source, vehicles, slots, sink
    for u in 0..nodes {
        let Some(pu) = pot[u] else { continue };
        for arc in &graph[u] {
            if arc.cap <= eps || arc.to <= u {
                continue;
            }
            let nd = pu.add(arc.cost);
            if pot[arc.to].is_none_or(|d| nd.cmp(&d) == Ordering::Less) {
                pot[arc.to] = Some(nd);
            }
        }
    }
    pot
}
