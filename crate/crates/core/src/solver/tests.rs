use super::*;
use crate::problem::{objective_components, normalized_objective, ChargeLimits, ChargingTask, PriceSeries, Weights};
use proptest::prelude::*;

const SLOT: i64 = 1800;

fn limits(ic_max: f64, xtra: f64) -> ChargeLimits<f64> {
    ChargeLimits { i_max: 80.0, ic_max, voltage: 410.0, c_bat: 210.0, soc_xtra_ah: xtra, dt_secs: SLOT }
}

fn task(id: &str, slots: i64, soc_start: f64, soc_dep: f64) -> ChargingTask<f64> {
    ChargingTask { vehicle_id: id.into(), t_arr: 0, t_dep: slots * SLOT, soc_start, soc_dep }
}

fn instance(tasks: Vec<ChargingTask<f64>>, prices: Vec<f64>, lim: ChargeLimits<f64>, w: Weights<f64>) -> ProblemInstance<f64> {
    ProblemInstance::new(tasks, 0, PriceSeries::new(prices).unwrap(), lim, w, Default::default()).unwrap()
}

fn cfg() -> SolverConfig<f64> {
    SolverConfig::default()
}

#[test]
fn cost_weight_moves_charge_to_cheap_slot() {
    let inst = instance(vec![task("a", 2, 0.3, 0.4)], vec![0.30, 0.10], limits(160.0, 10.5), Weights::new(1.0, 0.0, 0.0));
    let (x, rep) = solve(&inst, &cfg()).unwrap();
    assert!(x.get(0, 0).abs() < 1e-9, "{x:?}");
    assert!((x.get(1, 0) - 42.0).abs() < 1e-6, "{x:?}");
    assert!(rep.wall_time_ms >= 0.0);
}

#[test]
fn availability_weight_moves_charge_to_first_slot() {
    let inst = instance(vec![task("a", 2, 0.3, 0.4)], vec![0.30, 0.10], limits(160.0, 10.5), Weights::new(0.0, 0.0, 1.0));
    let (x, _) = solve(&inst, &cfg()).unwrap();
    assert!(x.get(1, 0).abs() < 1e-9, "{x:?}");
    assert!((x.get(0, 0) - 63.0).abs() < 1e-6, "{x:?}");
}

#[test]
fn feasibility_examples() {
    // 120 Ah needed, 100 Ah reachable
    let mut lim = limits(160.0, 0.0);
    lim.i_max = 50.0;
    lim.dt_secs = 3600;
    let t = ChargingTask { vehicle_id: "a".into(), t_arr: 0, t_dep: 2 * 3600, soc_start: 0.0, soc_dep: 120.0 / 210.0 };
    let inst = instance(vec![t], vec![0.1], lim, Weights::unity());
    assert!(matches!(feasibility_check(&inst), Feasibility::Infeasible(InfeasibleReason::VehicleCapacity { .. })));
    assert!(matches!(solve(&inst, &cfg()), Err(Error::Infeasible(_))));

    // each alone fits, together they exceed the station
    let tasks = vec![task("a", 2, 0.0, 0.38), task("b", 2, 0.0, 0.38)];
    let inst = instance(tasks, vec![0.1], limits(80.0, 0.0), Weights::unity());
    assert!(matches!(feasibility_check(&inst), Feasibility::Infeasible(InfeasibleReason::StationCapacity { .. })));

    let tasks = vec![task("a", 3, 0.9, 0.5), task("b", 1, 0.5, 0.5)];
    let inst = instance(tasks, vec![0.1], limits(80.0, 0.0), Weights::unity());
    assert_eq!(feasibility_check(&inst), Feasibility::Feasible);
}

#[test]
fn flat_price_cost_utopia_is_minimum_energy_cost() {
    let inst = instance(vec![task("a", 6, 0.3, 0.8)], vec![0.2], limits(160.0, 21.0), Weights::unity());
    let p = compute_normalization_points(&inst, &cfg()).unwrap();
    let expected = 0.5 * 210.0 * 410.0 * 0.2 / 1000.0;
    assert!((p.utopia[0] - expected).abs() < 1e-9, "{} vs {expected}", p.utopia[0]);
    for k in 0..3 {
        assert!(p.utopia[k] <= p.nadir[k]);
    }
}

#[test]
fn availability_utopia_single_slot_vehicle() {
    // one slot, window [21, 31.5] Ah: best is the upper end at 63 A
    let inst = instance(vec![task("a", 1, 0.3, 0.4)], vec![0.2], limits(160.0, 10.5), Weights::unity());
    let p = compute_normalization_points(&inst, &cfg()).unwrap();
    assert!((p.utopia[2] - (-63.0 * 410.0)).abs() < 1e-6, "{}", p.utopia[2]);
}

#[test]
fn degenerate_instance_has_equal_points() {
    // window pinned to exactly one allocation: 1 slot at I_max
    let inst = instance(vec![task("a", 1, 0.0, 40.0 / 210.0)], vec![0.2], limits(160.0, 0.0), Weights::unity());
    let p = compute_normalization_points(&inst, &cfg()).unwrap();
    for k in 0..3 {
        assert!((p.nadir[k] - p.utopia[k]).abs() < 1e-9);
    }
    let (x, rep) = solve(&inst, &cfg()).unwrap();
    assert!((x.get(0, 0) - 80.0).abs() < 1e-6);
    assert_eq!(rep.objective, 0.0);
}

#[test]
fn oracle_examples() {
    let inst = instance(vec![task("a", 1, 0.0, 40.0 / 210.0)], vec![0.2], limits(160.0, 0.0), Weights::unity());
    let (x, _) = oracle_grid_search(&inst, &NormalizationPoints::identity(), 8).unwrap();
    assert_eq!(x.get(0, 0), 80.0);

    let inst = instance(vec![task("a", 2, 0.3, 0.4)], vec![0.30, 0.10], limits(160.0, 10.5), Weights::new(1.0, 0.0, 0.0));
    let (x, _) = oracle_grid_search(&inst, &NormalizationPoints::identity(), 8).unwrap();
    assert_eq!(x.get(0, 0), 0.0);
    assert!(x.get(1, 0) > 0.0);

    let tasks: Vec<_> = (0..4).map(|k| task(&format!("v{k}"), 4, 0.1, 0.3)).collect();
    let inst = instance(tasks, vec![0.1], limits(320.0, 10.0), Weights::unity());
    assert!(matches!(
        oracle_grid_search(&inst, &NormalizationPoints::identity(), 8),
        Err(Error::InstanceTooLarge { cells: 16, .. })
    ));
}

fn two_by_four() -> ProblemInstance<f64> {
    let tasks = vec![task("a", 4, 0.2, 0.45), task("b", 3, 0.1, 0.3)];
    instance(tasks, vec![0.25, 0.12, 0.08, 0.3], limits(120.0, 21.0), Weights::unity())
}

#[test]
fn two_by_four_is_within_oracle_gap() {
    let inst = two_by_four();
    let (x, rep) = solve(&inst, &cfg()).unwrap();
    build_constraints(&inst).audit(&x, 1e-6).unwrap();
    let (_, oracle) = oracle_grid_search(&inst, &rep.points, 8).unwrap();
    assert!(rep.objective <= oracle + 0.02 * oracle.abs() + 1e-9, "solve {} vs oracle {oracle}", rep.objective);
}

#[test]
fn report_matches_allocation() {
    let inst = two_by_four();
    let (x, rep) = solve(&inst, &cfg()).unwrap();
    let b = objective_components(&x, &inst).unwrap();
    assert_eq!(b, rep.breakdown);
    assert_eq!(normalized_objective(&b, &rep.points, &inst.weights), rep.objective);
    assert_eq!(rep.branch_assignment, branch_assignment(&x, &inst));
}

#[test]
fn repeated_solves_are_bit_identical() {
    let inst = two_by_four();
    let (a, ra) = solve(&inst, &cfg()).unwrap();
    let (b, rb) = solve(&inst, &cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.objective.to_bits(), rb.objective.to_bits());
}

#[test]
fn never_worse_than_feasible_max_power_start() {
    // full charge is inside the window, so the max-power fill is feasible
    let tasks = vec![task("a", 6, 0.7, 0.95), task("b", 5, 0.8, 0.95)];
    let inst = instance(tasks, vec![0.3, 0.2, 0.1, 0.1, 0.2, 0.3], limits(120.0, 21.0), Weights::unity());
    let base = max_power_allocation(&inst);
    let cs = build_constraints(&inst);
    cs.audit(&base, 1e-9).unwrap();
    let (_, rep) = solve(&inst, &cfg()).unwrap();
    let b = objective_components(&base, &inst).unwrap();
    assert!(rep.objective <= normalized_objective(&b, &rep.points, &inst.weights) + 1e-12);
}

#[test]
fn raising_cost_weight_never_raises_cost() {
    let inst = two_by_four();
    let mut last = f64::INFINITY;
    for a1 in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let w = Weights::new(a1, 1.0, 1.0);
        let (_, rep) = solve(&inst.with_weights(w), &cfg()).unwrap();
        assert!(rep.breakdown.cost <= last + 1e-9, "α1={a1}: cost {} after {last}", rep.breakdown.cost);
        last = rep.breakdown.cost;
    }
}

#[test]
fn single_precision_solve_is_feasible() {
    let lim = ChargeLimits { i_max: 80.0f32, ic_max: 160.0, voltage: 410.0, c_bat: 210.0, soc_xtra_ah: 21.0, dt_secs: SLOT };
    let tasks = vec![ChargingTask { vehicle_id: "a".into(), t_arr: 0, t_dep: 4 * SLOT, soc_start: 0.2f32, soc_dep: 0.5 }];
    let inst = ProblemInstance::new(tasks, 0, PriceSeries::new(vec![0.2f32, 0.1, 0.3]).unwrap(), lim, Weights::unity(), Default::default())
        .unwrap();
    let (x, _) = solve(&inst, &SolverConfig::default()).unwrap();
    build_constraints(&inst).audit(&x, 1e-3).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_pass_the_constraint_audit(
        n in 1usize..4,
        slots in proptest::collection::vec(1i64..8, 3),
        starts in proptest::collection::vec(0.0f64..0.6, 3),
        needs in proptest::collection::vec(0.0f64..0.35, 3),
        prices in proptest::collection::vec(0.01f64..0.5, 8),
        w in proptest::collection::vec(0.0f64..1.0, 3),
        ic in 80.0f64..240.0,
    ) {
        let tasks: Vec<_> = (0..n).map(|v| task(&format!("v{v}"), slots[v], starts[v], (starts[v] + needs[v]).min(1.0))).collect();
        let weights = Weights::new(w[0] + 0.01, w[1], w[2]);
        let inst = instance(tasks, prices, limits(ic, 21.0), weights);
        match solve(&inst, &cfg()) {
            Ok((x, rep)) => {
                prop_assert!(build_constraints(&inst).audit(&x, 1e-6).is_ok());
                prop_assert!(rep.wall_time_ms >= 0.0);
                prop_assert!(rep.status != SolveStatus::Infeasible);
            }
            Err(Error::Infeasible(_)) => prop_assert!(!feasibility_check(&inst).is_feasible()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
