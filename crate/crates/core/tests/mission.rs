use std::collections::BTreeSet;

use proptest::prelude::*;

use oros_core::planner::run_mission;
use oros_core::scenario::{Cell, Scenario};
use oros_core::simulator::{compare_metrics, replay_trace, run_soa_baseline, GroundTruth, SimTrace};

fn scenario(
    width: usize,
    height: usize,
    robots: &[(usize, usize)],
    horizon: usize,
    window: usize,
    variant: &str,
    exclusive: bool,
) -> Scenario {
    let robots: Vec<String> = robots
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            format!(
                r#"{{"id": "r{i}", "battery_capacity": 60.0, "initial_battery": 50.0, "start_cell": [{a}, {b}]}}"#
            )
        })
        .collect();
    let text = format!(
        r#"{{
  "grid": {{ "width": {width}, "height": {height} }},
  "robots": [{}],
  "stations": [{{ "cell": [1, 1], "charge_rate": 3.0 }}],
  "energy": {{
    "p_rx": 0.5, "p_sen": 2.0, "p_move_base": 1.0, "base_station": [1, 1], "p_local": 0.25,
    "p_tx": {{ "model": "distance", "p_tx0": 0.5, "kappa": 0.1, "gamma": 1.0 }}
  }},
  "mission": {{ "horizon_t": {horizon}, "collision_exclusive": {exclusive} }},
  "planner": {{ "window_w": {window}, "variant": "{variant}" }},
  "solver": {{ "node_limit": 200 }}
}}"#,
        robots.join(", ")
    );
    Scenario::from_json_str(&text).unwrap()
}

fn tiny() -> Scenario {
    scenario(3, 3, &[(2, 2)], 12, 4, "A", false)
}

#[test]
fn open_grid_is_fully_covered() {
    let s = tiny();
    let trace = run_mission(&s, &GroundTruth::from_scenario(&s)).unwrap();
    assert_eq!((trace.explored, trace.explorable), (9, 9));
    assert_eq!(trace.coverage, 1.0);
}

#[test]
fn walled_start_covers_one_cell() {
    // The station cell stays free but is cut off from the start.
    let s = scenario(3, 3, &[(3, 3)], 12, 4, "A", false);
    let mut gt = GroundTruth::from_scenario(&s);
    for c in gt.grid.cells().filter(|c| *c != Cell::new(3, 3) && *c != Cell::new(1, 1)).collect::<Vec<_>>() {
        gt.grid.obstacles.insert(c);
    }
    let trace = run_mission(&s, &gt).unwrap();
    assert_eq!((trace.explored, trace.explorable), (1, 1));
    assert!(trace.paths()[0].iter().all(|c| *c == Cell::new(3, 3)));
}

#[test]
fn energy_ledger_closes() {
    let s = scenario(4, 3, &[(4, 3), (2, 3)], 10, 3, "A", true);
    let gt = GroundTruth::with_hidden_obstacles(&s, 2, 3);
    let trace = run_mission(&s, &gt).unwrap();
    for (r, spec) in s.robots.iter().enumerate() {
        let last = trace.rows.iter().rfind(|row| row.robot == r).unwrap();
        let e = &trace.energy[r];
        let expected = spec.initial_battery - e.consumed() + e.charged;
        assert!((last.battery - expected).abs() < 1e-9, "robot {r}: {} vs {expected}", last.battery);
    }
}

fn check_invariants(s: &Scenario, gt: &GroundTruth, trace: &SimTrace) {
    // Coverage never shrinks.
    assert!(trace.explored_sizes.windows(2).all(|w| w[0] <= w[1]));
    // One solve per window plus one per triggering event at most.
    let windows = s.horizon().div_ceil(s.window());
    assert!(trace.solves.len() <= trace.events.len() + windows + 1);
    // Robots stay on free cells and share none under exclusivity.
    let hidden = gt.hidden_obstacles(s);
    let mut by_t = std::collections::BTreeMap::<usize, BTreeSet<Cell>>::new();
    for row in &trace.rows {
        assert!(!gt.grid.is_obstacle(row.cell) && !hidden.contains(&row.cell));
        let fresh = by_t.entry(row.t).or_default().insert(row.cell);
        assert!(fresh || !s.mission.collision_exclusive, "cell {} shared at t={}", row.cell, row.t);
    }
    replay_trace(trace, s, gt, 1e-9).unwrap();
    let soa = run_soa_baseline(s, gt, &trace.paths()).unwrap();
    replay_trace(&soa, s, gt, 1e-9).unwrap();
    for (o, b) in trace.rows.iter().zip(&soa.rows) {
        assert_eq!((o.t, o.robot, o.cell), (b.t, b.robot, b.cell));
        assert!(b.consumed >= o.consumed - 1e-12);
    }
    let report = compare_metrics(trace, &soa).unwrap();
    assert!(report.savings >= -1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn missions_keep_invariants(
        width in 3usize..=4,
        two in any::<bool>(),
        horizon in 4usize..=8,
        window in 2usize..=3,
        variant_b in any::<bool>(),
        hidden in 0usize..=2,
        exclusive in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let robots: &[(usize, usize)] = if two { &[(width, 3), (2, 3)] } else { &[(width, 3)] };
        let s = scenario(width, 3, robots, horizon, window, if variant_b { "B" } else { "A" }, exclusive);
        let gt = GroundTruth::with_hidden_obstacles(&s, hidden, seed);
        let trace = run_mission(&s, &gt).unwrap();
        check_invariants(&s, &gt, &trace);
        let again = run_mission(&s, &gt).unwrap();
        prop_assert_eq!(trace.paths(), again.paths());
        prop_assert_eq!(trace.batteries(), again.batteries());
    }
}
