//! Receding-horizon mission loop: solve a window, execute it step by step
//! against the simulated world, react to events, and solve again.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::energy::Action;
use crate::milp::{build_model_with, encode_assignment, ModelError, ModelOptions, RobotMoves, WindowState};
use crate::scenario::{Cell, GridMap, Scenario};
use crate::simulator::{self, GroundTruth, SimError, SimTrace, StepCommand, TraceMode};
use crate::solver::plan::step_energy;
use crate::solver::{extract_plan, solve_bnb, BnbOptions, Plan, Status};

/// Mission state as the planner knows it.
#[derive(Clone, Debug, PartialEq)]
pub struct MissionState {
    pub t_now: usize,
    pub positions: Vec<Cell>,
    pub batteries: Vec<f64>,
    pub explored: BTreeSet<Cell>,
    pub known_obstacles: BTreeSet<Cell>,
    /// Terrain estimates learned from battery discrepancies.
    pub terrain: BTreeMap<Cell, f64>,
    /// Robots out of battery; they no longer move or plan.
    pub frozen: Vec<bool>,
    pub active_plan: Option<Plan>,
    /// Steps of `active_plan` already executed.
    pub cursor: usize,
}

impl MissionState {
    pub fn initial(s: &Scenario) -> Self {
        let w = WindowState::initial(s);
        Self {
            t_now: 0,
            positions: w.positions,
            batteries: w.batteries,
            explored: w.explored,
            known_obstacles: BTreeSet::new(),
            terrain: BTreeMap::new(),
            frozen: vec![false; s.robots.len()],
            active_plan: None,
            cursor: 0,
        }
    }

    pub fn active_robots(&self) -> Vec<usize> {
        (0..self.positions.len()).filter(|&r| !self.frozen[r]).collect()
    }

    /// Window start state over the robots still running.
    pub fn window_state(&self) -> WindowState {
        let robots = self.active_robots();
        WindowState {
            t0: self.t_now,
            positions: robots.iter().map(|&r| self.positions[r]).collect(),
            batteries: robots.iter().map(|&r| self.batteries[r]).collect(),
            robots,
            explored: self.explored.clone(),
            known_obstacles: self.known_obstacles.clone(),
            terrain: self.terrain.clone(),
        }
    }

    /// Scenario map with known obstacles and terrain estimates.
    pub fn known_grid(&self, s: &Scenario) -> GridMap {
        self.window_state().effective_grid(s)
    }

    /// Free cells on the known map that active robots can still reach and
    /// nobody has explored.
    pub fn unexplored_reachable(&self, s: &Scenario) -> BTreeSet<Cell> {
        let g = self.known_grid(s);
        let starts = self.active_robots().into_iter().map(|r| self.positions[r]);
        g.reachable_from(starts).into_iter().filter(|c| !self.explored.contains(c)).collect()
    }

    pub fn validate(&self, s: &Scenario) -> Result<(), PlannerError> {
        let g = self.known_grid(s);
        for (r, spec) in s.robots.iter().enumerate() {
            let (cell, level) = (self.positions[r], self.batteries[r]);
            if !g.is_free(cell) {
                return Err(ModelError::BadPosition { robot: spec.id.clone(), cell }.into());
            }
            if !(0.0..=spec.battery_capacity).contains(&level) {
                return Err(
                    ModelError::BadBattery { robot: spec.id.clone(), level, capacity: spec.battery_capacity }.into()
                );
            }
        }
        if let Some(c) = self.explored.iter().find(|c| !g.in_bounds(**c)) {
            return Err(ModelError::BadPosition { robot: String::new(), cell: *c }.into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ObstacleDetected { cell: Cell },
    /// Levels before the step, as predicted on the known map, and as measured.
    BatteryDiscrepancy { before: f64, predicted: f64, reported: f64 },
    TargetFound { cell: Cell },
    PlanExhausted,
    HorizonReached,
    AreaComplete,
    BatteryDepleted,
    /// A move was held back because another robot took the cell.
    PathBlocked { cell: Cell },
    /// The solver returned no usable plan and a heuristic one was used.
    SolverFallback { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: usize,
    /// Scenario robot index, for robot-specific events.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(t: usize, kind: EventKind) -> Self {
        Self { t, robot: None, kind }
    }

    pub fn for_robot(t: usize, robot: usize, kind: EventKind) -> Self {
        Self { t, robot: Some(robot), kind }
    }

    /// Short label for trace files.
    pub fn label(&self) -> String {
        match &self.kind {
            EventKind::ObstacleDetected { cell } => format!("obstacle_detected{cell}"),
            EventKind::BatteryDiscrepancy { predicted, reported, .. } => {
                format!("battery_discrepancy({predicted:.6}->{reported:.6})")
            }
            EventKind::TargetFound { cell } => format!("target_found{cell}"),
            EventKind::PlanExhausted => "plan_exhausted".into(),
            EventKind::HorizonReached => "horizon_reached".into(),
            EventKind::AreaComplete => "area_complete".into(),
            EventKind::BatteryDepleted => "battery_depleted".into(),
            EventKind::PathBlocked { cell } => format!("path_blocked{cell}"),
            EventKind::SolverFallback { .. } => "solver_fallback".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Replan,
    Continue,
    Terminate,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("every robot is out of battery")]
    NoActiveRobots,
}

/// One solver invocation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveRecord {
    pub t: usize,
    pub window: usize,
    pub status: Status,
    pub objective: Option<f64>,
    pub wall_time_s: f64,
    pub nodes: usize,
    /// How the executed plan departs from the solver's: `stay`, `frontier` or none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<&'static str>,
}

#[derive(Clone, Debug)]
pub struct WindowPlan {
    pub plan: Plan,
    pub record: SolveRecord,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug)]
pub enum WindowOutcome {
    Planned(WindowPlan),
    /// Nothing to plan: area complete or horizon reached.
    Done(Event),
}

/// Multi-source step distances to `targets` over free cells.
fn distances_to(g: &GridMap, targets: &BTreeSet<Cell>) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.cell_count()];
    let mut queue = VecDeque::new();
    for &c in targets {
        if g.is_free(c) {
            dist[g.index(c)] = Some(0);
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[g.index(c)].unwrap_or(0);
        for n in g.neighbors(c).unwrap_or_default() {
            if dist[g.index(n)].is_none() {
                dist[g.index(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Greedy exploration moves for the robots in `which` (window positions).
/// Each step a robot enters an unexplored neighbour if it can afford one,
/// else heads for the nearest unexplored cell, else stays; it charges
/// whenever it ends a step on a station with room. Robots not in `which`
/// follow `fixed`.
fn greedy_moves(
    s: &Scenario,
    ws: &WindowState,
    window: usize,
    which: &[usize],
    fixed: &[RobotMoves],
) -> Vec<RobotMoves> {
    let g = ws.effective_grid(s);
    let cr = s.charge_rate();
    let exclusive = s.mission.collision_exclusive && ws.robots.len() > 1;
    let mut explored = ws.explored.clone();
    let mut pos = ws.positions.clone();
    let mut bat = ws.batteries.clone();
    let mut out: Vec<RobotMoves> = (0..ws.robots.len())
        .map(|i| {
            if which.contains(&i) {
                RobotMoves { cells: Vec::with_capacity(window), charging: Vec::with_capacity(window) }
            } else {
                fixed[i].clone()
            }
        })
        .collect();
    for k in 0..window {
        let unexplored: BTreeSet<Cell> = g.free_cells().filter(|c| !explored.contains(c)).collect();
        let dist = distances_to(&g, &unexplored);
        let mut taken: Vec<Cell> = Vec::new();
        // Fixed robots claim their cells first.
        for (i, m) in out.iter().enumerate() {
            if !which.contains(&i) {
                taken.push(m.cells.get(k).copied().unwrap_or(pos[i]));
            }
        }
        let mut visited = Vec::new();
        for i in 0..ws.robots.len() {
            let cap = s.robots[ws.robots[i]].battery_capacity;
            let from = pos[i];
            let (to, charging) = if which.contains(&i) {
                let mut best: Option<(usize, Cell, bool, f64)> = None;
                for to in g.neighbors(from).unwrap_or_default() {
                    if exclusive && taken.contains(&to) {
                        continue;
                    }
                    let charging = s.is_station(to) && bat[i] + cr <= cap;
                    let action = Action { from, to, charging, dest_explored: explored.contains(&to) };
                    let Ok(e) = step_energy(s, &g, action) else { continue };
                    let next = bat[i] + e.net();
                    if next < 0.0 || next > cap {
                        continue;
                    }
                    let d = dist[g.index(to)].unwrap_or(usize::MAX);
                    let stay_bias = usize::from(to == from && d > 0);
                    let key = d.saturating_mul(2).saturating_add(stay_bias);
                    if best.is_none_or(|(bk, _, _, _)| key < bk) {
                        best = Some((key, to, charging, next));
                    }
                }
                match best {
                    Some((_, to, charging, _)) => (to, charging),
                    None => (from, false),
                }
            } else {
                (out[i].cells[k], out[i].charging[k])
            };
            let action = Action { from, to, charging, dest_explored: explored.contains(&to) };
            let net = step_energy(s, &g, action).map_or(0.0, |e| e.net());
            bat[i] = (bat[i] + net).clamp(0.0, cap);
            pos[i] = to;
            if which.contains(&i) {
                out[i].cells.push(to);
                out[i].charging.push(charging);
                taken.push(to);
            }
            visited.push(to);
        }
        explored.extend(visited);
    }
    out
}

/// Greedy plan for every robot of `ws`, used to seed the solver.
pub fn greedy_start(s: &Scenario, ws: &WindowState, window: usize) -> Vec<RobotMoves> {
    let all: Vec<usize> = (0..ws.robots.len()).collect();
    greedy_moves(s, ws, window, &all, &[])
}

fn solver_options(s: &Scenario) -> BnbOptions<f64> {
    let mut time_limit = s.solver.time_limit_s.map(Duration::from_secs_f64);
    // Node-limited solves do not depend on machine speed.
    if s.planner.deterministic && s.solver.node_limit.is_some() {
        time_limit = None;
    }
    BnbOptions { time_limit, node_limit: s.solver.node_limit, ..Default::default() }
}

/// Solves the next window from `state`: builds the model over
/// `min(W, T - t_now)` steps with known obstacles removed, seeds the solver
/// with a greedy plan, and extracts the result. Without a solver plan every
/// robot stays put. Robots whose plan explores nothing are steered towards
/// the nearest unexplored cell when the frontier fallback is enabled.
pub fn plan_window(state: &MissionState, s: &Scenario) -> Result<WindowOutcome, PlannerError> {
    if state.t_now >= s.horizon() {
        return Ok(WindowOutcome::Done(Event::new(state.t_now, EventKind::HorizonReached)));
    }
    if state.active_robots().is_empty() {
        return Err(PlannerError::NoActiveRobots);
    }
    let unexplored = state.unexplored_reachable(s);
    if unexplored.is_empty() {
        return Ok(WindowOutcome::Done(Event::new(state.t_now, EventKind::AreaComplete)));
    }
    let window = s.window().min(s.horizon() - state.t_now);
    let ws = state.window_state();
    let model = build_model_with::<f64>(s, window, &ws, ModelOptions::from_scenario(s))?;
    let greedy = greedy_start(s, &ws, window);
    let start = encode_assignment(&model, s, &ws, &greedy);
    let mut opts = solver_options(s);
    if model.check_feasible(&start, 1e-7).is_ok() {
        opts.mip_start = Some(start);
    }
    let sol = solve_bnb(&model, &opts);
    let mut events = Vec::new();
    let mut fallback = None;
    let mut plan = match extract_plan(&sol, &model, s, &ws) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("t={}: no plan from the solver ({e}); robots hold position", state.t_now);
            events.push(Event::new(state.t_now, EventKind::SolverFallback { reason: e.to_string() }));
            fallback = Some("stay");
            Plan::stay(s, &ws, window)
        }
    };
    if s.planner.frontier_fallback {
        let idle: Vec<usize> = plan
            .robots
            .iter()
            .enumerate()
            .filter(|(_, r)| r.steps.iter().all(|st| ws.explored.contains(&st.cell)))
            .map(|(i, _)| i)
            .collect();
        if !idle.is_empty() {
            let moves = greedy_moves(s, &ws, window, &idle, &plan.moves());
            let steered = Plan::from_moves(s, &ws, &moves, plan.status, true);
            let keeps = steered.new_cells(&ws.explored).len() >= plan.new_cells(&ws.explored).len();
            if keeps && moves != plan.moves() {
                log::debug!("t={}: steering idle robots {idle:?} to the frontier", state.t_now);
                plan = steered;
                fallback = fallback.or(Some("frontier"));
            }
        }
    }
    let record = SolveRecord {
        t: state.t_now,
        window,
        status: sol.status,
        objective: sol.has_values().then_some(sol.objective),
        wall_time_s: sol.stats.wall_time_s,
        nodes: sol.stats.nodes,
        fallback,
    };
    log::info!(
        "t={} W={} {:?} obj={:?} {:.3}s nodes={}",
        record.t,
        window,
        record.status,
        record.objective,
        record.wall_time_s,
        record.nodes
    );
    Ok(WindowOutcome::Planned(WindowPlan { plan, record, events }))
}

/// Updates `state` for `event` and says what the loop should do next.
pub fn handle_event(state: &mut MissionState, event: &Event, s: &Scenario) -> Response {
    debug_assert!(event.t <= state.t_now);
    match &event.kind {
        EventKind::ObstacleDetected { cell } => {
            state.known_obstacles.insert(*cell);
            Response::Replan
        }
        EventKind::BatteryDiscrepancy { before, predicted, reported } => {
            if (predicted - reported).abs() <= s.discrepancy_threshold() {
                return Response::Continue;
            }
            let Some(r) = event.robot else { return Response::Continue };
            state.batteries[r] = *reported;
            let (want, got) = (before - predicted, before - reported);
            if want > 0.0 {
                let cell = state.positions[r];
                let current = state.terrain.get(&cell).copied().unwrap_or_else(|| s.grid.terrain_factor(cell));
                state.terrain.insert(cell, (current * got / want).clamp(1.0, 5.0));
            }
            Response::Replan
        }
        EventKind::TargetFound { .. } | EventKind::AreaComplete | EventKind::HorizonReached => Response::Terminate,
        EventKind::PlanExhausted | EventKind::BatteryDepleted | EventKind::PathBlocked { .. } => Response::Replan,
        EventKind::SolverFallback { .. } => Response::Continue,
    }
}

/// Runs the mission against `gt` until the horizon, full exploration, a
/// found target, or every robot running flat.
pub fn run_mission(s: &Scenario, gt: &GroundTruth) -> Result<SimTrace, PlannerError> {
    gt.validate(s)?;
    let started = std::time::Instant::now();
    let mut state = MissionState::initial(s);
    let mut trace = SimTrace::start(s, gt, &state, TraceMode::Oros);
    loop {
        if state.t_now >= s.horizon() {
            trace.events.push(Event::new(state.t_now, EventKind::HorizonReached));
            break;
        }
        if state.active_robots().is_empty() {
            break;
        }
        let exhausted = state.active_plan.as_ref().is_some_and(|p| state.cursor >= p.window);
        if exhausted {
            trace.events.push(Event::new(state.t_now, EventKind::PlanExhausted));
        }
        if exhausted || state.active_plan.is_none() {
            match plan_window(&state, s)? {
                WindowOutcome::Done(ev) => {
                    trace.events.push(ev);
                    break;
                }
                WindowOutcome::Planned(wp) => {
                    trace.solves.push(wp.record);
                    trace.events.extend(wp.events);
                    trace.plans.push(wp.plan.clone());
                    state.active_plan = Some(wp.plan);
                    state.cursor = 0;
                }
            }
        }
        let plan = state.active_plan.as_ref().expect("plan in place");
        let commands: Vec<StepCommand> = plan
            .robots
            .iter()
            .map(|rp| {
                let st = &rp.steps[state.cursor];
                StepCommand { robot: rp.index, to: st.cell, charging: st.charging }
            })
            .collect();
        let out = simulator::step(&state, &commands, gt, s)?;
        trace.record_step(&out);
        let events = out.events;
        state = out.state;
        let mut response = Response::Continue;
        for ev in &events {
            match handle_event(&mut state, ev, s) {
                Response::Terminate => response = Response::Terminate,
                Response::Replan if response == Response::Continue => response = Response::Replan,
                _ => {}
            }
        }
        trace.events.extend(events);
        match response {
            Response::Terminate => break,
            Response::Replan => state.active_plan = None,
            Response::Continue => {}
        }
    }
    trace.finish(s, gt, &state, started.elapsed().as_secs_f64());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{EnergyParams, Mission, RobotSpec};

    fn tiny() -> Scenario {
        Scenario {
            grid: GridMap::new(3, 3),
            robots: vec![RobotSpec {
                id: "r1".into(),
                battery_capacity: 100.0,
                initial_battery: 100.0,
                start_cell: Cell::new(1, 1),
                sensors: vec![],
            }],
            stations: vec![],
            energy: EnergyParams::test_defaults(),
            mission: Mission { horizon_t: 12, objective_weights: None, collision_exclusive: false, seed: 0 },
            planner: crate::scenario::PlannerConfig { window_w: 4, ..Default::default() },
            solver: Default::default(),
        }
    }

    #[test]
    fn corner_window_visits_five_cells() {
        let s = tiny();
        let WindowOutcome::Planned(wp) = plan_window(&MissionState::initial(&s), &s).unwrap() else {
            panic!("expected a plan")
        };
        assert_eq!(wp.plan.window, 4);
        assert_eq!(wp.plan.new_cells(&[Cell::new(1, 1)].into()).len(), 4);
        assert!(wp.record.fallback.is_none());
    }

    #[test]
    fn explored_area_needs_no_solve() {
        let s = tiny();
        let mut state = MissionState::initial(&s);
        state.explored = s.grid.cells().collect();
        let out = plan_window(&state, &s).unwrap();
        assert!(matches!(out, WindowOutcome::Done(Event { kind: EventKind::AreaComplete, .. })));
    }

    #[test]
    fn window_truncated_at_horizon() {
        let s = tiny();
        let mut state = MissionState::initial(&s);
        state.t_now = 10;
        let WindowOutcome::Planned(wp) = plan_window(&state, &s).unwrap() else { panic!() };
        assert_eq!(wp.plan.window, 2);
        assert_eq!(wp.plan.robots[0].steps.last().unwrap().t, 12);
    }

    #[test]
    fn zero_discrepancy_continues() {
        let s = tiny();
        let mut state = MissionState::initial(&s);
        let ev = Event::for_robot(0, 0, EventKind::BatteryDiscrepancy { before: 100.0, predicted: 98.0, reported: 98.0 });
        assert_eq!(handle_event(&mut state, &ev, &s), Response::Continue);
        assert!(state.terrain.is_empty());
    }

    #[test]
    fn discrepancy_scales_terrain_on_current_cell() {
        let mut s = tiny();
        s.planner.discrepancy_threshold = Some(1.0);
        let mut state = MissionState::initial(&s);
        state.positions[0] = Cell::new(2, 2);
        // Predicted drain 2, measured drain 7.
        let ev = Event::for_robot(0, 0, EventKind::BatteryDiscrepancy { before: 100.0, predicted: 98.0, reported: 93.0 });
        assert_eq!(handle_event(&mut state, &ev, &s), Response::Replan);
        assert_eq!(state.terrain[&Cell::new(2, 2)], 3.5);
        assert_eq!(state.batteries[0], 93.0);
        // A huge gap is capped at 5.
        let ev = Event::for_robot(0, 0, EventKind::BatteryDiscrepancy { before: 93.0, predicted: 92.0, reported: 50.0 });
        handle_event(&mut state, &ev, &s);
        assert_eq!(state.terrain[&Cell::new(2, 2)], 5.0);
    }

    #[test]
    fn obstacle_event_is_recorded_and_replans() {
        let s = tiny();
        let mut state = MissionState::initial(&s);
        let ev = Event::new(0, EventKind::ObstacleDetected { cell: Cell::new(2, 2) });
        assert_eq!(handle_event(&mut state, &ev, &s), Response::Replan);
        assert!(state.known_obstacles.contains(&Cell::new(2, 2)));
        let WindowOutcome::Planned(wp) = plan_window(&state, &s).unwrap() else { panic!() };
        assert!(wp.plan.robots[0].steps.iter().all(|st| st.cell != Cell::new(2, 2)));
    }

    #[test]
    fn terminal_events_stop_the_loop() {
        let s = tiny();
        let mut state = MissionState::initial(&s);
        for kind in [EventKind::TargetFound { cell: Cell::new(3, 3) }, EventKind::AreaComplete, EventKind::HorizonReached] {
            assert_eq!(handle_event(&mut state, &Event::new(0, kind), &s), Response::Terminate);
        }
    }

    #[test]
    fn greedy_start_is_feasible() {
        let s = tiny();
        let ws = WindowState::initial(&s);
        let moves = greedy_moves(&s, &ws, 4, &[0], &[]);
        let m = build_model_with::<f64>(&s, 4, &ws, ModelOptions::from_scenario(&s)).unwrap();
        m.check_feasible(&encode_assignment(&m, &s, &ws, &moves), 1e-7).unwrap();
        let plan = Plan::from_moves(&s, &ws, &moves, Status::Optimal, true);
        assert_eq!(plan.new_cells(&ws.explored).len(), 4);
    }

    #[test]
    fn idle_robot_is_steered_to_the_frontier() {
        let mut s = tiny();
        s.grid = GridMap::new(9, 1);
        s.mission.horizon_t = 20;
        let mut state = MissionState::initial(&s);
        // Nothing unexplored within four steps.
        state.explored = (1..=6).map(|a| Cell::new(a, 1)).collect();
        let WindowOutcome::Planned(wp) = plan_window(&state, &s).unwrap() else { panic!() };
        assert_eq!(wp.record.fallback, Some("frontier"));
        assert_eq!(wp.plan.robots[0].steps.last().unwrap().cell, Cell::new(5, 1));
        s.planner.frontier_fallback = false;
        let WindowOutcome::Planned(wp) = plan_window(&state, &s).unwrap() else { panic!() };
        assert!(wp.record.fallback.is_none());
        assert!(wp.plan.new_cells(&state.explored).is_empty());
    }
}
