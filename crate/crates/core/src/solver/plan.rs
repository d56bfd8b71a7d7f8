//! Per-robot plans read back from a window solution, and their replay check.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use super::{Solution, Status};
use crate::energy::{step_energy_a, step_energy_b, Action, EnergyError, StepEnergy};
use crate::milp::{MilpModel, RobotMoves, VarKind, WindowState};
use crate::num::Scalar;
use crate::scenario::{Cell, DynamicsVariant, GridMap, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanStep {
    /// Absolute step.
    pub t: usize,
    pub cell: Cell,
    pub charging: bool,
    /// Sensors run because the cell was unexplored when entered.
    pub sensors_on: bool,
    /// Level at the end of the step.
    pub battery: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobotPlan {
    pub robot: String,
    /// Index into the scenario's robot list.
    pub index: usize,
    pub start: Cell,
    pub start_battery: f64,
    pub steps: Vec<PlanStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub t0: usize,
    pub window: usize,
    pub status: Status,
    pub objective: f64,
    pub robots: Vec<RobotPlan>,
    /// Produced by a heuristic rather than the solver.
    pub fallback: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("solution has no values (status {0:?})")]
    NoValues(Status),
    #[error("robot {robot} occupies {count} cells at t={t}")]
    Position { robot: String, t: usize, count: usize },
    #[error("robot {robot} at t={t}: {source}")]
    Energy { robot: String, t: usize, source: EnergyError },
    #[error("robot {robot} at t={t}: planned battery {planned}, replay gives {replayed}")]
    Battery { robot: String, t: usize, planned: f64, replayed: f64 },
    #[error("robot {robot} at t={t}: sensors_on is {planned}, replay gives {replayed}")]
    Sensing { robot: String, t: usize, planned: bool, replayed: bool },
    #[error("robot {robot} charges at t={t} off a station")]
    ChargeOffStation { robot: String, t: usize },
    #[error("robots collide at {cell} at t={t}")]
    Collision { cell: Cell, t: usize },
}

pub(crate) fn step_energy(
    s: &Scenario,
    grid: &GridMap,
    action: Action,
) -> Result<StepEnergy<f64>, EnergyError> {
    match s.variant() {
        DynamicsVariant::A => step_energy_a(action, s.charge_rate(), &s.energy, grid),
        DynamicsVariant::B => step_energy_b(action, s.charge_rate(), &s.energy, grid),
    }
}

impl Plan {
    pub fn moves(&self) -> Vec<RobotMoves> {
        self.robots
            .iter()
            .map(|r| RobotMoves {
                cells: r.steps.iter().map(|s| s.cell).collect(),
                charging: r.steps.iter().map(|s| s.charging).collect(),
            })
            .collect()
    }

    /// Builds a plan from explicit moves, computing sensing and batteries by
    /// replay. Levels are clamped to `[0, capacity]`.
    pub fn from_moves(s: &Scenario, state: &WindowState, moves: &[RobotMoves], status: Status, fallback: bool) -> Self {
        let grid = state.effective_grid(s);
        let window = moves.iter().map(|m| m.cells.len()).max().unwrap_or(0);
        let mut explored = state.explored.clone();
        let mut robots: Vec<RobotPlan> = state
            .robots
            .iter()
            .enumerate()
            .map(|(i, &r)| RobotPlan {
                robot: s.robots[r].id.clone(),
                index: r,
                start: state.positions[i],
                start_battery: state.batteries[i],
                steps: Vec::new(),
            })
            .collect();
        for k in 1..=window {
            let mut visited = Vec::new();
            for (i, rp) in robots.iter_mut().enumerate() {
                let from = rp.steps.last().map_or(rp.start, |st| st.cell);
                let level = rp.steps.last().map_or(rp.start_battery, |st| st.battery);
                let to = moves[i].cells.get(k - 1).copied().unwrap_or(from);
                let charging = moves[i].charging.get(k - 1).copied().unwrap_or(false);
                let dest_explored = explored.contains(&to);
                let src = if grid.adjacent(from, to) { from } else { to };
                let net = step_energy(s, &grid, Action { from: src, to, charging, dest_explored })
                    .map_or(0.0, |e| e.net());
                let cap = s.robots[rp.index].battery_capacity;
                rp.steps.push(PlanStep {
                    t: state.t0 + k,
                    cell: to,
                    charging,
                    sensors_on: !dest_explored,
                    battery: (level + net).clamp(0.0, cap),
                });
                visited.push(to);
            }
            explored.extend(visited);
        }
        let mut plan = Plan { t0: state.t0, window, status, objective: f64::NAN, robots, fallback };
        plan.objective = plan.score(s, state);
        plan
    }

    /// Every robot holds its cell for `window` steps, charging when parked on
    /// a station with room to spare.
    pub fn stay(s: &Scenario, state: &WindowState, window: usize) -> Self {
        let grid = state.effective_grid(s);
        let cr = s.charge_rate();
        let moves: Vec<RobotMoves> = state
            .robots
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let cell = state.positions[i];
                let mut level = state.batteries[i];
                let cap = s.robots[r].battery_capacity;
                let mut charging = Vec::with_capacity(window);
                for _ in 0..window {
                    let charge = s.is_station(cell) && grid.is_free(cell) && level + cr <= cap;
                    let net = step_energy(s, &grid, Action { from: cell, to: cell, charging: charge, dest_explored: true })
                        .map_or(0.0, |e| e.net());
                    level = (level + net).clamp(0.0, cap);
                    charging.push(charge);
                }
                RobotMoves { cells: vec![cell; window], charging }
            })
            .collect();
        Self::from_moves(s, state, &moves, Status::Optimal, true)
    }

    /// Window objective of this plan under the scenario weights.
    pub fn score(&self, s: &Scenario, state: &WindowState) -> f64 {
        let grid = state.effective_grid(s);
        let mut explored: BTreeSet<Cell> = state.explored.clone();
        for r in &self.robots {
            explored.extend(r.steps.iter().map(|st| st.cell));
        }
        let covered = explored.iter().filter(|c| grid.is_free(**c)).count() as f64;
        let bat: f64 = self.robots.iter().map(|r| r.steps.last().map_or(r.start_battery, |st| st.battery)).sum();
        let w = s.objective_weights();
        w.explore * covered + w.battery * bat
    }

    /// Cells this plan newly explores, in visiting order.
    pub fn new_cells(&self, explored: &BTreeSet<Cell>) -> Vec<Cell> {
        let mut seen = explored.clone();
        let mut out = Vec::new();
        for k in 0..self.window {
            for r in &self.robots {
                if let Some(st) = r.steps.get(k) {
                    if seen.insert(st.cell) {
                        out.push(st.cell);
                    }
                }
            }
        }
        out
    }
}

/// Reads positions, charging, sensing and batteries out of a solution.
pub fn extract_plan<T: Scalar>(
    sol: &Solution<T>,
    model: &MilpModel<T>,
    s: &Scenario,
    state: &WindowState,
) -> Result<Plan, PlanError> {
    if !sol.has_values() {
        return Err(PlanError::NoValues(sol.status));
    }
    let x = &sol.values;
    let grid = state.effective_grid(s);
    let one_minus = T::one() - T::int_tol();
    let half = T::lit(0.5);
    let value = |kind: VarKind| model.col(kind).map_or(T::zero(), |j| x[j]);
    let mut robots = Vec::with_capacity(state.robots.len());
    for (r, &idx) in state.robots.iter().enumerate() {
        let id = s.robots[idx].id.clone();
        let mut steps = Vec::with_capacity(model.window);
        for k in 1..=model.window {
            let cells: Vec<Cell> = grid.cells().filter(|&cell| value(VarKind::L { r, k, cell }) > one_minus).collect();
            if cells.len() != 1 {
                return Err(PlanError::Position { robot: id, t: state.t0 + k, count: cells.len() });
            }
            let cell = cells[0];
            steps.push(PlanStep {
                t: state.t0 + k,
                cell,
                charging: value(VarKind::U { r, k }) > half,
                sensors_on: value(VarKind::E { k: k - 1, cell }) < half,
                battery: value(VarKind::Bat { r, k }).as_f64(),
            });
        }
        robots.push(RobotPlan {
            robot: id,
            index: idx,
            start: state.positions[r],
            start_battery: state.batteries[r],
            steps,
        });
    }
    Ok(Plan {
        t0: state.t0,
        window: model.window,
        status: sol.status,
        objective: sol.objective,
        robots,
        fallback: false,
    })
}

/// Replays a plan with the closed-form step energy and checks every move,
/// charge decision, sensing flag and battery level against it.
pub fn replay_plan(plan: &Plan, s: &Scenario, state: &WindowState, tol: f64) -> Result<(), PlanError> {
    let grid = state.effective_grid(s);
    let mut explored = state.explored.clone();
    let mut pos = state.positions.clone();
    let mut bat: Vec<f64> = state
        .batteries
        .iter()
        .zip(&state.robots)
        .map(|(b, &r)| b.clamp(0.0, s.robots[r].battery_capacity))
        .collect();
    let exclusive = s.mission.collision_exclusive && plan.robots.len() > 1;
    for k in 0..plan.window {
        let mut visited = Vec::new();
        for (i, rp) in plan.robots.iter().enumerate() {
            let step = &rp.steps[k];
            let err = |source| PlanError::Energy { robot: rp.robot.clone(), t: step.t, source };
            if step.charging && !(s.is_station(step.cell) && grid.is_free(step.cell)) {
                return Err(PlanError::ChargeOffStation { robot: rp.robot.clone(), t: step.t });
            }
            let dest_explored = explored.contains(&step.cell);
            if step.sensors_on == dest_explored {
                return Err(PlanError::Sensing {
                    robot: rp.robot.clone(),
                    t: step.t,
                    planned: step.sensors_on,
                    replayed: !dest_explored,
                });
            }
            let action = Action { from: pos[i], to: step.cell, charging: step.charging, dest_explored };
            let energy = step_energy(s, &grid, action).map_err(err)?;
            let level = bat[i] + energy.net();
            let cap = s.robots[rp.index].battery_capacity;
            if level < -tol {
                return Err(err(EnergyError::Depleted { level }));
            }
            if (level - step.battery).abs() > tol || level > cap + tol {
                return Err(PlanError::Battery { robot: rp.robot.clone(), t: step.t, planned: step.battery, replayed: level });
            }
            if exclusive && visited.contains(&step.cell) {
                return Err(PlanError::Collision { cell: step.cell, t: step.t });
            }
            pos[i] = step.cell;
            bat[i] = level;
            visited.push(step.cell);
        }
        explored.extend(visited);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::build_model;
    use crate::scenario::{ChargingStation, EnergyParams, Mission, RobotSpec};
    use crate::solver::{solve_bnb, BnbOptions};

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
            planner: Default::default(),
            solver: Default::default(),
        }
    }

    #[test]
    fn solved_window_replays() {
        let s = tiny();
        let state = WindowState::initial(&s);
        let m = build_model::<f64>(&s, 3, &state).unwrap();
        let sol = solve_bnb(&m, &BnbOptions::default());
        let plan = extract_plan(&sol, &m, &s, &state).unwrap();
        assert_eq!(plan.robots[0].steps.len(), 3);
        replay_plan(&plan, &s, &state, 1e-6).unwrap();
        assert!(plan.robots[0].steps.iter().all(|st| st.sensors_on));
        assert!((plan.score(&s, &state) - sol.objective).abs() < 1e-6);
    }

    #[test]
    fn tampered_battery_caught() {
        let s = tiny();
        let state = WindowState::initial(&s);
        let mv = RobotMoves { cells: vec![Cell::new(2, 1)], charging: vec![false] };
        let mut plan = Plan::from_moves(&s, &state, &[mv], Status::Optimal, false);
        replay_plan(&plan, &s, &state, 1e-9).unwrap();
        assert_eq!(plan.robots[0].steps[0].battery, 100.0 - 1.0 - 0.5 - 1.0 - 2.0);
        plan.robots[0].steps[0].battery += 0.1;
        assert!(matches!(replay_plan(&plan, &s, &state, 1e-6), Err(PlanError::Battery { .. })));
    }

    #[test]
    fn stay_plan_charges_on_station() {
        let mut s = tiny();
        s.stations = vec![ChargingStation { cell: Cell::new(1, 1), charge_rate: 4.0 }];
        let mut state = WindowState::initial(&s);
        state.batteries = vec![90.0];
        let plan = Plan::stay(&s, &state, 4);
        assert!(plan.fallback);
        let levels: Vec<f64> = plan.robots[0].steps.iter().map(|st| st.battery).collect();
        assert_eq!(levels, vec![94.0, 98.0, 98.0 - 0.5, 97.5 - 0.5]);
        replay_plan(&plan, &s, &state, 1e-9).unwrap();
    }

    #[test]
    fn missing_values_reported() {
        let s = tiny();
        let state = WindowState::initial(&s);
        let m = build_model::<f64>(&s, 1, &state).unwrap();
        let sol = Solution::<f64> { status: Status::TimeLimit, objective: f64::NAN, values: vec![], stats: Default::default() };
        assert_eq!(extract_plan(&sol, &m, &s, &state).unwrap_err(), PlanError::NoValues(Status::TimeLimit));
    }
}
