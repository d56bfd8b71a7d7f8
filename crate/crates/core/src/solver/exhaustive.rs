//! Brute-force window solver: enumerates every joint path and charging
//! choice, replaying batteries with the closed-form step energy.

use std::collections::BTreeSet;

use thiserror::Error;

use super::Status;
use crate::energy::{step_energy_a, step_energy_b, Action};
use crate::milp::{ModelError, RobotMoves, WindowState};
use crate::scenario::{Cell, DynamicsVariant, GridMap, Scenario};

/// Largest number of joint move sequences the oracle accepts.
pub const MAX_PATHS: f64 = 1e7;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{robots} robots over {window} steps is about {paths:.0} paths, above the {limit:.0} limit")]
    TooLarge { robots: usize, window: usize, paths: f64, limit: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub status: Status,
    pub objective: f64,
    pub moves: Vec<RobotMoves>,
    pub paths_evaluated: u64,
}

const LEVEL_TOL: f64 = 1e-9;

struct Search<'a> {
    s: &'a Scenario,
    grid: GridMap,
    window: usize,
    capacity: Vec<f64>,
    explore_w: f64,
    battery_w: f64,
    exclusive: bool,
    stations: BTreeSet<Cell>,
    // Current partial assignment.
    pos: Vec<Cell>,
    bat: Vec<f64>,
    explored: BTreeSet<Cell>,
    moves: Vec<RobotMoves>,
    best: Option<(f64, Vec<RobotMoves>)>,
    paths: u64,
}

impl Search<'_> {
    fn score(&self) -> f64 {
        let covered = self.explored.iter().filter(|c| self.grid.is_free(**c)).count() as f64;
        self.explore_w * covered + self.battery_w * self.bat.iter().sum::<f64>()
    }

    fn step(&mut self, k: usize, r: usize, taken: &mut Vec<Cell>, before: &BTreeSet<Cell>) {
        let n = self.pos.len();
        if r == n {
            let added: Vec<Cell> = taken.iter().copied().filter(|c| !self.explored.contains(c)).collect();
            self.explored.extend(added.iter().copied());
            self.window_step(k + 1);
            for c in added {
                self.explored.remove(&c);
            }
            return;
        }
        let from = self.pos[r];
        let level = self.bat[r];
        for to in self.grid.neighbors(from).unwrap_or_default() {
            if self.exclusive && taken.contains(&to) {
                continue;
            }
            let charge_options: &[bool] = if self.stations.contains(&to) { &[false, true] } else { &[false] };
            for &charging in charge_options {
                let action = Action { from, to, charging, dest_explored: before.contains(&to) };
                let energy = match self.s.variant() {
                    DynamicsVariant::A => step_energy_a::<f64>(action, self.s.charge_rate(), &self.s.energy, &self.grid),
                    DynamicsVariant::B => step_energy_b::<f64>(action, self.s.charge_rate(), &self.s.energy, &self.grid),
                };
                let Ok(energy) = energy else { continue };
                let next = level + energy.net();
                if next < -LEVEL_TOL || next > self.capacity[r] + LEVEL_TOL {
                    continue;
                }
                self.pos[r] = to;
                self.bat[r] = next;
                self.moves[r].cells.push(to);
                self.moves[r].charging.push(charging);
                taken.push(to);
                self.step(k, r + 1, taken, before);
                taken.pop();
                self.moves[r].cells.pop();
                self.moves[r].charging.pop();
                self.pos[r] = from;
                self.bat[r] = level;
            }
        }
    }

    /// Enumerates window step `k` (1-based) for all robots.
    fn window_step(&mut self, k: usize) {
        if k > self.window {
            self.paths += 1;
            let score = self.score();
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, self.moves.clone()));
            }
            return;
        }
        let before = self.explored.clone();
        self.step(k, 0, &mut Vec::new(), &before);
    }
}

/// Optimal window plan by enumeration, for cross-checking the MILP on small
/// instances. Refuses windows with more than [`MAX_PATHS`] joint move sequences.
pub fn solve_exhaustive(s: &Scenario, window: usize, state: &WindowState) -> Result<OracleSolution, OracleError> {
    state.validate(s)?;
    let n = state.robots.len();
    let paths = 9f64.powi((n * window) as i32);
    if paths > MAX_PATHS {
        return Err(OracleError::TooLarge { robots: n, window, paths, limit: MAX_PATHS });
    }
    let grid = state.effective_grid(s);
    let weights = s.objective_weights();
    let capacity: Vec<f64> = state.robots.iter().map(|&r| s.robots[r].battery_capacity).collect();
    let mut search = Search {
        s,
        stations: s.stations.iter().map(|st| st.cell).filter(|c| grid.is_free(*c)).collect(),
        grid,
        window,
        bat: state.batteries.iter().zip(&capacity).map(|(b, c)| b.clamp(0.0, *c)).collect(),
        capacity,
        explore_w: weights.explore,
        battery_w: weights.battery,
        exclusive: s.mission.collision_exclusive && n > 1,
        pos: state.positions.clone(),
        explored: state.explored.clone(),
        moves: vec![RobotMoves { cells: Vec::new(), charging: Vec::new() }; n],
        best: None,
        paths: 0,
    };
    search.window_step(1);
    Ok(match search.best {
        Some((objective, moves)) => {
            OracleSolution { status: Status::Optimal, objective, moves, paths_evaluated: search.paths }
        }
        None => OracleSolution {
            status: Status::Infeasible,
            objective: f64::NAN,
            moves: Vec::new(),
            paths_evaluated: search.paths,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{build_model, encode_assignment};
    use crate::scenario::{ChargingStation, EnergyParams, Mission, RobotSpec};

    fn tiny(robots: usize) -> Scenario {
        let starts = [Cell::new(1, 1), Cell::new(3, 3)];
        Scenario {
            grid: GridMap::new(3, 3),
            robots: (0..robots)
                .map(|i| RobotSpec {
                    id: format!("r{}", i + 1),
                    battery_capacity: 100.0,
                    initial_battery: 100.0,
                    start_cell: starts[i],
                    sensors: vec![],
                })
                .collect(),
            stations: vec![],
            energy: EnergyParams::test_defaults(),
            mission: Mission { horizon_t: 12, objective_weights: None, collision_exclusive: false, seed: 0 },
            planner: Default::default(),
            solver: Default::default(),
        }
    }

    #[test]
    fn zero_window_scores_initial_state() {
        let s = tiny(1);
        let sol = solve_exhaustive(&s, 0, &WindowState::initial(&s)).unwrap();
        let w = s.objective_weights();
        assert_eq!(sol.objective, w.explore + 100.0);
        assert_eq!(sol.paths_evaluated, 1);
    }

    #[test]
    fn single_step_explores_a_new_cell() {
        let s = tiny(1);
        let state = WindowState::initial(&s);
        let sol = solve_exhaustive(&s, 1, &state).unwrap();
        assert_eq!(sol.paths_evaluated, 4);
        assert_ne!(sol.moves[0].cells[0], Cell::new(1, 1));
        // The winning plan, encoded into the model, is feasible with the same objective.
        let m = build_model::<f64>(&s, 1, &state).unwrap();
        let x = encode_assignment(&m, &s, &state, &sol.moves);
        m.check_feasible(&x, 1e-7).unwrap();
        assert!((m.objective_value(&x) - sol.objective).abs() < 1e-9);
    }

    #[test]
    fn oversize_request_rejected() {
        let s = tiny(2);
        let err = solve_exhaustive(&s, 4, &WindowState::initial(&s)).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { robots: 2, window: 4, .. }));
    }

    #[test]
    fn exclusivity_prunes_shared_cells() {
        let mut s = tiny(2);
        s.robots[1].start_cell = Cell::new(2, 1);
        let free = solve_exhaustive(&s, 1, &WindowState::initial(&s)).unwrap();
        s.mission.collision_exclusive = true;
        let excl = solve_exhaustive(&s, 1, &WindowState::initial(&s)).unwrap();
        assert!(excl.paths_evaluated < free.paths_evaluated);
    }

    #[test]
    fn charging_needs_headroom() {
        let mut s = tiny(1);
        s.stations = vec![ChargingStation { cell: Cell::new(1, 1), charge_rate: 5.0 }];
        let full = solve_exhaustive(&s, 1, &WindowState::initial(&s)).unwrap();
        assert!(!full.moves[0].charging[0]);
        let mut state = WindowState::initial(&s);
        state.batteries = vec![10.0];
        state.explored = s.grid.cells().collect();
        let low = solve_exhaustive(&s, 1, &state).unwrap();
        assert_eq!((low.moves[0].cells[0], low.moves[0].charging[0]), (Cell::new(1, 1), true));
    }
}
