//! Seeded instance generators for cross-checks and timing sweeps.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::ProfileFile;
use crate::milp::WindowState;
use crate::scenario::{
    Cell, ChargingStation, DynamicsVariant, EnergyParams, GridMap, Mission, PlannerConfig, RobotSpec, Scenario,
    SolverConfig,
};

/// Field run: about ten minutes of discovery over 35 steps.
pub const FIELD_STEP_SECONDS: f64 = 600.0 / 35.0;
/// Extra transmit power per cell of distance to the base station, in watts.
pub const FIELD_TX_W_PER_CELL: f64 = 0.05;
pub const FIELD_BASE_STATION: Cell = Cell::new(7, 1);

/// Per-step energy of the field scenario derived from a device profile.
pub fn field_energy(profile: &ProfileFile) -> EnergyParams {
    profile.step_energy_params(FIELD_STEP_SECONDS, FIELD_BASE_STATION, FIELD_TX_W_PER_CELL)
}

/// A scenario together with the window and start state to solve.
#[derive(Clone, Debug)]
pub struct WindowInstance {
    pub seed: u64,
    pub scenario: Scenario,
    pub state: WindowState,
    pub window: usize,
}

/// Random instance small enough for the exhaustive oracle: 1 or 2 robots on
/// a grid of at most 3x3 with random obstacles, stations, explored cells,
/// batteries, variant and exclusivity. Windows reach 4 steps for one robot
/// and 3 for two.
pub fn small_instance(seed: u64) -> WindowInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = rng.random_range(1..=2usize);
    let (w, h) = (rng.random_range(2..=3usize), rng.random_range(2..=3usize));
    let mut cells: Vec<Cell> = GridMap::new(w, h).cells().collect();
    cells.shuffle(&mut rng);
    let starts: Vec<Cell> = cells[..nr].to_vec();
    let rest = &cells[nr..];
    let n_obst = rng.random_range(0..=rest.len().min(2));
    let obstacles: Vec<Cell> = rest[..n_obst].to_vec();
    let free: Vec<Cell> = rest[n_obst..].to_vec();
    let capacity = 20.0;
    let mut stations = Vec::new();
    if rng.random_bool(0.5) {
        let mut candidates = free.clone();
        candidates.extend(&starts);
        let cell = candidates[rng.random_range(0..candidates.len())];
        stations.push(ChargingStation { cell, charge_rate: [2.0, 5.0][rng.random_range(0..2)] });
    }
    let mut terrain = std::collections::BTreeMap::new();
    for c in &free {
        if rng.random_bool(0.2) {
            terrain.insert(*c, 2.0);
        }
    }
    let variant = if rng.random_bool(0.5) { DynamicsVariant::A } else { DynamicsVariant::B };
    let window = if nr == 1 { rng.random_range(1..=4) } else { rng.random_range(1..=3) };
    let scenario = Scenario {
        grid: GridMap { terrain, ..GridMap::new(w, h).with_obstacles(obstacles) },
        robots: starts
            .iter()
            .enumerate()
            .map(|(i, &c)| RobotSpec {
                id: format!("r{}", i + 1),
                battery_capacity: capacity,
                initial_battery: capacity,
                start_cell: c,
                sensors: vec![],
            })
            .collect(),
        stations,
        energy: EnergyParams::test_defaults(),
        mission: Mission {
            horizon_t: window.max(4),
            objective_weights: None,
            collision_exclusive: nr > 1 && rng.random_bool(0.5),
            seed,
        },
        planner: PlannerConfig { window_w: window, variant, ..PlannerConfig::default() },
        solver: SolverConfig::default(),
    };
    let mut state = WindowState::initial(&scenario);
    for b in state.batteries.iter_mut() {
        *b = rng.random_range(4.0..=capacity);
        *b = (*b * 4.0).round() / 4.0;
    }
    for c in &free {
        if rng.random_bool(0.3) {
            state.explored.insert(*c);
        }
    }
    WindowInstance { seed, scenario, state, window }
}

/// Random mission state on `s`: robots placed on distinct free cells, a
/// random explored blob around each, batteries between half and full.
pub fn random_state(s: &Scenario, seed: u64) -> WindowState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<Cell> = s.grid.free_cells().collect();
    let mut state = WindowState::initial(s);
    let mut used = BTreeSet::new();
    for (i, &r) in state.robots.clone().iter().enumerate() {
        let cell = loop {
            let c = free[rng.random_range(0..free.len())];
            if used.insert(c) {
                break c;
            }
        };
        state.positions[i] = cell;
        let cap = s.robots[r].battery_capacity;
        state.batteries[i] = rng.random_range(0.5 * cap..=cap);
    }
    state.explored = state.positions.iter().copied().collect();
    for _ in 0..free.len() / 3 {
        let c = free[rng.random_range(0..free.len())];
        state.explored.insert(c);
    }
    state.t0 = rng.random_range(0..s.horizon().saturating_sub(s.window()).max(1));
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instances_are_valid_and_reproducible() {
        for seed in 0..50 {
            let a = small_instance(seed);
            a.scenario.validate().unwrap();
            a.state.validate(&a.scenario).unwrap();
            let n = a.state.robots.len();
            assert!(a.window <= if n == 1 { 4 } else { 3 });
            assert!(a.scenario.grid.width <= 3 && a.scenario.grid.height <= 3);
            let b = small_instance(seed);
            assert_eq!(a.scenario, b.scenario);
            assert_eq!(a.state, b.state);
        }
    }
}
