//! Ground-truth execution of plans, the always-on baseline and the energy
//! comparison between the two.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{step_energy_a, Action, EnergyError, StepEnergy};
use crate::planner::{Event, EventKind, MissionState, SolveRecord};
use crate::scenario::{Cell, DynamicsVariant, GridMap, Scenario};
use crate::solver::plan::step_energy;
use crate::solver::Plan;

const LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("robot {robot}: {source}")]
    Energy { robot: String, source: EnergyError },
    #[error("ground truth does not match the scenario: {0}")]
    GroundTruth(String),
    #[error("traces do not match: {0}")]
    Mismatch(String),
    #[error("robot {robot} at t={t}: stored battery {stored}, replay gives {replayed}")]
    Replay { robot: String, t: usize, stored: f64, replayed: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn one() -> usize {
    1
}

/// The world as it really is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    /// True obstacles and terrain factors.
    pub grid: GridMap,
    /// Chebyshev radius in which sensing robots see obstacles and the target.
    #[serde(default = "one")]
    pub sensing_range: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cell: Option<Cell>,
}

impl GroundTruth {
    /// The scenario map exactly as planned on.
    pub fn from_scenario(s: &Scenario) -> Self {
        Self { grid: s.grid.clone(), sensing_range: 1, target_cell: None }
    }

    /// The scenario map plus `count` obstacles on random free cells other
    /// than start cells and stations.
    pub fn with_hidden_obstacles(s: &Scenario, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reserved: BTreeSet<Cell> =
            s.robots.iter().map(|r| r.start_cell).chain(s.stations.iter().map(|st| st.cell)).collect();
        let picked = s.grid.free_cells().filter(|c| !reserved.contains(c)).choose_multiple(&mut rng, count);
        let mut gt = Self::from_scenario(s);
        gt.grid.obstacles.extend(picked);
        gt
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn hidden_obstacles(&self, s: &Scenario) -> BTreeSet<Cell> {
        self.grid.obstacles.difference(&s.grid.obstacles).copied().collect()
    }

    /// Free cells connected to some start cell.
    pub fn reachable(&self, s: &Scenario) -> BTreeSet<Cell> {
        self.grid.reachable_from(s.robots.iter().map(|r| r.start_cell))
    }

    pub fn validate(&self, s: &Scenario) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::GroundTruth(m));
        if (self.grid.width, self.grid.height) != (s.grid.width, s.grid.height) {
            return bad(format!(
                "grid is {}x{}, scenario is {}x{}",
                self.grid.width, self.grid.height, s.grid.width, s.grid.height
            ));
        }
        if let Some(c) = s.grid.obstacles.iter().find(|c| !self.grid.is_obstacle(**c)) {
            return bad(format!("known obstacle {c} missing"));
        }
        if self.sensing_range == 0 {
            return bad("sensing_range must be at least 1".into());
        }
        if let Some(r) = s.robots.iter().find(|r| !self.grid.is_free(r.start_cell)) {
            return bad(format!("robot {} starts on an obstacle", r.id));
        }
        if let Some(c) = self.target_cell.filter(|c| !self.grid.in_bounds(*c)) {
            return bad(format!("target {c} out of bounds"));
        }
        Ok(())
    }
}

/// One robot's order for the next step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCommand {
    pub robot: usize,
    pub to: Cell,
    pub charging: bool,
}

/// What one robot did during a step.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotStep {
    pub robot: usize,
    pub cell: Cell,
    pub battery: f64,
    pub sensors_on: bool,
    pub charging: bool,
    pub frozen: bool,
    pub energy: StepEnergy<f64>,
    pub local: f64,
    /// Charge actually stored after clamping at capacity.
    pub gained: f64,
}

impl RobotStep {
    fn idle(robot: usize, cell: Cell, battery: f64) -> Self {
        Self {
            robot,
            cell,
            battery,
            sensors_on: false,
            charging: false,
            frozen: true,
            energy: StepEnergy::default(),
            local: 0.0,
            gained: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: MissionState,
    pub events: Vec<Event>,
    pub robots: Vec<RobotStep>,
}

fn energy_error(s: &Scenario, robot: usize) -> impl Fn(EnergyError) -> SimError + '_ {
    move |source| SimError::Energy { robot: s.robots[robot].id.clone(), source }
}

/// Executes one step for every robot. Moves into true obstacles are refused
/// and reported; batteries follow the true terrain; sensing robots explore
/// their cell and see obstacles and the target within range. A robot that
/// cannot pay for its step freezes where it is.
pub fn step(
    state: &MissionState,
    commands: &[StepCommand],
    gt: &GroundTruth,
    s: &Scenario,
) -> Result<StepResult, SimError> {
    let known = state.known_grid(s);
    let t = state.t_now + 1;
    let mut next = state.clone();
    next.t_now = t;
    next.cursor += 1;
    let mut events = Vec::new();
    let mut robots = Vec::with_capacity(s.robots.len());
    let mut claimed: Vec<Cell> = Vec::new();
    let mut seen = BTreeSet::new();
    let exclusive = s.mission.collision_exclusive && s.robots.len() > 1;
    let threshold = s.discrepancy_threshold();
    for r in 0..s.robots.len() {
        let (from, level) = (state.positions[r], state.batteries[r]);
        if state.frozen[r] {
            robots.push(RobotStep::idle(r, from, level));
            claimed.push(from);
            continue;
        }
        let cmd = commands.iter().find(|c| c.robot == r);
        let (mut to, mut charging) = cmd.map_or((from, false), |c| (c.to, c.charging));
        if !gt.grid.in_bounds(to) || !gt.grid.adjacent(from, to) {
            return Err(energy_error(s, r)(EnergyError::NotAdjacent { from, to }));
        }
        if gt.grid.is_obstacle(to) {
            if seen.insert(to) {
                events.push(Event::for_robot(t, r, EventKind::ObstacleDetected { cell: to }));
            }
            (to, charging) = (from, false);
        } else if exclusive && to != from && claimed.contains(&to) {
            events.push(Event::for_robot(t, r, EventKind::PathBlocked { cell: to }));
            (to, charging) = (from, false);
        }
        charging &= s.is_station(to);
        let dest_explored = state.explored.contains(&to);
        let action = Action { from, to, charging, dest_explored };
        let actual = step_energy(s, &gt.grid, action).map_err(energy_error(s, r))?;
        let after = level + actual.net();
        if after < -LEVEL_TOL {
            log::warn!("t={t}: robot {} cannot pay {:.6} and stops", s.robots[r].id, actual.drain());
            next.frozen[r] = true;
            events.push(Event::for_robot(t, r, EventKind::BatteryDepleted));
            robots.push(RobotStep::idle(r, from, level));
            claimed.push(from);
            continue;
        }
        let cap = s.robots[r].battery_capacity;
        let battery = after.clamp(0.0, cap);
        let predicted = step_energy(s, &known, action)
            .map_or(battery, |e| (level + e.net()).clamp(0.0, cap));
        let sensors_on = match s.variant() {
            DynamicsVariant::A => !dest_explored,
            DynamicsVariant::B => !charging,
        };
        if sensors_on {
            next.explored.insert(to);
            for &c in gt.grid.obstacles.iter() {
                let hidden = !state.known_obstacles.contains(&c) && !s.grid.is_obstacle(c);
                if hidden && c.chebyshev(to) <= gt.sensing_range && seen.insert(c) {
                    events.push(Event::for_robot(t, r, EventKind::ObstacleDetected { cell: c }));
                }
            }
            if let Some(target) = gt.target_cell.filter(|c| c.chebyshev(to) <= gt.sensing_range) {
                events.push(Event::for_robot(t, r, EventKind::TargetFound { cell: target }));
            }
        }
        if (predicted - battery).abs() > threshold {
            events.push(Event::for_robot(
                t,
                r,
                EventKind::BatteryDiscrepancy { before: level, predicted, reported: battery },
            ));
        }
        next.positions[r] = to;
        next.batteries[r] = battery;
        robots.push(RobotStep {
            robot: r,
            cell: to,
            battery,
            sensors_on,
            charging,
            frozen: false,
            energy: actual,
            local: 0.0,
            gained: battery - (level - actual.drain()),
        });
        claimed.push(to);
    }
    Ok(StepResult { state: next, events, robots })
}

/// Energy totals of one robot by component, in battery units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub moving: f64,
    pub tx: f64,
    pub rx: f64,
    pub sen: f64,
    pub local: f64,
    pub charged: f64,
}

impl EnergyLedger {
    fn add(&mut self, st: &RobotStep) {
        self.moving += st.energy.moving;
        self.tx += st.energy.tx;
        self.rx += st.energy.rx;
        self.sen += st.energy.sen;
        self.local += st.local;
        self.charged += st.gained;
    }

    /// Energy drawn from the battery.
    pub fn consumed(&self) -> f64 {
        self.moving + self.tx + self.rx + self.sen + self.local
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Oros,
    /// Sensors always on, detection on board.
    Soa,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub robot: usize,
    pub cell: Cell,
    pub battery: f64,
    pub sensors_on: bool,
    pub charging: bool,
    pub frozen: bool,
    /// Energy drawn from the battery during the step.
    pub consumed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimTrace {
    pub mode: TraceMode,
    pub variant: DynamicsVariant,
    pub robots: Vec<String>,
    /// Step 0 for every robot, then one row per robot per step.
    pub rows: Vec<TraceRow>,
    /// Explored cell count after each step, starting at step 0.
    pub explored_sizes: Vec<usize>,
    pub events: Vec<Event>,
    pub energy: Vec<EnergyLedger>,
    pub solves: Vec<SolveRecord>,
    #[serde(skip)]
    pub plans: Vec<Plan>,
    pub steps: usize,
    pub explored: usize,
    pub explorable: usize,
    pub coverage: f64,
    pub wall_time_s: f64,
}

impl SimTrace {
    pub fn start(s: &Scenario, _gt: &GroundTruth, state: &MissionState, mode: TraceMode) -> Self {
        let rows = (0..s.robots.len())
            .map(|r| TraceRow {
                t: state.t_now,
                robot: r,
                cell: state.positions[r],
                battery: state.batteries[r],
                sensors_on: false,
                charging: false,
                frozen: state.frozen[r],
                consumed: 0.0,
            })
            .collect();
        Self {
            mode,
            variant: s.variant(),
            robots: s.robots.iter().map(|r| r.id.clone()).collect(),
            rows,
            explored_sizes: vec![state.explored.len()],
            events: Vec::new(),
            energy: vec![EnergyLedger::default(); s.robots.len()],
            solves: Vec::new(),
            plans: Vec::new(),
            steps: 0,
            explored: state.explored.len(),
            explorable: 0,
            coverage: 0.0,
            wall_time_s: 0.0,
        }
    }

    pub fn record_step(&mut self, result: &StepResult) {
        let t = result.state.t_now;
        for st in &result.robots {
            self.energy[st.robot].add(st);
            self.rows.push(TraceRow {
                t,
                robot: st.robot,
                cell: st.cell,
                battery: st.battery,
                sensors_on: st.sensors_on,
                charging: st.charging,
                frozen: st.frozen,
                consumed: st.energy.drain() + st.local,
            });
        }
        self.explored_sizes.push(result.state.explored.len());
        self.steps = t;
    }

    pub fn finish(&mut self, s: &Scenario, gt: &GroundTruth, state: &MissionState, wall_time_s: f64) {
        let reachable = gt.reachable(s);
        self.explored = state.explored.iter().filter(|c| reachable.contains(c)).count();
        self.explorable = reachable.len();
        self.coverage = if reachable.is_empty() { 1.0 } else { self.explored as f64 / reachable.len() as f64 };
        self.wall_time_s = wall_time_s;
    }

    /// Executed cells per robot from step 0 on.
    pub fn paths(&self) -> Vec<Vec<Cell>> {
        let mut out = vec![Vec::new(); self.robots.len()];
        for row in &self.rows {
            out[row.robot].push(row.cell);
        }
        out
    }

    /// Battery series per robot from step 0 on.
    pub fn batteries(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.robots.len()];
        for row in &self.rows {
            out[row.robot].push(row.battery);
        }
        out
    }

    pub fn total_consumed(&self) -> f64 {
        self.energy.iter().map(EnergyLedger::consumed).sum()
    }

    /// Solver invocations.
    pub fn replans(&self) -> usize {
        self.solves.len()
    }

    /// Writes `t,robot,a,b,battery,sensors_on,charging,event`; events of a
    /// step are joined with `;` on the rows they concern.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "robot", "a", "b", "battery", "sensors_on", "charging", "event"])?;
        for row in &self.rows {
            let labels: Vec<String> = self
                .events
                .iter()
                .filter(|e| e.t == row.t && e.robot.is_none_or(|r| r == row.robot))
                .map(Event::label)
                .collect();
            w.write_record([
                row.t.to_string(),
                self.robots[row.robot].clone(),
                row.cell.a.to_string(),
                row.cell.b.to_string(),
                row.battery.to_string(),
                u8::from(row.sensors_on).to_string(),
                u8::from(row.charging).to_string(),
                labels.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replays `paths` (executed cells from step 0) with sensors always on, no
/// charging and on-board detection power `p_local` every step, on the true map.
pub fn run_soa_baseline(s: &Scenario, gt: &GroundTruth, paths: &[Vec<Cell>]) -> Result<SimTrace, SimError> {
    gt.validate(s)?;
    if paths.len() != s.robots.len() {
        return Err(SimError::Mismatch(format!("{} paths for {} robots", paths.len(), s.robots.len())));
    }
    let mut state = MissionState::initial(s);
    for (r, p) in paths.iter().enumerate() {
        if let Some(c) = p.first() {
            state.positions[r] = *c;
        }
    }
    let mut trace = SimTrace::start(s, gt, &state, TraceMode::Soa);
    let steps = paths.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0);
    let local = s.energy.p_local;
    for k in 1..=steps {
        let mut result = StepResult { state: state.clone(), events: Vec::new(), robots: Vec::new() };
        result.state.t_now = k;
        for (r, path) in paths.iter().enumerate() {
            let (from, level) = (state.positions[r], state.batteries[r]);
            if state.frozen[r] {
                result.robots.push(RobotStep::idle(r, from, level));
                continue;
            }
            let to = path.get(k).copied().unwrap_or(from);
            let action = Action { from, to, charging: false, dest_explored: false };
            let energy = step_energy_a::<f64>(action, 0.0, &s.energy, &gt.grid).map_err(energy_error(s, r))?;
            let after = level - energy.drain() - local;
            if after < -LEVEL_TOL {
                result.state.frozen[r] = true;
                result.events.push(Event::for_robot(k, r, EventKind::BatteryDepleted));
                result.robots.push(RobotStep::idle(r, from, level));
                continue;
            }
            let battery = after.max(0.0);
            result.state.positions[r] = to;
            result.state.batteries[r] = battery;
            result.state.explored.insert(to);
            result.robots.push(RobotStep {
                robot: r,
                cell: to,
                battery,
                sensors_on: true,
                charging: false,
                frozen: false,
                energy,
                local,
                gained: battery - after,
            });
        }
        trace.record_step(&result);
        trace.events.extend(result.events);
        state = result.state;
    }
    trace.finish(s, gt, &state, 0.0);
    Ok(trace)
}

/// Recomputes every battery level of `trace` from its executed actions on
/// the true map and compares within `tol`.
pub fn replay_trace(trace: &SimTrace, s: &Scenario, gt: &GroundTruth, tol: f64) -> Result<(), SimError> {
    let n = s.robots.len();
    let mut prev: Vec<Option<&TraceRow>> = vec![None; n];
    for row in &trace.rows {
        let r = row.robot;
        let cap = s.robots[r].battery_capacity;
        let replayed = match prev[r] {
            None => row.battery,
            Some(p) if row.frozen => p.battery,
            Some(p) => {
                let err = energy_error(s, r);
                let level = match trace.mode {
                    TraceMode::Oros => {
                        let action =
                            Action { from: p.cell, to: row.cell, charging: row.charging, dest_explored: !row.sensors_on };
                        p.battery + step_energy(s, &gt.grid, action).map_err(err)?.net()
                    }
                    TraceMode::Soa => {
                        let action = Action { from: p.cell, to: row.cell, charging: false, dest_explored: false };
                        let e = step_energy_a::<f64>(action, 0.0, &s.energy, &gt.grid).map_err(err)?;
                        p.battery - e.drain() - s.energy.p_local
                    }
                };
                level.clamp(0.0, cap)
            }
        };
        if (replayed - row.battery).abs() > tol {
            return Err(SimError::Replay { robot: s.robots[r].id.clone(), t: row.t, stored: row.battery, replayed });
        }
        prev[r] = Some(row);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobotComparison {
    pub robot: String,
    pub e_oros: f64,
    pub e_soa: f64,
    pub savings: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub robots: Vec<RobotComparison>,
    pub e_oros: f64,
    pub e_soa: f64,
    /// `(E_soa - E_oros) / E_soa`.
    pub savings: f64,
    pub savings_pct: f64,
    pub coverage: f64,
    pub explored: usize,
    pub explorable: usize,
    pub mission_steps: usize,
    pub solver_invocations: usize,
    pub oros_energy: Vec<EnergyLedger>,
    pub soa_energy: Vec<EnergyLedger>,
}

fn savings(oros: f64, soa: f64) -> f64 {
    if soa > 0.0 {
        (soa - oros) / soa
    } else {
        0.0
    }
}

pub fn compare_metrics(oros: &SimTrace, soa: &SimTrace) -> Result<CompareReport, SimError> {
    if oros.robots != soa.robots {
        return Err(SimError::Mismatch(format!("robots {:?} vs {:?}", oros.robots, soa.robots)));
    }
    if oros.steps != soa.steps {
        return Err(SimError::Mismatch(format!("{} steps vs {}", oros.steps, soa.steps)));
    }
    let robots = oros
        .robots
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (e_oros, e_soa) = (oros.energy[i].consumed(), soa.energy[i].consumed());
            RobotComparison { robot: id.clone(), e_oros, e_soa, savings: savings(e_oros, e_soa) }
        })
        .collect();
    let (e_oros, e_soa) = (oros.total_consumed(), soa.total_consumed());
    let sv = savings(e_oros, e_soa);
    Ok(CompareReport {
        robots,
        e_oros,
        e_soa,
        savings: sv,
        savings_pct: 100.0 * sv,
        coverage: oros.coverage,
        explored: oros.explored,
        explorable: oros.explorable,
        mission_steps: oros.steps,
        solver_invocations: oros.solves.len(),
        oros_energy: oros.energy.clone(),
        soa_energy: soa.energy.clone(),
    })
}

impl CompareReport {
    /// `robot,e_oros,e_soa,savings` per robot plus a `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["robot", "e_oros", "e_soa", "savings"])?;
        for r in &self.robots {
            w.write_record([r.robot.clone(), r.e_oros.to_string(), r.e_soa.to_string(), r.savings.to_string()])?;
        }
        w.write_record(["total".into(), self.e_oros.to_string(), self.e_soa.to_string(), self.savings.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ChargingStation, EnergyParams, Mission, RobotSpec};

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

    fn go(to: Cell) -> Vec<StepCommand> {
        vec![StepCommand { robot: 0, to, charging: false }]
    }

    #[test]
    fn hidden_obstacle_blocks_the_move() {
        let s = tiny();
        let mut gt = GroundTruth::from_scenario(&s);
        gt.grid.obstacles.insert(Cell::new(2, 1));
        let state = MissionState::initial(&s);
        let out = step(&state, &go(Cell::new(2, 1)), &gt, &s).unwrap();
        assert_eq!(out.state.positions[0], Cell::new(1, 1));
        assert!(out.events.iter().any(|e| e.kind == EventKind::ObstacleDetected { cell: Cell::new(2, 1) }));
        // Staying on the explored start cell costs reception only.
        assert_eq!(out.state.batteries[0], 99.5);
    }

    #[test]
    fn silent_crossing_of_explored_cell() {
        let s = tiny();
        let gt = GroundTruth::from_scenario(&s);
        let mut state = MissionState::initial(&s);
        state.explored.insert(Cell::new(2, 1));
        let out = step(&state, &go(Cell::new(2, 1)), &gt, &s).unwrap();
        assert_eq!(out.state.explored, state.explored);
        let st = &out.robots[0];
        assert!(!st.sensors_on);
        assert_eq!((st.energy.sen, st.energy.tx), (0.0, 0.0));
        assert_eq!(out.state.batteries[0], 100.0 - 1.0 - 0.5);
    }

    #[test]
    fn sensing_reveals_the_moore_ring() {
        let s = tiny();
        let mut gt = GroundTruth::from_scenario(&s);
        gt.grid.obstacles.extend([Cell::new(3, 3), Cell::new(3, 1)]);
        let out = step(&MissionState::initial(&s), &go(Cell::new(2, 2)), &gt, &s).unwrap();
        let seen: Vec<Cell> = out
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ObstacleDetected { cell } => Some(cell),
                _ => None,
            })
            .collect();
        assert_eq!(seen, vec![Cell::new(3, 1), Cell::new(3, 3)]);
    }

    #[test]
    fn steep_terrain_raises_a_discrepancy() {
        let mut s = tiny();
        s.planner.discrepancy_threshold = Some(0.5);
        let mut gt = GroundTruth::from_scenario(&s);
        gt.grid.terrain.insert(Cell::new(2, 1), 2.0);
        let out = step(&MissionState::initial(&s), &go(Cell::new(2, 1)), &gt, &s).unwrap();
        let ev = out.events.iter().find(|e| matches!(e.kind, EventKind::BatteryDiscrepancy { .. })).unwrap();
        let EventKind::BatteryDiscrepancy { predicted, reported, .. } = ev.kind else { unreachable!() };
        assert!((predicted - reported - s.energy.p_move_base).abs() < 1e-12);
    }

    #[test]
    fn depleted_robot_freezes() {
        let s = tiny();
        let gt = GroundTruth::from_scenario(&s);
        let mut state = MissionState::initial(&s);
        state.batteries[0] = 1.0;
        let out = step(&state, &go(Cell::new(2, 1)), &gt, &s).unwrap();
        assert!(out.state.frozen[0]);
        assert_eq!((out.state.positions[0], out.state.batteries[0]), (Cell::new(1, 1), 1.0));
        let again = step(&out.state, &go(Cell::new(2, 1)), &gt, &s).unwrap();
        assert_eq!(again.state.positions[0], Cell::new(1, 1));
    }

    #[test]
    fn charging_clamps_at_capacity() {
        let mut s = tiny();
        s.stations = vec![ChargingStation { cell: Cell::new(1, 1), charge_rate: 5.0 }];
        let gt = GroundTruth::from_scenario(&s);
        let mut state = MissionState::initial(&s);
        state.batteries[0] = 98.0;
        let cmd = vec![StepCommand { robot: 0, to: Cell::new(1, 1), charging: true }];
        let out = step(&state, &cmd, &gt, &s).unwrap();
        assert_eq!(out.state.batteries[0], 100.0);
        assert_eq!(out.robots[0].gained, 2.0);
    }

    #[test]
    fn soa_gap_is_the_revisit_terms() {
        let mut s = tiny();
        s.energy.p_local = 0.25;
        let gt = GroundTruth::from_scenario(&s);
        let path = [Cell::new(1, 1), Cell::new(2, 1), Cell::new(1, 1), Cell::new(2, 1), Cell::new(3, 1)];
        let mut state = MissionState::initial(&s);
        let mut oros = SimTrace::start(&s, &gt, &state, TraceMode::Oros);
        for c in &path[1..] {
            let out = step(&state, &go(*c), &gt, &s).unwrap();
            oros.record_step(&out);
            state = out.state;
        }
        oros.finish(&s, &gt, &state, 0.0);
        let soa = run_soa_baseline(&s, &gt, &oros.paths()).unwrap();
        // Two revisits, four steps with detection on board.
        let gap = soa.total_consumed() - oros.total_consumed();
        let want = 2.0 * (s.energy.p_sen + s.energy.p_tx_at(Cell::new(1, 1))) + 4.0 * s.energy.p_local;
        assert!((gap - want).abs() < 1e-12, "{gap} vs {want}");
        replay_trace(&oros, &s, &gt, 1e-9).unwrap();
        replay_trace(&soa, &s, &gt, 1e-9).unwrap();
        let report = compare_metrics(&oros, &soa).unwrap();
        assert!(report.savings > 0.0);
    }

    #[test]
    fn identical_traces_save_nothing() {
        let s = tiny();
        let gt = GroundTruth::from_scenario(&s);
        let state = MissionState::initial(&s);
        let trace = SimTrace::start(&s, &gt, &state, TraceMode::Oros);
        let report = compare_metrics(&trace, &trace).unwrap();
        assert_eq!(report.savings, 0.0);
    }

    #[test]
    fn ground_truth_must_keep_known_obstacles() {
        let mut s = tiny();
        s.grid.obstacles.insert(Cell::new(2, 2));
        let mut gt = GroundTruth::from_scenario(&s);
        gt.validate(&s).unwrap();
        gt.grid.obstacles.clear();
        assert!(matches!(gt.validate(&s), Err(SimError::GroundTruth(_))));
    }

    #[test]
    fn hidden_obstacles_avoid_starts_and_are_seeded() {
        let s = tiny();
        let a = GroundTruth::with_hidden_obstacles(&s, 3, 9);
        assert_eq!(a.hidden_obstacles(&s).len(), 3);
        assert!(!a.grid.is_obstacle(Cell::new(1, 1)));
        assert_eq!(a, GroundTruth::with_hidden_obstacles(&s, 3, 9));
    }
}
