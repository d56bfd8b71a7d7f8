//! World and mission configuration: grid geometry, robots, charging stations,
//! energy parameters and planner/solver settings.
//!
//! Scenario files are JSON with top-level sections `grid`, `robots`,
//! `stations`, `energy`, `mission` and the optional `planner` and `solver`
//! sections. Cells are 1-based `[a, b]` pairs, `a` indexing columns and `b`
//! rows.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("bad override `{0}`")]
    Override(String),
}

/// A grid cell `g_{a,b}` with 1-based coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub a: usize,
    pub b: usize,
}

impl Cell {
    pub const fn new(a: usize, b: usize) -> Self {
        Self { a, b }
    }

    /// Chebyshev distance in cells.
    pub fn chebyshev(self, other: Cell) -> usize {
        self.a.abs_diff(other.a).max(self.b.abs_diff(other.b))
    }

    pub fn euclidean(self, other: Cell) -> f64 {
        let da = self.a as f64 - other.a as f64;
        let db = self.b as f64 - other.b as f64;
        (da * da + db * db).sqrt()
    }
}

impl From<[usize; 2]> for Cell {
    fn from([a, b]: [usize; 2]) -> Self {
        Cell { a, b }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.a, c.b]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// 8 surrounding cells plus stay.
    #[default]
    Moore,
    /// 4 orthogonal cells plus stay.
    VonNeumann,
}

/// Terrain entries serialize as `[a, b, factor]`.
mod terrain_list {
    use super::Cell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(map: &BTreeMap<Cell, f64>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<(usize, usize, f64)> = map.iter().map(|(c, f)| (c.a, c.b, *f)).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Cell, f64>, D::Error> {
        let list = Vec::<(usize, usize, f64)>::deserialize(d)?;
        Ok(list.into_iter().map(|(a, b, f)| (Cell::new(a, b), f)).collect())
    }
}

fn default_cell_size() -> [f64; 2] {
    [1.0, 1.0]
}

/// The exploration area `{g_{a,b}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMap {
    /// Number of columns `A`.
    pub width: usize,
    /// Number of rows `B`.
    pub height: usize,
    /// Metres per cell along `a` and `b`.
    #[serde(default = "default_cell_size")]
    pub cell_size: [f64; 2],
    #[serde(default)]
    pub obstacles: BTreeSet<Cell>,
    /// Multipliers on movement energy; cells not listed have factor 1.
    #[serde(default, with = "terrain_list", skip_serializing_if = "BTreeMap::is_empty")]
    pub terrain: BTreeMap<Cell, f64>,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl GridMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cell_size: default_cell_size(),
            obstacles: BTreeSet::new(),
            terrain: BTreeMap::new(),
            connectivity: Connectivity::Moore,
        }
    }

    pub fn with_obstacles(mut self, cells: impl IntoIterator<Item = Cell>) -> Self {
        self.obstacles.extend(cells);
        self
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        (1..=self.width).contains(&c.a) && (1..=self.height).contains(&c.b)
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacles.contains(&c)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_obstacle(c)
    }

    pub fn terrain_factor(&self, c: Cell) -> f64 {
        self.terrain.get(&c).copied().unwrap_or(1.0)
    }

    /// Dense row-major index of an in-bounds cell.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c));
        (c.b - 1) * self.width + (c.a - 1)
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width + 1, idx / self.width + 1)
    }

    /// All cells in index order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at(i))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| !self.is_obstacle(*c))
    }

    /// Whether a single step may go from `from` to `to` (ignoring obstacles).
    pub fn adjacent(&self, from: Cell, to: Cell) -> bool {
        let da = from.a.abs_diff(to.a);
        let db = from.b.abs_diff(to.b);
        match self.connectivity {
            Connectivity::Moore => da <= 1 && db <= 1,
            Connectivity::VonNeumann => da + db <= 1,
        }
    }

    /// Cells reachable in one step from `cell`, including `cell` itself
    /// unless it is an obstacle. Order follows the grid index.
    pub fn neighbors(&self, cell: Cell) -> Result<Vec<Cell>, ScenarioError> {
        if !self.in_bounds(cell) {
            return Err(ScenarioError::OutOfBounds(cell));
        }
        let mut out = Vec::with_capacity(9);
        for b in cell.b.saturating_sub(1).max(1)..=(cell.b + 1).min(self.height) {
            for a in cell.a.saturating_sub(1).max(1)..=(cell.a + 1).min(self.width) {
                let n = Cell::new(a, b);
                if self.adjacent(cell, n) && !self.is_obstacle(n) {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    /// Breadth-first step distances from `start` over free cells.
    pub fn step_distances(&self, start: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cell_count()];
        if !self.is_free(start) {
            return dist;
        }
        dist[self.index(start)] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)].unwrap_or(0);
            for n in self.neighbors(c).unwrap_or_default() {
                let slot = &mut dist[self.index(n)];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Free cells connected to any of `starts`.
    pub fn reachable_from(&self, starts: impl IntoIterator<Item = Cell>) -> BTreeSet<Cell> {
        let mut out = BTreeSet::new();
        for s in starts {
            for (i, d) in self.step_distances(s).into_iter().enumerate() {
                if d.is_some() {
                    out.insert(self.cell_at(i));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: String,
    /// `B_max`.
    pub battery_capacity: f64,
    pub initial_battery: f64,
    pub start_cell: Cell,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargingStation {
    pub cell: Cell,
    /// `CR`, energy per step.
    pub charge_rate: f64,
}

/// Position-dependent transmit energy `P_TX,a,b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum TxPower {
    /// Explicit per-cell values, serialized as `[a, b, value]`.
    Table {
        #[serde(with = "terrain_list")]
        values: BTreeMap<Cell, f64>,
    },
    /// `p_tx0 + kappa * d^gamma`, `d` the Euclidean distance to the base station in cells.
    Distance { p_tx0: f64, kappa: f64, gamma: f64 },
}

fn sqrt2() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    pub p_rx: f64,
    pub p_sen: f64,
    pub p_move_base: f64,
    #[serde(default = "sqrt2")]
    pub p_move_diag_factor: f64,
    /// Serving base station `g_{a_BS, b_BS}`.
    pub base_station: Cell,
    pub p_tx: TxPower,
    /// On-robot object-detection power paid every step by the always-on baseline.
    #[serde(default)]
    pub p_local: f64,
}

impl EnergyParams {
    /// Transmit energy per step while sensing at `cell`.
    pub fn p_tx_at(&self, cell: Cell) -> f64 {
        match &self.p_tx {
            TxPower::Table { values } => values.get(&cell).copied().unwrap_or(0.0),
            TxPower::Distance { p_tx0, kappa, gamma } => {
                let d = cell.euclidean(self.base_station);
                p_tx0 + kappa * d.powf(*gamma)
            }
        }
    }

    /// Defaults used by unit tests: P_RX=0.5, P_SEN=2, P_TX=1 everywhere, unit moves.
    pub fn test_defaults() -> Self {
        Self {
            p_rx: 0.5,
            p_sen: 2.0,
            p_move_base: 1.0,
            p_move_diag_factor: sqrt2(),
            base_station: Cell::new(1, 1),
            p_tx: TxPower::Distance { p_tx0: 1.0, kappa: 0.0, gamma: 1.0 },
            p_local: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DynamicsVariant {
    /// Exploration-aware dynamics: sensing and transmission are paid only
    /// when entering an unexplored cell.
    #[default]
    A,
    /// Charging-aware dynamics: a robot that is not charging always pays
    /// reception, sensing and transmission.
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub explore: f64,
    pub battery: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    /// `|T|`, number of steps.
    pub horizon_t: usize,
    /// Explicit objective weights; defaults to lexicographic coverage-first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_weights: Option<ObjectiveWeights>,
    /// Forbid two robots in the same cell at the same step.
    #[serde(default)]
    pub collision_exclusive: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> usize {
    5
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Decision window `W`.
    #[serde(default = "default_window")]
    pub window_w: usize,
    #[serde(default)]
    pub variant: DynamicsVariant,
    /// Battery gap that triggers a replan; defaults to twice `P_RX`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancy_threshold: Option<f64>,
    #[serde(default = "yes")]
    pub deterministic: bool,
    /// When a window gains no coverage, step towards the nearest unexplored cell instead.
    #[serde(default = "yes")]
    pub frontier_fallback: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            window_w: default_window(),
            variant: DynamicsVariant::A,
            discrepancy_threshold: None,
            deterministic: true,
            frontier_fallback: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<usize>,
    /// Declare exploration columns continuous in [0, 1].
    #[serde(default)]
    pub relax_exploration: bool,
    /// Declare the product columns continuous in [0, 1].
    #[serde(default)]
    pub relax_products: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridMap,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub stations: Vec<ChargingStation>,
    pub energy: EnergyParams,
    pub mission: Mission,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parses `text`, applies dotted-path `key=value` overrides, then validates.
    pub fn from_json_str_with_overrides(
        text: &str,
        overrides: &[(String, String)],
    ) -> Result<Self, ScenarioError> {
        let mut value: Value = serde_json::from_str(text)?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let scenario: Scenario = serde_json::from_value(value)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn horizon(&self) -> usize {
        self.mission.horizon_t
    }

    pub fn window(&self) -> usize {
        self.planner.window_w
    }

    pub fn variant(&self) -> DynamicsVariant {
        self.planner.variant
    }

    pub fn is_station(&self, c: Cell) -> bool {
        self.stations.iter().any(|s| s.cell == c)
    }

    /// The charge rate shared by all stations (0 when there are none).
    pub fn charge_rate(&self) -> f64 {
        self.stations.first().map_or(0.0, |s| s.charge_rate)
    }

    pub fn max_capacity(&self) -> f64 {
        self.robots.iter().map(|r| r.battery_capacity).fold(0.0, f64::max)
    }

    /// Weights in effect: explicit ones, else `|R|·B_max + 1` for coverage and 1 for battery.
    pub fn objective_weights(&self) -> ObjectiveWeights {
        self.mission.objective_weights.unwrap_or(ObjectiveWeights {
            explore: self.robots.len() as f64 * self.max_capacity() + 1.0,
            battery: 1.0,
        })
    }

    pub fn discrepancy_threshold(&self) -> f64 {
        self.planner.discrepancy_threshold.unwrap_or(2.0 * self.energy.p_rx)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        let g = &self.grid;
        if g.width == 0 || g.height == 0 {
            return invalid("grid must have at least one row and one column".into());
        }
        if !(g.cell_size[0] > 0.0 && g.cell_size[1] > 0.0) {
            return invalid("cell_size must be positive".into());
        }
        if let Some(c) = g.obstacles.iter().find(|c| !g.in_bounds(**c)) {
            return invalid(format!("obstacle {c} out of bounds"));
        }
        for (c, f) in &g.terrain {
            if !g.in_bounds(*c) {
                return invalid(format!("terrain cell {c} out of bounds"));
            }
            if !(*f > 0.0 && f.is_finite()) {
                return invalid(format!("terrain factor at {c} must be positive"));
            }
        }
        if self.robots.is_empty() {
            return invalid("at least one robot is required".into());
        }
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if !ids.insert(r.id.as_str()) {
                return invalid(format!("duplicate robot id {}", r.id));
            }
            if !(r.battery_capacity > 0.0 && r.battery_capacity.is_finite()) {
                return invalid(format!("robot {}: battery_capacity must be positive", r.id));
            }
            if !(0.0..=r.battery_capacity).contains(&r.initial_battery) {
                return invalid(format!("robot {}: initial_battery outside [0, capacity]", r.id));
            }
            if !g.in_bounds(r.start_cell) {
                return invalid(format!("robot {}: start_cell {} out of bounds", r.id, r.start_cell));
            }
            if g.is_obstacle(r.start_cell) {
                return invalid(format!("robot {}: start_cell blocked at {}", r.id, r.start_cell));
            }
        }
        if self.mission.collision_exclusive {
            let starts: BTreeSet<Cell> = self.robots.iter().map(|r| r.start_cell).collect();
            if starts.len() != self.robots.len() {
                return invalid("collision_exclusive requires distinct start cells".into());
            }
        }
        for s in &self.stations {
            if !g.is_free(s.cell) {
                return invalid(format!("charging station {} blocked or out of bounds", s.cell));
            }
            if !(s.charge_rate > 0.0) {
                return invalid(format!("charging station {}: charge_rate must be positive", s.cell));
            }
        }
        if let Some(first) = self.stations.first() {
            if self.stations.iter().any(|s| s.charge_rate != first.charge_rate) {
                return invalid("all charging stations must share one charge_rate".into());
            }
        }
        let e = &self.energy;
        for (name, v) in [
            ("p_rx", e.p_rx),
            ("p_sen", e.p_sen),
            ("p_move_base", e.p_move_base),
            ("p_move_diag_factor", e.p_move_diag_factor),
            ("p_local", e.p_local),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("energy.{name} must be a non-negative number"));
            }
        }
        if !g.in_bounds(e.base_station) {
            return invalid(format!("base_station {} out of bounds", e.base_station));
        }
        match &e.p_tx {
            TxPower::Table { values } => {
                if let Some(c) = g.free_cells().find(|c| !values.contains_key(c)) {
                    return invalid(format!("p_tx table misses cell {c}"));
                }
                if values.values().any(|v| !(*v >= 0.0)) {
                    return invalid("p_tx table values must be non-negative".into());
                }
            }
            TxPower::Distance { p_tx0, kappa, gamma } => {
                if !(*p_tx0 >= 0.0 && *kappa >= 0.0 && gamma.is_finite()) {
                    return invalid("p_tx generator parameters must be non-negative".into());
                }
            }
        }
        let m = &self.mission;
        if m.horizon_t == 0 {
            return invalid("horizon_t must be at least 1".into());
        }
        if !(1..=m.horizon_t).contains(&self.planner.window_w) {
            return invalid("window_w must satisfy 1 <= window_w <= horizon_t".into());
        }
        if let Some(w) = m.objective_weights {
            if !(w.explore >= 0.0 && w.battery >= 0.0) || (w.explore == 0.0 && w.battery == 0.0) {
                return invalid("objective weights must be non-negative and not both zero".into());
            }
        }
        if let Some(t) = self.planner.discrepancy_threshold {
            if !(t >= 0.0) {
                return invalid("discrepancy_threshold must be non-negative".into());
            }
        }
        if let Some(t) = self.solver.time_limit_s {
            if !(t > 0.0) {
                return invalid("solver.time_limit_s must be positive".into());
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ScenarioError::NotFound(path.display().to_string())
        } else {
            ScenarioError::Io { path: path.display().to_string(), source }
        }
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    Scenario::from_json_str(&read_text(path.as_ref())?)
}

pub fn load_scenario_with_overrides(
    path: impl AsRef<Path>,
    overrides: &[(String, String)],
) -> Result<Scenario, ScenarioError> {
    Scenario::from_json_str_with_overrides(&read_text(path.as_ref())?, overrides)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json_string() + "\n")
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String), ScenarioError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ScenarioError::Override(text.to_string())),
    }
}

const SECTIONS: [&str; 7] = ["grid", "robots", "stations", "energy", "mission", "planner", "solver"];

/// Sets `key` (dotted path, numeric segments index arrays) to `raw`, parsed
/// as JSON when possible and as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let bad = || ScenarioError::Override(format!("{key}={raw}"));
    let parts: Vec<&str> = key.split('.').collect();
    if !SECTIONS.contains(&parts[0]) || parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad())?;
                let slot = items.get_mut(idx).ok_or_else(bad)?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad()),
        };
    }
    Err(bad())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TINY: &str = r#"{
        "grid": {"width": 3, "height": 3},
        "robots": [{"id": "r1", "battery_capacity": 100, "initial_battery": 100, "start_cell": [1, 1]}],
        "energy": {"p_rx": 0.5, "p_sen": 2, "p_move_base": 1, "base_station": [1, 1],
                   "p_tx": {"model": "distance", "p_tx0": 1, "kappa": 0, "gamma": 1}},
        "mission": {"horizon_t": 12}
    }"#;

    #[test]
    fn minimal_file_loads() {
        let s = Scenario::from_json_str(TINY).unwrap();
        assert_eq!((s.grid.width, s.grid.height, s.robots.len()), (3, 3, 1));
        assert_eq!(s.window(), 5);
        assert_eq!(s.variant(), DynamicsVariant::A);
    }

    #[test]
    fn start_on_obstacle_rejected() {
        let text = TINY.replace(r#""height": 3}"#, r#""height": 3, "obstacles": [[1, 1]]}"#);
        let err = Scenario::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("start_cell blocked"), "{err}");
    }

    #[test]
    fn malformed_file_is_parse_error() {
        assert!(matches!(Scenario::from_json_str("{ not json"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn window_longer_than_horizon_rejected() {
        let err = Scenario::from_json_str_with_overrides(TINY, &[("planner.window_w".into(), "13".into())]);
        assert!(matches!(err, Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn overrides_set_nested_and_array_values() {
        let s = Scenario::from_json_str_with_overrides(
            TINY,
            &[
                ("solver.time_limit_s".into(), "0.5".into()),
                ("robots.0.initial_battery".into(), "40".into()),
            ],
        )
        .unwrap();
        assert_eq!(s.solver.time_limit_s, Some(0.5));
        assert_eq!(s.robots[0].initial_battery, 40.0);
    }

    #[test]
    fn unknown_override_key_rejected() {
        assert!(Scenario::from_json_str_with_overrides(TINY, &[("bogus.x".into(), "1".into())]).is_err());
        assert!(Scenario::from_json_str_with_overrides(TINY, &[("solver.bogus".into(), "1".into())]).is_err());
    }

    #[test]
    fn neighbors_interior_corner_and_obstacles() {
        let g = GridMap::new(3, 3);
        assert_eq!(g.neighbors(Cell::new(2, 2)).unwrap().len(), 9);
        assert_eq!(g.neighbors(Cell::new(1, 1)).unwrap().len(), 4);
        let g = g.with_obstacles([Cell::new(1, 1), Cell::new(2, 1), Cell::new(3, 1)]);
        assert_eq!(g.neighbors(Cell::new(2, 2)).unwrap().len(), 6);
        assert!(matches!(g.neighbors(Cell::new(4, 1)), Err(ScenarioError::OutOfBounds(_))));
    }

    #[test]
    fn von_neumann_neighbors() {
        let mut g = GridMap::new(3, 3);
        g.connectivity = Connectivity::VonNeumann;
        assert_eq!(g.neighbors(Cell::new(2, 2)).unwrap().len(), 5);
        assert_eq!(g.neighbors(Cell::new(1, 1)).unwrap().len(), 3);
    }

    #[test]
    fn default_weights_are_lexicographic() {
        let s = Scenario::from_json_str(TINY).unwrap();
        let w = s.objective_weights();
        assert_eq!((w.explore, w.battery), (101.0, 1.0));
    }

    #[test]
    fn distance_tx_grows_away_from_base() {
        let mut e = EnergyParams::test_defaults();
        e.p_tx = TxPower::Distance { p_tx0: 1.0, kappa: 0.5, gamma: 2.0 };
        assert_eq!(e.p_tx_at(Cell::new(1, 1)), 1.0);
        assert_eq!(e.p_tx_at(Cell::new(3, 1)), 3.0);
    }
}
