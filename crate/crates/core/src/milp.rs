//! The window model: variable index space, constraint emitters and objective.
//!
//! Window steps run `k = 0..=W`. Step 0 holds the current state and is fixed
//! through column bounds; decisions live on steps `1..=W`. Products of
//! binaries are linearized with the usual three-row envelope:
//!
//! * `Ups(r,k,c,c') = L(r,k-1,c) * L(r,k,c')`, movement cost;
//! * `Alpha(r,k,c) = E(k-1,c) * L(r,k,c)`, entering an explored cell (variant A);
//! * `Delta(r,k,c) = U(r,k) * L(r,k,c)`, charging at `c` (variant B).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::energy::p_move;
use crate::num::Scalar;
use crate::scenario::{Cell, DynamicsVariant, GridMap, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("state lists {got} robots, expected {expected}")]
    RobotCount { expected: usize, got: usize },
    #[error("robot {robot} at {cell} is out of bounds or on a known obstacle")]
    BadPosition { robot: String, cell: Cell },
    #[error("robot {robot}: battery {level} outside [0, {capacity}]")]
    BadBattery { robot: String, level: f64, capacity: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    L { r: usize, k: usize, cell: Cell },
    E { k: usize, cell: Cell },
    U { r: usize, k: usize },
    Bat { r: usize, k: usize },
    Ups { r: usize, k: usize, from: Cell, to: Cell },
    Alpha { r: usize, k: usize, cell: Cell },
    Delta { r: usize, k: usize, cell: Cell },
}

impl VarKind {
    /// LP-file name such as `L_r1_t3_a2_b2`; robots are 1-based, `t` is absolute.
    pub fn name(&self, t0: usize) -> String {
        match *self {
            VarKind::L { r, k, cell } => format!("L_r{}_t{}_a{}_b{}", r + 1, t0 + k, cell.a, cell.b),
            VarKind::E { k, cell } => format!("E_t{}_a{}_b{}", t0 + k, cell.a, cell.b),
            VarKind::U { r, k } => format!("U_r{}_t{}", r + 1, t0 + k),
            VarKind::Bat { r, k } => format!("Bat_r{}_t{}", r + 1, t0 + k),
            VarKind::Ups { r, k, from, to } => format!(
                "Ups_r{}_t{}_a{}_b{}_a{}_b{}",
                r + 1,
                t0 + k,
                from.a,
                from.b,
                to.a,
                to.b
            ),
            VarKind::Alpha { r, k, cell } => format!("Alpha_r{}_t{}_a{}_b{}", r + 1, t0 + k, cell.a, cell.b),
            VarKind::Delta { r, k, cell } => format!("Delta_r{}_t{}_a{}_b{}", r + 1, t0 + k, cell.a, cell.b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column<T> {
    pub kind: VarKind,
    pub lb: T,
    pub ub: T,
    pub integer: bool,
    pub obj: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row<T> {
    pub name: String,
    pub terms: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Row<T> {
    pub fn activity(&self, x: &[T]) -> T {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(T::zero()),
            Sense::Ge => (self.rhs - act).max(T::zero()),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MotionForm {
    /// `L(k,c') <= sum of L(k-1,n)` over the neighbours `n` of `c'`.
    #[default]
    Compact,
    /// `L(k-1,c) + L(k,c') <= 1` for every non-adjacent pair.
    Pairwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelOptions {
    /// Create `Ups` only for adjacent pairs.
    pub prune_upsilon: bool,
    pub motion: MotionForm,
    /// Declare `E` and `Alpha` continuous.
    pub relax_exploration: bool,
    /// Declare `Ups`, `Alpha` and `Delta` continuous.
    pub relax_products: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { prune_upsilon: true, motion: MotionForm::Compact, relax_exploration: false, relax_products: false }
    }
}

impl ModelOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            relax_exploration: s.solver.relax_exploration,
            relax_products: s.solver.relax_products,
            ..Self::default()
        }
    }

    /// All-pairs `Ups` with pairwise adjacency rows.
    pub fn unpruned() -> Self {
        Self { prune_upsilon: false, motion: MotionForm::Pairwise, ..Self::default() }
    }
}

/// The state a window starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowState {
    /// Absolute step of window step 0.
    pub t0: usize,
    /// Scenario robot indices taking part in this window.
    pub robots: Vec<usize>,
    pub positions: Vec<Cell>,
    pub batteries: Vec<f64>,
    pub explored: BTreeSet<Cell>,
    pub known_obstacles: BTreeSet<Cell>,
    /// Terrain estimates replacing the scenario's factors.
    pub terrain: BTreeMap<Cell, f64>,
}

impl WindowState {
    /// Mission start: every robot at its start cell with its initial battery,
    /// start cells explored.
    pub fn initial(s: &Scenario) -> Self {
        Self {
            t0: 0,
            robots: (0..s.robots.len()).collect(),
            positions: s.robots.iter().map(|r| r.start_cell).collect(),
            batteries: s.robots.iter().map(|r| r.initial_battery).collect(),
            explored: s.robots.iter().map(|r| r.start_cell).collect(),
            known_obstacles: BTreeSet::new(),
            terrain: BTreeMap::new(),
        }
    }

    /// The scenario map with known obstacles and terrain estimates applied.
    pub fn effective_grid(&self, s: &Scenario) -> GridMap {
        let mut g = s.grid.clone();
        let known: Vec<Cell> = self.known_obstacles.iter().copied().filter(|c| g.in_bounds(*c)).collect();
        g.obstacles.extend(known);
        for (c, f) in &self.terrain {
            g.terrain.insert(*c, *f);
        }
        g
    }

    pub fn validate(&self, s: &Scenario) -> Result<(), ModelError> {
        let n = self.robots.len();
        for got in [self.positions.len(), self.batteries.len()] {
            if got != n {
                return Err(ModelError::RobotCount { expected: n, got });
            }
        }
        let g = self.effective_grid(s);
        for (i, &r) in self.robots.iter().enumerate() {
            let spec = &s.robots[r];
            if !g.is_free(self.positions[i]) {
                return Err(ModelError::BadPosition { robot: spec.id.clone(), cell: self.positions[i] });
            }
            let level = self.batteries[i];
            if !(-crate::num::FEAS_TOL..=spec.battery_capacity + crate::num::FEAS_TOL).contains(&level) {
                return Err(ModelError::BadBattery {
                    robot: spec.id.clone(),
                    level,
                    capacity: spec.battery_capacity,
                });
            }
        }
        Ok(())
    }
}

/// Everything the emitters read.
pub struct WindowContext<'a> {
    pub scenario: &'a Scenario,
    pub state: &'a WindowState,
    pub grid: GridMap,
    pub window: usize,
    pub options: ModelOptions,
}

impl<'a> WindowContext<'a> {
    pub fn new(scenario: &'a Scenario, state: &'a WindowState, window: usize, options: ModelOptions) -> Self {
        Self { scenario, state, grid: state.effective_grid(scenario), window, options }
    }

    fn capacity(&self, r: usize) -> f64 {
        self.scenario.robots[self.state.robots[r]].battery_capacity
    }

    fn stations(&self) -> Vec<Cell> {
        self.scenario.stations.iter().map(|s| s.cell).filter(|c| self.grid.is_free(*c)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub columns: usize,
    pub rows: usize,
    pub binaries: usize,
}

/// A maximization MILP.
#[derive(Clone, Debug)]
pub struct MilpModel<T> {
    pub columns: Vec<Column<T>>,
    pub rows: Vec<Row<T>>,
    pub index: HashMap<VarKind, usize>,
    pub t0: usize,
    pub window: usize,
    /// Number of robots in the window.
    pub robots: usize,
    pub variant: DynamicsVariant,
}

impl<T: Scalar> MilpModel<T> {
    pub fn empty() -> Self {
        Self {
            columns: Vec::new(),
            rows: Vec::new(),
            index: HashMap::new(),
            t0: 0,
            window: 0,
            robots: 0,
            variant: DynamicsVariant::A,
        }
    }

    pub fn add_column(&mut self, kind: VarKind, lb: T, ub: T, integer: bool) -> usize {
        let id = self.columns.len();
        self.columns.push(Column { kind, lb, ub, integer, obj: T::zero() });
        let prev = self.index.insert(kind, id);
        debug_assert!(prev.is_none(), "duplicate column {kind:?}");
        id
    }

    pub fn add_row(&mut self, name: String, terms: Vec<(usize, T)>, sense: Sense, rhs: T) {
        self.rows.push(Row { name, terms, sense, rhs });
    }

    pub fn col(&self, kind: VarKind) -> Option<usize> {
        self.index.get(&kind).copied()
    }

    fn need(&self, kind: VarKind) -> usize {
        self.col(kind).unwrap_or_else(|| panic!("missing column {kind:?}"))
    }

    pub fn fix(&mut self, j: usize, v: T) {
        self.columns[j].lb = v;
        self.columns[j].ub = v;
    }

    pub fn size(&self) -> ModelSize {
        ModelSize {
            columns: self.columns.len(),
            rows: self.rows.len(),
            binaries: self.columns.iter().filter(|c| c.integer).count(),
        }
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.columns.iter().zip(x).map(|(c, v)| c.obj * *v).sum()
    }

    /// Checks bounds, integrality and rows against `tol`; returns the first violation.
    pub fn check_feasible(&self, x: &[T], tol: T) -> Result<(), String> {
        if x.len() != self.columns.len() {
            return Err(format!("{} values for {} columns", x.len(), self.columns.len()));
        }
        for (c, &v) in self.columns.iter().zip(x) {
            if !(v >= c.lb - tol && v <= c.ub + tol) {
                return Err(format!("{} = {v} outside [{}, {}]", c.kind.name(self.t0), c.lb, c.ub));
            }
            if c.integer && (v - v.round()).abs() > tol {
                return Err(format!("{} = {v} not integral", c.kind.name(self.t0)));
            }
        }
        for row in &self.rows {
            let viol = row.violation(x);
            if viol > tol {
                return Err(format!("row {} violated by {viol}", row.name));
            }
        }
        Ok(())
    }

    /// LP-format text.
    pub fn to_lp_string(&self) -> String {
        let name = |j: usize| self.columns[j].kind.name(self.t0);
        let mut out = String::from("\\ energy-aware exploration window\nMaximize\n obj:");
        let mut any = false;
        for (j, c) in self.columns.iter().enumerate() {
            if c.obj != T::zero() {
                write_term(&mut out, c.obj, &name(j));
                any = true;
            }
        }
        if !any {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.name);
            if row.terms.is_empty() {
                out.push_str(" 0");
            }
            for &(j, a) in &row.terms {
                write_term(&mut out, a, &name(j));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, c) in self.columns.iter().enumerate() {
            if c.lb == c.ub {
                let _ = writeln!(out, " {} = {}", name(j), c.lb);
            } else {
                let _ = writeln!(out, " {} <= {} <= {}", c.lb, name(j), c.ub);
            }
        }
        let ints: Vec<String> = (0..self.columns.len()).filter(|&j| self.columns[j].integer).map(name).collect();
        if !ints.is_empty() {
            out.push_str("Binaries\n");
            for chunk in ints.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn write_term<T: Scalar>(out: &mut String, a: T, name: &str) {
    if a < T::zero() {
        let _ = write!(out, " - {} {name}", -a);
    } else {
        let _ = write!(out, " + {a} {name}");
    }
}

/// Creates every column for the window with its natural bounds.
pub fn index_columns<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) {
    let (w, nr) = (ctx.window, ctx.state.robots.len());
    let g = &ctx.grid;
    let (zero, one) = (T::zero(), T::one());
    let bin_e = !ctx.options.relax_exploration;
    let bin_prod = !ctx.options.relax_products;
    for r in 0..nr {
        for k in 0..=w {
            for cell in g.cells() {
                m.add_column(VarKind::L { r, k, cell }, zero, one, true);
            }
        }
    }
    for k in 0..=w {
        for cell in g.cells() {
            m.add_column(VarKind::E { k, cell }, zero, one, bin_e);
        }
    }
    for r in 0..nr {
        for k in 1..=w {
            m.add_column(VarKind::U { r, k }, zero, one, true);
        }
        for k in 0..=w {
            m.add_column(VarKind::Bat { r, k }, zero, T::lit(ctx.capacity(r)), false);
        }
    }
    for r in 0..nr {
        for k in 1..=w {
            for from in g.free_cells() {
                let targets: Vec<Cell> = if ctx.options.prune_upsilon {
                    g.neighbors(from).unwrap_or_default()
                } else {
                    g.free_cells().collect()
                };
                for to in targets {
                    m.add_column(VarKind::Ups { r, k, from, to }, zero, one, bin_prod);
                }
            }
        }
    }
    for r in 0..nr {
        for k in 1..=w {
            for cell in g.cells() {
                match m.variant {
                    DynamicsVariant::A => {
                        m.add_column(VarKind::Alpha { r, k, cell }, zero, one, bin_prod && bin_e);
                    }
                    DynamicsVariant::B => {
                        m.add_column(VarKind::Delta { r, k, cell }, zero, one, bin_prod);
                    }
                }
            }
        }
    }
}

/// One cell per robot per step; obstacle and start fixings; optional exclusivity.
pub fn emit_position_constraints<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let g = &ctx.grid;
    let before = m.rows.len();
    let nr = ctx.state.robots.len();
    for r in 0..nr {
        for k in 0..=ctx.window {
            for cell in g.cells() {
                let j = m.need(VarKind::L { r, k, cell });
                if k == 0 {
                    m.fix(j, if cell == ctx.state.positions[r] { T::one() } else { T::zero() });
                } else if g.is_obstacle(cell) {
                    m.columns[j].ub = T::zero();
                }
            }
        }
        for k in 1..=ctx.window {
            let terms = g.cells().map(|cell| (m.need(VarKind::L { r, k, cell }), T::one())).collect();
            m.add_row(format!("pos_r{}_t{}", r + 1, m.t0 + k), terms, Sense::Eq, T::one());
        }
    }
    if ctx.scenario.mission.collision_exclusive && nr > 1 {
        for k in 1..=ctx.window {
            for cell in g.cells() {
                let terms = (0..nr).map(|r| (m.need(VarKind::L { r, k, cell }), T::one())).collect();
                m.add_row(format!("excl_t{}_a{}_b{}", m.t0 + k, cell.a, cell.b), terms, Sense::Le, T::one());
            }
        }
    }
    m.rows.len() - before
}

/// Single-step adjacency between consecutive positions.
pub fn emit_motion_constraints<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let g = &ctx.grid;
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            match ctx.options.motion {
                MotionForm::Compact => {
                    for to in g.free_cells() {
                        let mut terms = vec![(m.need(VarKind::L { r, k, cell: to }), T::one())];
                        for n in g.neighbors(to).unwrap_or_default() {
                            terms.push((m.need(VarKind::L { r, k: k - 1, cell: n }), -T::one()));
                        }
                        m.add_row(
                            format!("move_r{}_t{}_a{}_b{}", r + 1, m.t0 + k, to.a, to.b),
                            terms,
                            Sense::Le,
                            T::zero(),
                        );
                    }
                }
                MotionForm::Pairwise => {
                    for from in g.free_cells() {
                        for to in g.free_cells().filter(|to| !g.adjacent(from, *to)) {
                            let terms = vec![
                                (m.need(VarKind::L { r, k: k - 1, cell: from }), T::one()),
                                (m.need(VarKind::L { r, k, cell: to }), T::one()),
                            ];
                            m.add_row(
                                format!(
                                    "move_r{}_t{}_a{}_b{}_a{}_b{}",
                                    r + 1,
                                    m.t0 + k,
                                    from.a,
                                    from.b,
                                    to.a,
                                    to.b
                                ),
                                terms,
                                Sense::Le,
                                T::one(),
                            );
                        }
                    }
                }
            }
        }
    }
    m.rows.len() - before
}

/// `z <= x`, `z <= y`, `z >= x + y - 1`.
fn envelope<T: Scalar>(m: &mut MilpModel<T>, name: &str, z: usize, x: usize, y: usize) {
    let one = T::one();
    m.add_row(format!("{name}_x"), vec![(z, one), (x, -one)], Sense::Le, T::zero());
    m.add_row(format!("{name}_y"), vec![(z, one), (y, -one)], Sense::Le, T::zero());
    m.add_row(format!("{name}_xy"), vec![(z, one), (x, -one), (y, -one)], Sense::Ge, -one);
}

pub fn emit_upsilon_linearization<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let before = m.rows.len();
    let ups: Vec<(usize, VarKind)> = m
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c.kind, VarKind::Ups { .. }))
        .map(|(j, c)| (j, c.kind))
        .collect();
    for (j, kind) in ups {
        if let VarKind::Ups { r, k, from, to } = kind {
            let x = m.need(VarKind::L { r, k: k - 1, cell: from });
            let y = m.need(VarKind::L { r, k, cell: to });
            envelope(m, &kind.name(ctx.state.t0), j, x, y);
        }
    }
    m.rows.len() - before
}

pub fn emit_alpha_linearization<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            for cell in ctx.grid.cells() {
                let kind = VarKind::Alpha { r, k, cell };
                let z = m.need(kind);
                let e = m.need(VarKind::E { k: k - 1, cell });
                let l = m.need(VarKind::L { r, k, cell });
                envelope(m, &kind.name(m.t0), z, e, l);
            }
        }
    }
    m.rows.len() - before
}

pub fn emit_delta_linearization<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            let u = m.need(VarKind::U { r, k });
            for cell in ctx.grid.cells() {
                let kind = VarKind::Delta { r, k, cell };
                let z = m.need(kind);
                let l = m.need(VarKind::L { r, k, cell });
                envelope(m, &kind.name(m.t0), z, u, l);
            }
        }
    }
    m.rows.len() - before
}

/// Movement cost terms `sum Ups * P_move` for robot `r` at step `k`.
fn move_terms<T: Scalar>(m: &MilpModel<T>, ctx: &WindowContext, r: usize, k: usize) -> Vec<(usize, T)> {
    let g = &ctx.grid;
    let mut terms = Vec::new();
    for from in g.free_cells() {
        for to in g.free_cells() {
            if let Some(j) = m.col(VarKind::Ups { r, k, from, to }) {
                let cost = p_move::<T>(&ctx.scenario.energy, g, from, to).unwrap_or(T::zero());
                if cost != T::zero() {
                    terms.push((j, cost));
                }
            }
        }
    }
    terms
}

fn battery_start<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) {
    for r in 0..ctx.state.robots.len() {
        let j = m.need(VarKind::Bat { r, k: 0 });
        let level = ctx.state.batteries[r].clamp(0.0, ctx.capacity(r));
        m.fix(j, T::lit(level));
    }
}

/// `Bat(k) = Bat(k-1) - P_RX + U(k)(CR + P_RX) - P_move
///           - sum_c (P_TX(c) + P_SEN)(L(k,c) - Alpha(k,c))`.
pub fn emit_battery_dynamics_a<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    battery_start(m, ctx);
    let e = &ctx.scenario.energy;
    let cr = ctx.scenario.charge_rate();
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            let mut terms = vec![
                (m.need(VarKind::Bat { r, k }), T::one()),
                (m.need(VarKind::Bat { r, k: k - 1 }), -T::one()),
                (m.need(VarKind::U { r, k }), -T::lit(cr + e.p_rx)),
            ];
            for cell in ctx.grid.free_cells() {
                let c = T::lit(e.p_tx_at(cell) + e.p_sen);
                terms.push((m.need(VarKind::L { r, k, cell }), c));
                terms.push((m.need(VarKind::Alpha { r, k, cell }), -c));
            }
            terms.extend(move_terms(m, ctx, r, k));
            m.add_row(format!("bat_r{}_t{}", r + 1, m.t0 + k), terms, Sense::Eq, -T::lit(e.p_rx));
        }
    }
    m.rows.len() - before
}

/// `Bat(k) = Bat(k-1) + U(k)(CR + P_RX + P_SEN) - P_RX - P_SEN
///           - sum_c P_TX(c)(L(k,c) - Delta(k,c)) - P_move`.
pub fn emit_battery_dynamics_b<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    battery_start(m, ctx);
    let e = &ctx.scenario.energy;
    let cr = ctx.scenario.charge_rate();
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            let mut terms = vec![
                (m.need(VarKind::Bat { r, k }), T::one()),
                (m.need(VarKind::Bat { r, k: k - 1 }), -T::one()),
                (m.need(VarKind::U { r, k }), -T::lit(cr + e.p_rx + e.p_sen)),
            ];
            for cell in ctx.grid.free_cells() {
                let c = T::lit(e.p_tx_at(cell));
                if c != T::zero() {
                    terms.push((m.need(VarKind::L { r, k, cell }), c));
                    terms.push((m.need(VarKind::Delta { r, k, cell }), -c));
                }
            }
            terms.extend(move_terms(m, ctx, r, k));
            m.add_row(
                format!("bat_r{}_t{}", r + 1, m.t0 + k),
                terms,
                Sense::Eq,
                -T::lit(e.p_rx + e.p_sen),
            );
        }
    }
    m.rows.len() - before
}

/// Exploration state: monotone, set by any visit, unchanged otherwise.
pub fn emit_exploration_constraints<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let g = &ctx.grid;
    let nr = ctx.state.robots.len();
    for k in 0..=ctx.window {
        for cell in g.cells() {
            let j = m.need(VarKind::E { k, cell });
            if g.is_obstacle(cell) {
                m.fix(j, T::zero());
            } else if k == 0 {
                m.fix(j, if ctx.state.explored.contains(&cell) { T::one() } else { T::zero() });
            }
        }
    }
    let before = m.rows.len();
    let one = T::one();
    for k in 1..=ctx.window {
        for cell in g.free_cells() {
            let e = m.need(VarKind::E { k, cell });
            let prev = m.need(VarKind::E { k: k - 1, cell });
            let tag = format!("t{}_a{}_b{}", m.t0 + k, cell.a, cell.b);
            m.add_row(format!("emono_{tag}"), vec![(e, one), (prev, -one)], Sense::Ge, T::zero());
            let mut upper = vec![(e, one), (prev, -one)];
            for r in 0..nr {
                let l = m.need(VarKind::L { r, k, cell });
                m.add_row(format!("evisit_r{}_{tag}", r + 1), vec![(e, one), (l, -one)], Sense::Ge, T::zero());
                upper.push((l, -one));
            }
            m.add_row(format!("eonly_{tag}"), upper, Sense::Le, T::zero());
        }
    }
    m.rows.len() - before
}

/// Charging only on station cells.
pub fn emit_charging_constraints<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) -> usize {
    let stations = ctx.stations();
    let before = m.rows.len();
    for r in 0..ctx.state.robots.len() {
        for k in 1..=ctx.window {
            let u = m.need(VarKind::U { r, k });
            if stations.is_empty() {
                m.columns[u].ub = T::zero();
                continue;
            }
            let mut terms = vec![(u, T::one())];
            for &s in &stations {
                terms.push((m.need(VarKind::L { r, k, cell: s }), -T::one()));
            }
            m.add_row(format!("charge_r{}_t{}", r + 1, m.t0 + k), terms, Sense::Le, T::zero());
        }
    }
    m.rows.len() - before
}

/// `max explore * sum_c E(W,c) + battery * sum_r Bat(r,W)`.
pub fn emit_objective<T: Scalar>(m: &mut MilpModel<T>, ctx: &WindowContext) {
    let w = ctx.scenario.objective_weights();
    for c in m.columns.iter_mut() {
        c.obj = T::zero();
    }
    for cell in ctx.grid.free_cells() {
        let j = m.need(VarKind::E { k: ctx.window, cell });
        m.columns[j].obj = T::lit(w.explore);
    }
    for r in 0..ctx.state.robots.len() {
        let j = m.need(VarKind::Bat { r, k: ctx.window });
        m.columns[j].obj = T::lit(w.battery);
    }
}

pub fn build_model<T: Scalar>(s: &Scenario, window: usize, state: &WindowState) -> Result<MilpModel<T>, ModelError> {
    build_model_with(s, window, state, ModelOptions::from_scenario(s))
}

pub fn build_model_with<T: Scalar>(
    s: &Scenario,
    window: usize,
    state: &WindowState,
    options: ModelOptions,
) -> Result<MilpModel<T>, ModelError> {
    state.validate(s)?;
    let ctx = WindowContext::new(s, state, window, options);
    let mut m = MilpModel::empty();
    m.t0 = state.t0;
    m.window = window;
    m.robots = state.robots.len();
    m.variant = s.variant();
    index_columns(&mut m, &ctx);
    emit_position_constraints(&mut m, &ctx);
    emit_motion_constraints(&mut m, &ctx);
    emit_upsilon_linearization(&mut m, &ctx);
    emit_exploration_constraints(&mut m, &ctx);
    emit_charging_constraints(&mut m, &ctx);
    match m.variant {
        DynamicsVariant::A => {
            emit_alpha_linearization(&mut m, &ctx);
            emit_battery_dynamics_a(&mut m, &ctx);
        }
        DynamicsVariant::B => {
            emit_delta_linearization(&mut m, &ctx);
            emit_battery_dynamics_b(&mut m, &ctx);
        }
    }
    emit_objective(&mut m, &ctx);
    let size = m.size();
    log::debug!(
        "window model t0={} W={}: {} columns, {} rows, {} binaries",
        m.t0,
        window,
        size.columns,
        size.rows,
        size.binaries
    );
    Ok(m)
}

/// Checks `Ups = L(k-1,from)·L(k,to)`, `Alpha = E(k-1,c)·L(k,c)` and
/// `Delta = U(k)·L(k,c)` on every product column; returns the number checked.
pub fn check_products<T: Scalar>(m: &MilpModel<T>, x: &[T], tol: T) -> Result<usize, String> {
    let v = |kind: VarKind| m.col(kind).map_or(T::zero(), |j| x[j]);
    let mut checked = 0;
    for (j, c) in m.columns.iter().enumerate() {
        let product = match c.kind {
            VarKind::Ups { r, k, from, to } => v(VarKind::L { r, k: k - 1, cell: from }) * v(VarKind::L { r, k, cell: to }),
            VarKind::Alpha { r, k, cell } => v(VarKind::E { k: k - 1, cell }) * v(VarKind::L { r, k, cell }),
            VarKind::Delta { r, k, cell } => v(VarKind::U { r, k }) * v(VarKind::L { r, k, cell }),
            _ => continue,
        };
        if (x[j] - product).abs() > tol {
            return Err(format!("{} = {} but the product is {}", c.kind.name(m.t0), x[j], product));
        }
        checked += 1;
    }
    Ok(checked)
}

/// One robot's decisions for window steps `1..=W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobotMoves {
    pub cells: Vec<Cell>,
    pub charging: Vec<bool>,
}

/// Full column assignment for the given moves. Batteries follow the
/// unclamped recursion, so an over-full or negative level shows up as a bound violation.
pub fn encode_assignment<T: Scalar>(
    m: &MilpModel<T>,
    s: &Scenario,
    state: &WindowState,
    moves: &[RobotMoves],
) -> Vec<T> {
    let g = state.effective_grid(s);
    let e = &s.energy;
    let cr = s.charge_rate();
    let mut x = vec![T::zero(); m.columns.len()];
    let set = |kind: VarKind, v: T, x: &mut Vec<T>| {
        if let Some(j) = m.col(kind) {
            x[j] = v;
        }
    };
    let mut explored = state.explored.clone();
    for cell in &explored {
        set(VarKind::E { k: 0, cell: *cell }, T::one(), &mut x);
    }
    let mut pos = state.positions.clone();
    let mut bat: Vec<T> = state.batteries.iter().map(|b| T::lit(*b)).collect();
    for r in 0..m.robots {
        set(VarKind::L { r, k: 0, cell: pos[r] }, T::one(), &mut x);
        set(VarKind::Bat { r, k: 0 }, bat[r], &mut x);
    }
    for k in 1..=m.window {
        let mut visited = Vec::new();
        for r in 0..m.robots {
            let (from, to) = (pos[r], moves[r].cells[k - 1]);
            let charging = moves[r].charging[k - 1];
            let dest_explored = explored.contains(&to);
            set(VarKind::L { r, k, cell: to }, T::one(), &mut x);
            set(VarKind::Ups { r, k, from, to }, T::one(), &mut x);
            if charging {
                set(VarKind::U { r, k }, T::one(), &mut x);
                set(VarKind::Delta { r, k, cell: to }, T::one(), &mut x);
            }
            if dest_explored {
                set(VarKind::Alpha { r, k, cell: to }, T::one(), &mut x);
            }
            // A non-adjacent move is charged no movement; the motion rows reject it.
            let src = if g.adjacent(from, to) { from } else { to };
            let action = crate::energy::Action { from: src, to, charging, dest_explored };
            let step = match m.variant {
                DynamicsVariant::A => crate::energy::step_energy_a::<T>(action, cr, e, &g),
                DynamicsVariant::B => crate::energy::step_energy_b::<T>(action, cr, e, &g),
            };
            bat[r] = bat[r] + step.map_or(T::zero(), |se| se.net());
            set(VarKind::Bat { r, k }, bat[r], &mut x);
            pos[r] = to;
            visited.push(to);
        }
        explored.extend(visited);
        for cell in &explored {
            set(VarKind::E { k, cell: *cell }, T::one(), &mut x);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ChargingStation, EnergyParams, Mission, ObjectiveWeights, RobotSpec};

    pub(crate) fn tiny(robots: usize) -> Scenario {
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

    fn count_kind(m: &MilpModel<f64>, f: impl Fn(&VarKind) -> bool) -> usize {
        m.columns.iter().filter(|c| f(&c.kind)).count()
    }

    fn rows_with<'m>(m: &'m MilpModel<f64>, prefix: &str) -> Vec<&'m Row<f64>> {
        m.rows.iter().filter(|r| r.name.starts_with(prefix)).collect()
    }

    #[test]
    fn position_rows_one_robot_window_two() {
        let s = tiny(1);
        let m = build_model::<f64>(&s, 2, &WindowState::initial(&s)).unwrap();
        assert_eq!(rows_with(&m, "pos_").len(), 2);
        let start = m.col(VarKind::L { r: 0, k: 0, cell: Cell::new(1, 1) }).unwrap();
        assert_eq!((m.columns[start].lb, m.columns[start].ub), (1.0, 1.0));
    }

    #[test]
    fn exclusivity_adds_cell_times_step_rows() {
        let mut s = tiny(2);
        s.mission.collision_exclusive = true;
        let m = build_model::<f64>(&s, 2, &WindowState::initial(&s)).unwrap();
        assert_eq!(rows_with(&m, "excl_").len(), 18);
    }

    #[test]
    fn obstacle_columns_have_zero_upper_bound() {
        let mut s = tiny(1);
        s.grid.obstacles.insert(Cell::new(2, 2));
        let m = build_model::<f64>(&s, 2, &WindowState::initial(&s)).unwrap();
        for k in 1..=2 {
            let j = m.col(VarKind::L { r: 0, k, cell: Cell::new(2, 2) }).unwrap();
            assert_eq!(m.columns[j].ub, 0.0);
        }
    }

    #[test]
    fn corner_motion_row_has_four_sources() {
        let s = tiny(1);
        let m = build_model::<f64>(&s, 1, &WindowState::initial(&s)).unwrap();
        let row = m.rows.iter().find(|r| r.name == "move_r1_t1_a1_b1").unwrap();
        assert_eq!(row.terms.iter().filter(|(_, a)| *a < 0.0).count(), 4);
    }

    #[test]
    fn upsilon_counts_pruned_and_unpruned() {
        let s = tiny(1);
        let st = WindowState::initial(&s);
        let m = build_model::<f64>(&s, 1, &st).unwrap();
        assert_eq!(count_kind(&m, |k| matches!(k, VarKind::Ups { .. })), 49);
        let u = build_model_with::<f64>(&s, 1, &st, ModelOptions::unpruned()).unwrap();
        assert_eq!(count_kind(&u, |k| matches!(k, VarKind::Ups { .. })), 81);
    }

    #[test]
    fn alpha_and_delta_gated_by_variant() {
        let mut s = tiny(1);
        let st = WindowState::initial(&s);
        let a = build_model::<f64>(&s, 2, &st).unwrap();
        assert_eq!(count_kind(&a, |k| matches!(k, VarKind::Alpha { .. })), 2 * 9);
        assert_eq!(count_kind(&a, |k| matches!(k, VarKind::Delta { .. })), 0);
        assert_eq!(rows_with(&a, "Alpha_").len(), 2 * 3 * 9);
        s.planner.variant = DynamicsVariant::B;
        let b = build_model::<f64>(&s, 2, &st).unwrap();
        assert_eq!(count_kind(&b, |k| matches!(k, VarKind::Alpha { .. })), 0);
        assert_eq!(rows_with(&b, "Delta_").len(), 2 * 3 * 9);
    }

    #[test]
    fn binary_count_closed_form() {
        let s = tiny(1);
        let w = 3;
        let m = build_model::<f64>(&s, w, &WindowState::initial(&s)).unwrap();
        // L over steps 0..=W, E over 0..=W, U, Ups (49 per step), Alpha (9 per step).
        let expected = (w + 1) * 9 + (w + 1) * 9 + w + w * 49 + w * 9;
        assert_eq!(m.size().binaries, expected);
    }

    #[test]
    fn no_stations_fix_charging_off() {
        let s = tiny(1);
        let m = build_model::<f64>(&s, 2, &WindowState::initial(&s)).unwrap();
        for k in 1..=2 {
            assert_eq!(m.columns[m.col(VarKind::U { r: 0, k }).unwrap()].ub, 0.0);
        }
        assert!(rows_with(&m, "charge_").is_empty());
    }

    #[test]
    fn station_links_charging_to_location() {
        let mut s = tiny(1);
        s.stations.push(ChargingStation { cell: Cell::new(2, 2), charge_rate: 5.0 });
        let m = build_model::<f64>(&s, 2, &WindowState::initial(&s)).unwrap();
        assert_eq!(rows_with(&m, "charge_").len(), 2);
    }

    #[test]
    fn stay_assignment_reproduces_battery_step() {
        // Starting cell not yet explored, robot stays: 100 - 0.5 - 2 - 1 = 96.5.
        let s = tiny(1);
        let mut st = WindowState::initial(&s);
        st.explored.clear();
        let m = build_model::<f64>(&s, 1, &st).unwrap();
        let moves = [RobotMoves { cells: vec![Cell::new(1, 1)], charging: vec![false] }];
        let x = encode_assignment(&m, &s, &st, &moves);
        m.check_feasible(&x, 1e-9).unwrap();
        assert_eq!(x[m.col(VarKind::Bat { r: 0, k: 1 }).unwrap()], 96.5);
    }

    #[test]
    fn teleport_is_infeasible() {
        let s = tiny(1);
        let st = WindowState::initial(&s);
        let m = build_model::<f64>(&s, 1, &st).unwrap();
        let moves = [RobotMoves { cells: vec![Cell::new(3, 1)], charging: vec![false] }];
        let x = encode_assignment(&m, &s, &st, &moves);
        let err = m.check_feasible(&x, 1e-9).unwrap_err();
        assert!(err.contains("move_"), "{err}");
    }

    #[test]
    fn weights_are_applied() {
        let mut s = tiny(1);
        s.mission.objective_weights = Some(ObjectiveWeights { explore: 3.0, battery: 0.0 });
        let m = build_model::<f64>(&s, 1, &WindowState::initial(&s)).unwrap();
        let bat = m.col(VarKind::Bat { r: 0, k: 1 }).unwrap();
        let e = m.col(VarKind::E { k: 1, cell: Cell::new(2, 2) }).unwrap();
        assert_eq!((m.columns[bat].obj, m.columns[e].obj), (0.0, 3.0));
    }

    #[test]
    fn lp_dump_names_columns() {
        let s = tiny(1);
        let mut st = WindowState::initial(&s);
        st.t0 = 2;
        let m = build_model::<f64>(&s, 1, &st).unwrap();
        let lp = m.to_lp_string();
        assert!(lp.contains("L_r1_t3_a2_b2"));
        assert!(lp.starts_with("\\") && lp.ends_with("End\n"));
    }

    #[test]
    fn bad_state_rejected() {
        let s = tiny(1);
        let mut st = WindowState::initial(&s);
        st.batteries[0] = 120.0;
        assert!(matches!(build_model::<f64>(&s, 1, &st), Err(ModelError::BadBattery { .. })));
        let mut st = WindowState::initial(&s);
        st.known_obstacles.insert(Cell::new(1, 1));
        assert!(matches!(build_model::<f64>(&s, 1, &st), Err(ModelError::BadPosition { .. })));
    }
}
