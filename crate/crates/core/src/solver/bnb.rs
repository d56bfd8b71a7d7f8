//! Branch-and-bound over binary columns.
//!
//! Nodes carry the list of binaries they fix. Until the first incumbent the
//! search dives depth-first, taking the child nearer the LP value first;
//! afterwards it always expands the open node with the best bound. Children
//! reuse their parent's LP state when it is still held, otherwise the root
//! LP is cloned and all fixings are applied.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::presolve::{presolve, LpProblem, Presolved};
use super::simplex::LpStatus;
use super::{lp_status, Backend, LpEngine, Solution, SolveStats, Status};
use crate::milp::MilpModel;
use crate::num::Scalar;

#[derive(Clone, Debug)]
pub struct BnbOptions<T> {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub backend: Backend,
    /// Full column assignment tried as the first incumbent.
    pub mip_start: Option<Vec<T>>,
}

impl<T> Default for BnbOptions<T> {
    fn default() -> Self {
        Self { time_limit: None, node_limit: None, backend: Backend::Auto, mip_start: None }
    }
}

/// Memory allowed for LP states retained by open nodes.
const WARM_BUDGET_BYTES: usize = 512 << 20;

struct Node<T> {
    id: usize,
    depth: usize,
    bound: T,
    fixings: Vec<(usize, T)>,
    parent: Option<Rc<LpEngine<T>>>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Node<T> {}
impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Node<T> {
    /// Max-heap order: higher bound first, then deeper, then older.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

enum Open<T> {
    Dive(Vec<Node<T>>),
    Best(BinaryHeap<Node<T>>),
}

impl<T: Scalar> Open<T> {
    fn pop(&mut self) -> Option<Node<T>> {
        match self {
            Open::Dive(v) => v.pop(),
            Open::Best(h) => h.pop(),
        }
    }
    fn push(&mut self, n: Node<T>) {
        match self {
            Open::Dive(v) => v.push(n),
            Open::Best(h) => h.push(n),
        }
    }
    fn len(&self) -> usize {
        match self {
            Open::Dive(v) => v.len(),
            Open::Best(h) => h.len(),
        }
    }
    fn to_best(&mut self) {
        if let Open::Dive(v) = self {
            *self = Open::Best(std::mem::take(v).into_iter().collect());
        }
    }
    /// Drops retained parent states from all but the `keep` highest-priority
    /// nodes; returns how many were dropped.
    fn shed(&mut self, keep: usize) -> usize {
        let mut nodes: Vec<Node<T>> = match self {
            Open::Dive(v) => std::mem::take(v),
            Open::Best(h) => std::mem::take(h).into_vec(),
        };
        let mut dropped = 0;
        let mut kept = 0;
        match self {
            // The stack pops from the back.
            Open::Dive(_) => {
                for n in nodes.iter_mut().rev() {
                    if n.parent.is_some() {
                        if kept < keep {
                            kept += 1;
                        } else {
                            n.parent = None;
                            dropped += 1;
                        }
                    }
                }
                *self = Open::Dive(nodes);
            }
            Open::Best(_) => {
                nodes.sort_by(|a, b| b.cmp(a));
                for n in nodes.iter_mut() {
                    if n.parent.is_some() {
                        if kept < keep {
                            kept += 1;
                        } else {
                            n.parent = None;
                            dropped += 1;
                        }
                    }
                }
                *self = Open::Best(nodes.into());
            }
        }
        dropped
    }

    fn best_bound(&self) -> Option<T> {
        match self {
            Open::Dive(v) => v.iter().map(|n| n.bound).reduce(T::max),
            Open::Best(h) => h.peek().map(|n| n.bound),
        }
    }
}

struct Incumbent<T> {
    objective: T,
    reduced: Vec<T>,
}

/// Most fractional integer column, ties to the lowest index.
fn branching_column<T: Scalar>(x: &[T], integer: &[bool]) -> Option<(usize, T)> {
    let tol = T::int_tol();
    let mut best: Option<(usize, T, T)> = None;
    for (j, &v) in x.iter().enumerate() {
        if !integer[j] {
            continue;
        }
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac > tol && best.is_none_or(|(_, f, _)| frac > f) {
            best = Some((j, frac, v));
        }
    }
    best.map(|(j, _, v)| (j, v))
}

pub fn solve_bnb<T: Scalar>(model: &MilpModel<T>, opts: &BnbOptions<T>) -> Solution<T> {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|d| start + d);
    let size = model.size();
    let mut stats = SolveStats { columns: size.columns, rows: size.rows, ..Default::default() };
    let finish = |status: Status, values: Vec<T>, mut stats: SolveStats| {
        stats.wall_time_s = start.elapsed().as_secs_f64();
        let objective = if values.is_empty() { f64::NAN } else { model.objective_value(&values).as_f64() };
        Solution { status, objective, values, stats }
    };

    let Ok(pre) = presolve(LpProblem::from_model(model, false)) else {
        return finish(Status::Infeasible, Vec::new(), stats);
    };
    let p = &pre.problem;
    assert!(
        (0..p.cols()).all(|j| !p.integer[j] || p.ub[j] - p.lb[j] <= T::one()),
        "branch-and-bound supports binary columns only"
    );
    stats.presolved_columns = p.cols();
    stats.presolved_rows = p.rows.len();

    let mut incumbent: Option<Incumbent<T>> = None;
    if let Some(start_x) = &opts.mip_start {
        match model.check_feasible(start_x, T::feas_tol()) {
            Ok(()) => {
                let reduced = pre.reduce(start_x);
                // Presolve may have fixed columns the start disagrees with.
                if pre.expand(&reduced).iter().zip(start_x).all(|(a, b)| (*a - *b).abs() <= T::feas_tol()) {
                    incumbent = Some(Incumbent { objective: p.objective(&reduced), reduced });
                    stats.incumbent_updates += 1;
                } else {
                    log::debug!("MIP start disagrees with presolve fixings; ignored");
                }
            }
            Err(why) => log::debug!("MIP start rejected: {why}"),
        }
    }

    if p.cols() == 0 {
        let x = pre.expand(&[]);
        return match model.check_feasible(&x, T::feas_tol()) {
            Ok(()) => finish(Status::Optimal, x, stats),
            Err(_) => finish(Status::Infeasible, Vec::new(), stats),
        };
    }

    let root = LpEngine::new(p, opts.backend, deadline);
    stats.backend = root.name();
    stats.lp_iterations += root.iterations();
    match root.status() {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return finish(Status::Infeasible, Vec::new(), stats),
        other => {
            let status = lp_status(other);
            let values = incumbent.map(|i| polish(&pre, &i.reduced, opts.backend, model)).unwrap_or_default();
            return finish(status, values, stats);
        }
    }
    let warm_cap = (WARM_BUDGET_BYTES / root.approx_bytes().max(1)).max(4);
    let root = Rc::new(root);
    stats.best_bound = Some(root.objective().as_f64());

    let mut open = if incumbent.is_some() { Open::Best(BinaryHeap::new()) } else { Open::Dive(Vec::new()) };
    open.push(Node { id: 0, depth: 0, bound: root.objective(), fixings: Vec::new(), parent: None });
    let mut next_id = 1;
    let mut warm_held = 0usize;
    let mut limit_hit = false;
    let obj_tol = T::obj_tol();

    while let Some(node) = open.pop() {
        if node.parent.is_some() {
            warm_held -= 1;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) || opts.node_limit.is_some_and(|n| stats.nodes >= n) {
            open.push(node);
            limit_hit = true;
            break;
        }
        if let Some(inc) = &incumbent {
            if node.bound <= inc.objective + obj_tol {
                continue;
            }
        }
        stats.nodes += 1;
        let engine: LpEngine<T> = if node.id == 0 {
            (*root).clone()
        } else {
            match &node.parent {
                Some(parent) => {
                    let mut e = (**parent).clone();
                    let before = e.iterations();
                    e.fix_many(&node.fixings[node.fixings.len() - 1..]);
                    stats.lp_iterations += e.iterations().saturating_sub(before);
                    e
                }
                None => {
                    let mut e = (*root).clone();
                    let before = e.iterations();
                    e.fix_many(&node.fixings);
                    stats.lp_iterations += e.iterations().saturating_sub(before);
                    e
                }
            }
        };
        match engine.status() {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::TimeLimit => {
                open.push(node);
                limit_hit = true;
                break;
            }
            other => {
                log::warn!("node {} LP ended with {other:?}; node dropped", node.id);
                stats.unstable_nodes += 1;
                continue;
            }
        }
        let obj = engine.objective();
        if let Some(inc) = &incumbent {
            if obj <= inc.objective + obj_tol {
                continue;
            }
        }
        let x = engine.values();
        match branching_column(&x, &p.integer) {
            None => {
                let reduced: Vec<T> =
                    x.iter().zip(&p.integer).map(|(v, &int)| if int { v.round() } else { *v }).collect();
                log::debug!("incumbent {} at node {}", obj, node.id);
                incumbent = Some(Incumbent { objective: obj, reduced });
                stats.incumbent_updates += 1;
                open.to_best();
            }
            Some((j, v)) => {
                if warm_held + 2 > warm_cap {
                    warm_held -= open.shed(warm_cap / 2);
                }
                let engine = Rc::new(engine);
                let (lo, hi) = (v.floor(), v.ceil());
                // The child nearer the LP value is explored first while diving.
                let first_up = v - lo >= T::lit(0.5);
                let order = if first_up { [lo, hi] } else { [hi, lo] };
                for val in order {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, val));
                    let parent = (warm_held < warm_cap).then(|| Rc::clone(&engine));
                    if parent.is_some() {
                        warm_held += 1;
                    }
                    open.push(Node { id: next_id, depth: node.depth + 1, bound: obj, fixings, parent });
                    next_id += 1;
                }
            }
        }
    }

    stats.best_bound = match (&incumbent, open.best_bound()) {
        (Some(inc), Some(b)) if limit_hit => Some(b.max(inc.objective).as_f64()),
        (Some(inc), _) => Some(inc.objective.as_f64()),
        (None, Some(b)) if limit_hit => Some(b.as_f64()),
        _ => None,
    };
    let status = match (&incumbent, limit_hit || open.len() > 0) {
        (Some(_), false) => Status::Optimal,
        (Some(_), true) => Status::TimeLimit,
        (None, true) => Status::TimeLimit,
        (None, false) => Status::Infeasible,
    };
    let values = incumbent.map(|i| polish(&pre, &i.reduced, opts.backend, model)).unwrap_or_default();
    finish(status, values, stats)
}

/// Re-solves with every integer column fixed so continuous values come from
/// a fresh factorization; integers are rounded exactly.
fn polish<T: Scalar>(pre: &Presolved<T>, reduced: &[T], backend: Backend, model: &MilpModel<T>) -> Vec<T> {
    let p = &pre.problem;
    let mut fixed = p.clone();
    for j in 0..p.cols() {
        if p.integer[j] {
            let v = reduced[j].round();
            fixed.lb[j] = v;
            fixed.ub[j] = v;
        }
    }
    let mut out = pre.expand(reduced);
    if let Ok(inner) = presolve(fixed) {
        let engine = (inner.problem.cols() > 0).then(|| LpEngine::new(&inner.problem, backend, None));
        let polished = match &engine {
            Some(e) if e.status() == LpStatus::Optimal => Some(inner.expand(&e.values())),
            Some(_) => None,
            None => Some(inner.expand(&[])),
        };
        if let Some(v) = polished {
            let candidate = pre.expand(&v);
            if model.check_feasible(&candidate, T::feas_tol()).is_ok() {
                out = candidate;
            }
        }
    }
    for (j, c) in model.columns.iter().enumerate() {
        if c.integer {
            out[j] = out[j].round();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Sense, VarKind};

    fn binaries(n: usize) -> MilpModel<f64> {
        let mut m = MilpModel::empty();
        for i in 0..n {
            m.add_column(VarKind::U { r: i, k: 1 }, 0.0, 1.0, true);
        }
        m
    }

    #[test]
    fn rounding_down_forced() {
        let mut m = binaries(1);
        m.columns[0].obj = 1.0;
        m.add_row("half".into(), vec![(0, 2.0)], Sense::Le, 1.0);
        let s = solve_bnb(&m, &BnbOptions::default());
        assert_eq!((s.status, s.objective), (Status::Optimal, 0.0));
    }

    #[test]
    fn knapsack_picks_heavier_item() {
        let mut m = binaries(2);
        m.columns[0].obj = 3.0;
        m.columns[1].obj = 2.0;
        m.add_row("cap".into(), vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0);
        let s = solve_bnb(&m, &BnbOptions::default());
        assert_eq!((s.status, s.objective), (Status::Optimal, 3.0));
        assert_eq!(s.values, vec![1.0, 0.0]);
    }

    #[test]
    fn fractional_knapsack_needs_branching() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8.
        let mut m = binaries(3);
        for (j, c) in [5.0, 4.0, 3.0].into_iter().enumerate() {
            m.columns[j].obj = c;
        }
        m.add_row("r1".into(), vec![(0, 2.0), (1, 3.0), (2, 1.0)], Sense::Le, 5.0);
        m.add_row("r2".into(), vec![(0, 4.0), (1, 1.0), (2, 2.0)], Sense::Le, 11.0);
        m.add_row("r3".into(), vec![(0, 3.0), (1, 4.0), (2, 2.0)], Sense::Le, 6.0);
        for backend in [Backend::Dense, Backend::Sparse] {
            let s = solve_bnb(&m, &BnbOptions { backend, ..Default::default() });
            assert_eq!(s.status, Status::Optimal);
            assert_eq!(s.objective, 8.0, "{backend:?}");
        }
    }

    #[test]
    fn infeasible_binary_program() {
        let mut m = binaries(2);
        m.add_row("two".into(), vec![(0, 1.0), (1, 1.0)], Sense::Ge, 1.5);
        m.add_row("one".into(), vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.2);
        assert_eq!(solve_bnb(&m, &BnbOptions::default()).status, Status::Infeasible);
    }

    #[test]
    fn node_limit_keeps_incumbent_from_start() {
        let mut m = binaries(3);
        for (j, c) in [5.0, 4.0, 3.0].into_iter().enumerate() {
            m.columns[j].obj = c;
        }
        m.add_row("r1".into(), vec![(0, 2.0), (1, 3.0), (2, 1.0)], Sense::Le, 5.0);
        m.add_row("r3".into(), vec![(0, 3.0), (1, 4.0), (2, 2.0)], Sense::Le, 6.0);
        let opts = BnbOptions { node_limit: Some(0), mip_start: Some(vec![0.0, 0.0, 1.0]), ..Default::default() };
        let s = solve_bnb(&m, &opts);
        assert_eq!(s.status, Status::TimeLimit);
        assert_eq!(s.objective, 3.0);
    }
}
