//! LP relaxation, branch-and-bound and the exhaustive path oracle.

pub mod bnb;
pub mod exhaustive;
pub mod plan;
pub mod presolve;
pub mod simplex;
pub mod sparse;

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::milp::MilpModel;
use crate::num::Scalar;
use presolve::{presolve, LpProblem};
use simplex::{DenseSimplex, LpStatus};
use sparse::SparseLp;

pub use bnb::{solve_bnb, BnbOptions};
pub use exhaustive::{solve_exhaustive, OracleError, OracleSolution};
pub use plan::{extract_plan, replay_plan, Plan, PlanError, PlanStep, RobotPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    TimeLimit,
    Unbounded,
    NumericallyUnstable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time_s: f64,
    pub columns: usize,
    pub rows: usize,
    pub presolved_columns: usize,
    pub presolved_rows: usize,
    pub incumbent_updates: usize,
    pub best_bound: Option<f64>,
    pub backend: &'static str,
    pub unstable_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution<T> {
    pub status: Status,
    pub objective: f64,
    /// One value per model column; empty when no feasible point is known.
    pub values: Vec<T>,
    pub stats: SolveStats,
}

impl<T: Scalar> Solution<T> {
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn stats_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            status: Status,
            objective: Option<f64>,
            #[serde(flatten)]
            stats: &'a SolveStats,
        }
        let objective = self.has_values().then_some(self.objective);
        serde_json::to_string_pretty(&Out { status: self.status, objective, stats: &self.stats })
            .expect("stats serialize")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    /// Dense tableau when it fits in [`DENSE_LIMIT`] entries, sparse otherwise.
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// Largest dense tableau, in entries, that `Auto` picks.
pub const DENSE_LIMIT: usize = 4_000_000;

#[derive(Clone)]
pub enum LpEngine<T> {
    Dense(Box<DenseSimplex<T>>),
    Sparse(SparseLp<T>),
}

impl<T: Scalar> LpEngine<T> {
    pub fn new(p: &LpProblem<T>, backend: Backend, deadline: Option<Instant>) -> Self {
        let m = p.rows.len();
        let dense = match backend {
            Backend::Dense => true,
            Backend::Sparse => false,
            Backend::Auto => m * (p.cols() + 2 * m) <= DENSE_LIMIT,
        };
        if dense {
            LpEngine::Dense(Box::new(DenseSimplex::new(p, deadline)))
        } else {
            LpEngine::Sparse(SparseLp::new(p, deadline))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LpEngine::Dense(_) => "dense",
            LpEngine::Sparse(_) => "sparse",
        }
    }

    pub fn status(&self) -> LpStatus {
        match self {
            LpEngine::Dense(s) => s.status(),
            LpEngine::Sparse(s) => s.status(),
        }
    }

    /// Objective including the presolve offset.
    pub fn objective(&self) -> T {
        match self {
            LpEngine::Dense(s) => s.objective(),
            LpEngine::Sparse(s) => s.objective(),
        }
    }

    pub fn values(&self) -> Vec<T> {
        match self {
            LpEngine::Dense(s) => s.values(),
            LpEngine::Sparse(s) => s.values(),
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            LpEngine::Dense(s) => s.iterations,
            LpEngine::Sparse(s) => s.iterations,
        }
    }

    /// Rough heap size of the engine state, for warm-start budgeting.
    pub fn approx_bytes(&self) -> usize {
        match self {
            LpEngine::Dense(s) => s.approx_bytes(),
            LpEngine::Sparse(s) => s.approx_bytes(),
        }
    }

    pub fn fix_many(&mut self, fixes: &[(usize, T)]) -> LpStatus {
        match self {
            LpEngine::Dense(s) => {
                let changes: Vec<(usize, T, T)> = fixes.iter().map(|&(j, v)| (j, v, v)).collect();
                s.set_bounds_many(&changes)
            }
            LpEngine::Sparse(s) => s.fix_many(fixes),
        }
    }
}

pub(crate) fn lp_status(s: LpStatus) -> Status {
    match s {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
        LpStatus::TimeLimit | LpStatus::IterationLimit => Status::TimeLimit,
        LpStatus::NumericallyUnstable => Status::NumericallyUnstable,
    }
}

/// Solves the LP relaxation (all columns continuous).
pub fn solve_lp<T: Scalar>(model: &MilpModel<T>, backend: Backend, time_limit: Option<Duration>) -> Solution<T> {
    let start = Instant::now();
    let deadline = time_limit.map(|d| start + d);
    let size = model.size();
    let mut stats = SolveStats { columns: size.columns, rows: size.rows, ..Default::default() };
    let finish = |status, objective, values, mut stats: SolveStats| {
        stats.wall_time_s = start.elapsed().as_secs_f64();
        Solution { status, objective, values, stats }
    };
    let Ok(pre) = presolve(LpProblem::from_model(model, true)) else {
        return finish(Status::Infeasible, f64::NAN, Vec::new(), stats);
    };
    stats.presolved_columns = pre.problem.cols();
    stats.presolved_rows = pre.problem.rows.len();
    if pre.problem.cols() == 0 {
        let x = pre.expand(&[]);
        let obj = model.objective_value(&x).as_f64();
        return finish(Status::Optimal, obj, x, stats);
    }
    let engine = LpEngine::new(&pre.problem, backend, deadline);
    stats.backend = engine.name();
    stats.lp_iterations = engine.iterations();
    match engine.status() {
        LpStatus::Optimal => {
            let x = pre.expand(&engine.values());
            let obj = model.objective_value(&x).as_f64();
            stats.best_bound = Some(obj);
            finish(Status::Optimal, obj, x, stats)
        }
        other => finish(lp_status(other), f64::NAN, Vec::new(), stats),
    }
}
