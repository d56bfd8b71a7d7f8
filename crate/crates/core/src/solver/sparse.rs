//! Sparse LP backend on `microlp` for models too large for a dense tableau.

use std::marker::PhantomData;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOptions, SolveOutcome, Variable};

use super::presolve::LpProblem;
use super::simplex::LpStatus;
use crate::milp::Sense;
use crate::num::Scalar;

#[derive(Clone)]
pub struct SparseLp<T> {
    vars: Vec<Variable>,
    solution: Option<microlp::Solution>,
    status: LpStatus,
    offset: f64,
    size: usize,
    deadline: Option<Instant>,
    pub iterations: usize,
    _scalar: PhantomData<T>,
}

fn map_err(e: &microlp::Error) -> LpStatus {
    match e {
        microlp::Error::Infeasible => LpStatus::Infeasible,
        microlp::Error::Unbounded => LpStatus::Unbounded,
        _ => LpStatus::NumericallyUnstable,
    }
}

impl<T: Scalar> SparseLp<T> {
    pub fn new(p: &LpProblem<T>, deadline: Option<Instant>) -> Self {
        let mut prob = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Variable> =
            (0..p.cols()).map(|j| prob.add_var(p.obj[j].as_f64(), (p.lb[j].as_f64(), p.ub[j].as_f64()))).collect();
        for row in &p.rows {
            let terms: Vec<(Variable, f64)> = row.terms.iter().map(|&(j, a)| (vars[j], a.as_f64())).collect();
            let op = match row.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            prob.add_constraint(terms.as_slice(), op, row.rhs.as_f64());
        }
        let mut s = Self {
            vars,
            solution: None,
            status: LpStatus::IterationLimit,
            offset: p.obj_offset.as_f64(),
            size: p.cols() + p.rows.len(),
            deadline,
            iterations: 0,
            _scalar: PhantomData,
        };
        let time_limit = match deadline {
            Some(d) => match d.checked_duration_since(Instant::now()) {
                Some(left) if left > Duration::ZERO => Some(left),
                _ => {
                    s.status = LpStatus::TimeLimit;
                    return s;
                }
            },
            None => None,
        };
        let mut opts = SolveOptions::default();
        opts.time_limit = time_limit;
        s.absorb(prob.solve_with(opts));
        s
    }

    fn absorb(&mut self, outcome: Result<SolveOutcome, microlp::Error>) {
        match outcome {
            Ok(SolveOutcome::Solution(sol)) => {
                self.iterations = sol.stats().lp_iterations as usize;
                self.status = LpStatus::Optimal;
                self.solution = Some(sol);
            }
            Ok(SolveOutcome::Interrupted(_)) => {
                self.status = LpStatus::TimeLimit;
                self.solution = None;
            }
            Err(e) => {
                self.status = map_err(&e);
                self.solution = None;
            }
        }
    }

    pub fn status(&self) -> LpStatus {
        self.status
    }

    pub fn objective(&self) -> T {
        T::lit(self.solution.as_ref().map_or(f64::NAN, |s| s.objective() + self.offset))
    }

    pub fn values(&self) -> Vec<T> {
        match &self.solution {
            Some(s) => self.vars.iter().map(|v| T::lit(s.var_value_raw(*v))).collect(),
            None => Vec::new(),
        }
    }

    /// Measured microlp footprint is a few hundred bytes per row and column.
    pub fn approx_bytes(&self) -> usize {
        400 * self.size
    }

    /// Fixes columns one at a time, re-optimizing from the previous basis.
    pub fn fix_many(&mut self, fixes: &[(usize, T)]) -> LpStatus {
        for &(j, v) in fixes {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                self.status = LpStatus::TimeLimit;
                self.solution = None;
                return self.status;
            }
            let Some(sol) = self.solution.take() else {
                return self.status;
            };
            self.absorb(sol.fix_var(self.vars[j], v.as_f64()));
            if self.status != LpStatus::Optimal {
                return self.status;
            }
        }
        self.status
    }
}
