//! Dense-tableau bounded-variable simplex.
//!
//! Rows become equalities through one slack per row (`a x + s = b`), with the
//! slack's bounds encoding the sense. The starting basis is the slack basis;
//! rows whose slack would start outside its bounds get an artificial column
//! and phase 1 drives those to zero. Pricing is Dantzig's rule, switching to
//! Bland's rule after a run of degenerate pivots. After bound changes the
//! basis stays dual feasible and is repaired with the dual simplex.

use std::cmp::Ordering;
use std::time::Instant;

use serde::Serialize;

use super::presolve::LpProblem;
use crate::milp::Sense;
use crate::num::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericallyUnstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column held at zero.
    Zero,
}

const DEGENERATE_SWITCH: usize = 1000;
const REINVERT_EVERY: usize = 100;
const MAX_RESTARTS: usize = 2;

#[derive(Clone, Debug)]
pub struct DenseSimplex<T> {
    m: usize,
    n: usize,
    ncols: usize,
    /// Original `[A | I | Art]`, row-major.
    orig: Vec<T>,
    rhs: Vec<T>,
    /// Current `B^-1 [A | I | Art]`.
    tab: Vec<T>,
    lb: Vec<T>,
    ub: Vec<T>,
    cost: Vec<T>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<T>,
    d: Vec<T>,
    art_start: usize,
    phase_one: bool,
    bland: bool,
    degenerate_run: usize,
    since_reinvert: usize,
    restarts: usize,
    pub iterations: usize,
    status: LpStatus,
    deadline: Option<Instant>,
    problem: LpProblem<T>,
}

impl<T: Scalar> DenseSimplex<T> {
    /// Builds the tableau and solves.
    pub fn new(problem: &LpProblem<T>, deadline: Option<Instant>) -> Self {
        let mut s = Self::setup(problem.clone(), deadline);
        s.solve_from_scratch();
        s
    }

    fn setup(problem: LpProblem<T>, deadline: Option<Instant>) -> Self {
        let m = problem.rows.len();
        let n = problem.cols();
        let inf = T::infinity();
        let mut lb = problem.lb.clone();
        let mut ub = problem.ub.clone();
        let mut state = Vec::with_capacity(n + m);
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            let (st, v) = if lb[j].is_finite() {
                (VarState::Lower, lb[j])
            } else if ub[j].is_finite() {
                (VarState::Upper, ub[j])
            } else {
                (VarState::Zero, T::zero())
            };
            state.push(st);
            x.push(v);
        }
        // Slack bounds from the row sense.
        for row in &problem.rows {
            let (sl, su) = match row.sense {
                Sense::Le => (T::zero(), inf),
                Sense::Ge => (-inf, T::zero()),
                Sense::Eq => (T::zero(), T::zero()),
            };
            lb.push(sl);
            ub.push(su);
        }
        let tol = T::feas_tol();
        let mut arts = Vec::new();
        let mut basis = vec![0; m];
        let mut basic_coef = vec![T::one(); m];
        let mut slack_vals = Vec::with_capacity(m);
        for (i, row) in problem.rows.iter().enumerate() {
            let act: T = row.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let r = row.rhs - act;
            let (sl, su) = (lb[n + i], ub[n + i]);
            if r >= sl - tol && r <= su + tol {
                slack_vals.push((VarState::Basic, r));
                basis[i] = n + i;
            } else {
                let bound = if r < sl { sl } else { su };
                let st = if r < sl { VarState::Lower } else { VarState::Upper };
                slack_vals.push((st, bound));
                let sigma = if r - bound > T::zero() { T::one() } else { -T::one() };
                arts.push((i, sigma, (r - bound).abs()));
                basic_coef[i] = sigma;
            }
        }
        for (st, v) in &slack_vals {
            state.push(*st);
            x.push(*v);
        }
        let art_start = n + m;
        let ncols = art_start + arts.len();
        let mut orig = vec![T::zero(); m * ncols];
        for (i, row) in problem.rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                orig[i * ncols + j] = orig[i * ncols + j] + a;
            }
            orig[i * ncols + n + i] = T::one();
        }
        for (k, &(i, sigma, v)) in arts.iter().enumerate() {
            orig[i * ncols + art_start + k] = sigma;
            basis[i] = art_start + k;
            lb.push(T::zero());
            ub.push(inf);
            state.push(VarState::Basic);
            x.push(v);
        }
        let mut tab = orig.clone();
        for i in 0..m {
            if basic_coef[i] != T::one() {
                let c = basic_coef[i];
                for v in &mut tab[i * ncols..(i + 1) * ncols] {
                    *v = *v / c;
                }
            }
        }
        let mut cost = problem.obj.clone();
        cost.resize(ncols, T::zero());
        let rhs = problem.rows.iter().map(|r| r.rhs).collect();
        Self {
            m,
            n,
            ncols,
            orig,
            rhs,
            tab,
            lb,
            ub,
            cost,
            basis,
            state,
            x,
            d: vec![T::zero(); ncols],
            art_start,
            phase_one: !arts.is_empty(),
            bland: false,
            degenerate_run: 0,
            since_reinvert: 0,
            restarts: 0,
            iterations: 0,
            status: LpStatus::IterationLimit,
            deadline,
            problem,
        }
    }

    pub fn status(&self) -> LpStatus {
        self.status
    }

    pub fn approx_bytes(&self) -> usize {
        (2 * self.m * self.ncols + 6 * self.ncols) * std::mem::size_of::<T>()
    }

    pub fn values(&self) -> Vec<T> {
        self.x[..self.n].to_vec()
    }

    pub fn objective(&self) -> T {
        self.problem.objective(&self.x[..self.n])
    }

    fn phase_cost(&self, j: usize) -> T {
        if self.phase_one {
            if j >= self.art_start {
                -T::one()
            } else {
                T::zero()
            }
        } else {
            self.cost[j]
        }
    }

    fn compute_duals(&mut self) {
        let nc = self.ncols;
        for j in 0..nc {
            self.d[j] = self.phase_cost(j);
        }
        for i in 0..self.m {
            let cb = self.phase_cost(self.basis[i]);
            if cb != T::zero() {
                let row = &self.tab[i * nc..(i + 1) * nc];
                for (dj, &t) in self.d.iter_mut().zip(row) {
                    *dj = *dj - cb * t;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = T::zero();
        }
    }

    fn solve_from_scratch(&mut self) {
        loop {
            self.status = self.two_phase();
            if self.status != LpStatus::NumericallyUnstable || self.restarts >= MAX_RESTARTS {
                return;
            }
            self.restarts += 1;
            log::debug!("simplex restart {} after numerical trouble", self.restarts);
            let restarts = self.restarts;
            let iterations = self.iterations;
            let mut problem = self.problem.clone();
            problem.lb = self.lb[..self.n].to_vec();
            problem.ub = self.ub[..self.n].to_vec();
            *self = Self::setup(problem, self.deadline);
            self.restarts = restarts;
            self.iterations = iterations;
        }
    }

    fn two_phase(&mut self) -> LpStatus {
        if self.phase_one {
            self.compute_duals();
            match self.primal() {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => return LpStatus::NumericallyUnstable,
                other => return other,
            }
            let infeas: T = (self.art_start..self.ncols).map(|j| self.x[j].abs()).sum();
            if infeas > T::feas_tol() * T::lit(self.m.max(1) as f64) {
                return LpStatus::Infeasible;
            }
            self.phase_one = false;
            for j in self.art_start..self.ncols {
                self.ub[j] = T::zero();
                if self.state[j] != VarState::Basic {
                    self.state[j] = VarState::Lower;
                    self.x[j] = T::zero();
                }
            }
            self.drive_out_artificials();
        }
        self.compute_duals();
        self.bland = false;
        self.degenerate_run = 0;
        let st = self.primal();
        if st == LpStatus::Optimal {
            self.finish()
        } else {
            st
        }
    }

    /// Pivots basic artificials out where a structural or slack column allows it.
    fn drive_out_artificials(&mut self) {
        let nc = self.ncols;
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let row = &self.tab[r * nc..(r + 1) * nc];
            let q = (0..self.art_start)
                .filter(|&j| self.state[j] != VarState::Basic)
                .max_by(|&a, &b| row[a].abs().partial_cmp(&row[b].abs()).unwrap_or(Ordering::Equal).then(b.cmp(&a)));
            if let Some(q) = q {
                if row[q].abs() > T::pivot_tol() {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.state[leaving] = VarState::Lower;
                    self.x[leaving] = T::zero();
                }
            }
        }
    }

    fn deadline_hit(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn iteration_cap(&self) -> usize {
        50 * (self.m + self.ncols) + 10_000
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self) -> Option<(usize, T)> {
        let tol = T::feas_tol();
        let mut best: Option<(usize, T)> = None;
        for j in 0..self.ncols {
            let dj = self.d[j];
            let dir = match self.state[j] {
                VarState::Basic => continue,
                VarState::Lower if dj > tol && self.ub[j] > self.lb[j] => T::one(),
                VarState::Upper if dj < -tol && self.ub[j] > self.lb[j] => -T::one(),
                VarState::Zero if dj.abs() > tol => dj.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(b, _)| dj.abs() > self.d[b].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn primal(&mut self) -> LpStatus {
        let nc = self.ncols;
        let ptol = T::pivot_tol();
        loop {
            if self.iterations >= self.iteration_cap() {
                return LpStatus::IterationLimit;
            }
            if self.iterations % 64 == 0 && self.deadline_hit() {
                return LpStatus::TimeLimit;
            }
            if self.since_reinvert >= REINVERT_EVERY && !self.reinvert() {
                return LpStatus::NumericallyUnstable;
            }
            let Some((q, dir)) = self.price() else {
                return LpStatus::Optimal;
            };
            // Largest step before a basic column or the entering column hits a bound.
            let mut step = self.ub[q] - self.lb[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = T::zero();
            for i in 0..self.m {
                let alpha = self.tab[i * nc + q];
                if alpha.abs() <= ptol {
                    continue;
                }
                let b = self.basis[i];
                let rate = -dir * alpha;
                let (limit, to_upper) = if rate < T::zero() {
                    if !self.lb[b].is_finite() {
                        continue;
                    }
                    (((self.x[b] - self.lb[b]) / -rate).max(T::zero()), false)
                } else {
                    if !self.ub[b].is_finite() {
                        continue;
                    }
                    (((self.ub[b] - self.x[b]) / rate).max(T::zero()), true)
                };
                let better = match leave {
                    _ if limit < step - T::feas_tol() * T::lit(1e-3) => true,
                    Some((li, _)) if limit <= step + T::feas_tol() * T::lit(1e-3) => {
                        if self.bland {
                            b < self.basis[li]
                        } else {
                            alpha.abs() > leave_alpha.abs()
                        }
                    }
                    _ => false,
                };
                if better {
                    step = limit;
                    leave = Some((i, to_upper));
                    leave_alpha = alpha;
                }
            }
            if !step.is_finite() {
                return LpStatus::Unbounded;
            }
            self.iterations += 1;
            if step <= T::feas_tol() * T::lit(1e-3) {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_SWITCH && !self.bland {
                    log::debug!("switching to Bland's rule after {} degenerate pivots", self.degenerate_run);
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            let delta = dir * step;
            self.shift(q, delta);
            match leave {
                None => {
                    self.state[q] = if dir > T::zero() { VarState::Upper } else { VarState::Lower };
                    self.x[q] = if dir > T::zero() { self.ub[q] } else { self.lb[q] };
                }
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.settle(leaving, to_upper);
                }
            }
        }
    }

    /// Moves nonbasic `q` by `delta`, updating basic values.
    fn shift(&mut self, q: usize, delta: T) {
        let nc = self.ncols;
        self.x[q] = self.x[q] + delta;
        for i in 0..self.m {
            let alpha = self.tab[i * nc + q];
            if alpha != T::zero() {
                let b = self.basis[i];
                self.x[b] = self.x[b] - alpha * delta;
            }
        }
    }

    fn settle(&mut self, leaving: usize, to_upper: bool) {
        if to_upper {
            self.state[leaving] = VarState::Upper;
            self.x[leaving] = self.ub[leaving];
        } else {
            self.state[leaving] = VarState::Lower;
            self.x[leaving] = self.lb[leaving];
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.tab[r * nc + q];
        for v in &mut self.tab[r * nc..(r + 1) * nc] {
            *v = *v / piv;
        }
        let (before, rest) = self.tab.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for row in before.chunks_mut(nc).chain(after.chunks_mut(nc)) {
            let f = row[q];
            if f != T::zero() {
                for (v, &p) in row.iter_mut().zip(prow.iter()) {
                    *v = *v - f * p;
                }
                row[q] = T::zero();
            }
        }
        let dq = self.d[q];
        if dq != T::zero() {
            for (dj, &p) in self.d.iter_mut().zip(prow.iter()) {
                *dj = *dj - dq * p;
            }
        }
        self.d[q] = T::zero();
        self.basis[r] = q;
        self.state[q] = VarState::Basic;
        self.since_reinvert += 1;
    }

    /// Recomputes the tableau, basic values and reduced costs from the original data.
    fn reinvert(&mut self) -> bool {
        let (m, nc) = (self.m, self.ncols);
        let mut t = self.orig.clone();
        let mut beta = self.rhs.clone();
        let mut row_of = vec![usize::MAX; m];
        let mut assigned = vec![false; m];
        for &col in &self.basis {
            let p = (0..m)
                .filter(|&i| !assigned[i])
                .max_by(|&a, &b| t[a * nc + col].abs().partial_cmp(&t[b * nc + col].abs()).unwrap_or(Ordering::Equal).then(b.cmp(&a)));
            let Some(p) = p else { return false };
            let piv = t[p * nc + col];
            if piv.abs() <= T::pivot_tol() {
                return false;
            }
            assigned[p] = true;
            row_of[p] = col;
            for v in &mut t[p * nc..(p + 1) * nc] {
                *v = *v / piv;
            }
            beta[p] = beta[p] / piv;
            let prow: Vec<T> = t[p * nc..(p + 1) * nc].to_vec();
            for i in 0..m {
                if i == p {
                    continue;
                }
                let f = t[i * nc + col];
                if f != T::zero() {
                    for (v, &pv) in t[i * nc..(i + 1) * nc].iter_mut().zip(&prow) {
                        *v = *v - f * pv;
                    }
                    t[i * nc + col] = T::zero();
                    beta[i] = beta[i] - f * beta[p];
                }
            }
        }
        self.tab = t;
        self.basis = row_of;
        for i in 0..m {
            let mut v = beta[i];
            let row = &self.tab[i * nc..(i + 1) * nc];
            for j in 0..nc {
                if self.state[j] != VarState::Basic && row[j] != T::zero() {
                    v = v - row[j] * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
        }
        self.compute_duals();
        self.since_reinvert = 0;
        true
    }

    fn max_primal_infeasibility(&self) -> T {
        (0..self.ncols)
            .filter(|&j| self.state[j] == VarState::Basic)
            .map(|j| (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(T::zero()))
            .fold(T::zero(), T::max)
    }

    /// Largest row residual `|A x + s - b|` against the original data.
    fn residual(&self) -> T {
        let nc = self.ncols;
        (0..self.m)
            .map(|i| {
                let row = &self.orig[i * nc..(i + 1) * nc];
                let act: T = row.iter().zip(&self.x).filter(|(a, _)| **a != T::zero()).map(|(a, v)| *a * *v).sum();
                (act - self.rhs[i]).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// Accepts the basis when residuals are small, otherwise refactorizes and
    /// repairs with the dual and primal simplex.
    fn finish(&mut self) -> LpStatus {
        let tol = T::feas_tol();
        for _ in 0..3 {
            if self.residual() <= tol && self.max_primal_infeasibility() <= tol {
                return LpStatus::Optimal;
            }
            if !self.reinvert() {
                return LpStatus::NumericallyUnstable;
            }
            if self.max_primal_infeasibility() > tol {
                match self.dual() {
                    LpStatus::Optimal => {}
                    other => return other,
                }
            }
            match self.primal() {
                LpStatus::Optimal => {}
                other => return other,
            }
        }
        if self.residual() <= tol && self.max_primal_infeasibility() <= tol {
            LpStatus::Optimal
        } else {
            LpStatus::NumericallyUnstable
        }
    }

    /// Dual simplex from a dual-feasible basis.
    fn dual(&mut self) -> LpStatus {
        let nc = self.ncols;
        let tol = T::feas_tol();
        let ptol = T::pivot_tol();
        loop {
            if self.iterations >= self.iteration_cap() {
                return LpStatus::IterationLimit;
            }
            if self.iterations % 64 == 0 && self.deadline_hit() {
                return LpStatus::TimeLimit;
            }
            if self.since_reinvert >= REINVERT_EVERY && !self.reinvert() {
                return LpStatus::NumericallyUnstable;
            }
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                let b = self.basis[i];
                let gap = (self.lb[b] - self.x[b]).max(self.x[b] - self.ub[b]);
                if gap > tol && leave.is_none_or(|(_, g)| gap > g) {
                    leave = Some((i, gap));
                }
            }
            let Some((r, _)) = leave else {
                return LpStatus::Optimal;
            };
            let b = self.basis[r];
            let below = self.x[b] < self.lb[b];
            let target = if below { self.lb[b] } else { self.ub[b] };
            let row = &self.tab[r * nc..(r + 1) * nc];
            let mut best: Option<(usize, T)> = None;
            for j in 0..nc {
                let a = row[j];
                if a.abs() <= ptol {
                    continue;
                }
                // Moving j must push x_b towards the violated bound.
                let ok = match self.state[j] {
                    VarState::Basic => false,
                    VarState::Lower => self.ub[j] > self.lb[j] && (if below { a < T::zero() } else { a > T::zero() }),
                    VarState::Upper => self.ub[j] > self.lb[j] && (if below { a > T::zero() } else { a < T::zero() }),
                    VarState::Zero => true,
                };
                if !ok {
                    continue;
                }
                let ratio = (self.d[j] / a).abs();
                let better = match best {
                    None => true,
                    Some((bj, br)) => {
                        ratio < br - T::lit(1e-12) || (ratio <= br + T::lit(1e-12) && a.abs() > row[bj].abs())
                    }
                };
                if better {
                    best = Some((j, ratio));
                }
            }
            let Some((q, _)) = best else {
                return LpStatus::Infeasible;
            };
            self.iterations += 1;
            let delta = (target - self.x[b]) / -self.tab[r * nc + q];
            self.shift(q, delta);
            self.pivot(r, q);
            self.settle(b, !below);
        }
    }

    /// Tightens the bounds of structural column `j` and re-optimizes.
    pub fn set_bounds(&mut self, j: usize, lb: T, ub: T) -> LpStatus {
        self.set_bounds_many(&[(j, lb, ub)])
    }

    pub fn set_bounds_many(&mut self, changes: &[(usize, T, T)]) -> LpStatus {
        for &(j, lb, ub) in changes {
            assert!(j < self.n);
            self.lb[j] = lb;
            self.ub[j] = ub;
            let target = match self.state[j] {
                VarState::Basic => continue,
                VarState::Lower => lb,
                VarState::Upper => ub,
                VarState::Zero => T::zero().max(lb).min(ub),
            };
            let delta = target - self.x[j];
            if delta != T::zero() {
                self.shift(j, delta);
            }
            self.x[j] = target;
        }
        if self.phase_one || !matches!(self.status, LpStatus::Optimal) {
            self.restart_with_bounds();
            return self.status;
        }
        self.status = match self.dual() {
            LpStatus::Optimal => match self.primal() {
                LpStatus::Optimal => self.finish(),
                other => other,
            },
            other => other,
        };
        if matches!(self.status, LpStatus::NumericallyUnstable | LpStatus::IterationLimit) {
            self.restart_with_bounds();
        }
        self.status
    }

    fn restart_with_bounds(&mut self) {
        let iterations = self.iterations;
        let mut problem = self.problem.clone();
        problem.lb = self.lb[..self.n].to_vec();
        problem.ub = self.ub[..self.n].to_vec();
        *self = Self::setup(problem, self.deadline);
        self.iterations = iterations;
        self.solve_from_scratch();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::presolve::LpRow;

    pub(crate) fn lp(obj: &[f64], bounds: &[(f64, f64)], rows: &[(&[(usize, f64)], Sense, f64)]) -> LpProblem<f64> {
        LpProblem {
            obj: obj.to_vec(),
            lb: bounds.iter().map(|b| b.0).collect(),
            ub: bounds.iter().map(|b| b.1).collect(),
            integer: vec![false; obj.len()],
            rows: rows.iter().map(|(t, s, r)| LpRow { terms: t.to_vec(), sense: *s, rhs: *r }).collect(),
            obj_offset: 0.0,
        }
    }

    #[test]
    fn box_constrained_sum() {
        let p = lp(&[1.0, 1.0], &[(0.0, 1.0), (0.0, 1.0)], &[]);
        let s = DenseSimplex::new(&p, None);
        assert_eq!(s.status(), LpStatus::Optimal);
        assert_eq!(s.objective(), 2.0);
    }

    #[test]
    fn single_row_bound() {
        let p = lp(&[1.0], &[(0.0, 1.0)], &[(&[(0, 1.0)], Sense::Le, 0.5)]);
        let s = DenseSimplex::new(&p, None);
        assert_eq!(s.status(), LpStatus::Optimal);
        assert!((s.objective() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_infeasible() {
        let p = lp(&[1.0], &[(0.0, 10.0)], &[(&[(0, 1.0)], Sense::Ge, 2.0), (&[(0, 1.0)], Sense::Le, 1.0)]);
        assert_eq!(DenseSimplex::new(&p, None).status(), LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(&[1.0, 0.0], &[(0.0, f64::INFINITY), (0.0, 1.0)], &[(&[(0, 1.0), (1, -1.0)], Sense::Ge, 0.0)]);
        assert_eq!(DenseSimplex::new(&p, None).status(), LpStatus::Unbounded);
    }

    #[test]
    fn textbook_problem_needs_phase_one() {
        // max 3x + 2y st x + y <= 4, x + 3y >= 6, x <= 3 -> x = 3, y = 1, obj 11.
        let p = lp(
            &[3.0, 2.0],
            &[(0.0, 3.0), (0.0, 100.0)],
            &[(&[(0, 1.0), (1, 1.0)], Sense::Le, 4.0), (&[(0, 1.0), (1, 3.0)], Sense::Ge, 6.0)],
        );
        let s = DenseSimplex::new(&p, None);
        assert_eq!(s.status(), LpStatus::Optimal);
        assert!((s.objective() - 11.0).abs() < 1e-9);
    }

    #[test]
    fn equality_rows() {
        // max x + y st x - y = 1, x + y <= 3 -> x = 2, y = 1.
        let p = lp(
            &[1.0, 1.0],
            &[(0.0, 10.0), (0.0, 10.0)],
            &[(&[(0, 1.0), (1, -1.0)], Sense::Eq, 1.0), (&[(0, 1.0), (1, 1.0)], Sense::Le, 3.0)],
        );
        let s = DenseSimplex::new(&p, None);
        assert_eq!(s.values(), vec![2.0, 1.0]);
    }

    #[test]
    fn warm_bound_change_matches_cold_solve() {
        let p = lp(
            &[5.0, 4.0, 3.0],
            &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)],
            &[(&[(0, 2.0), (1, 3.0), (2, 1.0)], Sense::Le, 5.0), (&[(0, 4.0), (1, 1.0), (2, 2.0)], Sense::Le, 11.0)],
        );
        let mut warm = DenseSimplex::new(&p, None);
        warm.set_bounds(0, 0.0, 0.0);
        let mut q = p.clone();
        q.ub[0] = 0.0;
        let cold = DenseSimplex::new(&q, None);
        assert_eq!(warm.status(), LpStatus::Optimal);
        assert!((warm.objective() - cold.objective()).abs() < 1e-9);
        warm.set_bounds(1, 1.0, 1.0);
        assert!((warm.objective() - 7.0).abs() < 1e-9, "{}", warm.objective());
    }

    #[test]
    fn f32_solves_small_lp() {
        let p = LpProblem::<f32> {
            obj: vec![3.0, 2.0],
            lb: vec![0.0, 0.0],
            ub: vec![1.0, 1.0],
            integer: vec![false; 2],
            rows: vec![LpRow { terms: vec![(0, 1.0), (1, 1.0)], sense: Sense::Le, rhs: 1.5 }],
            obj_offset: 0.0,
        };
        let s = DenseSimplex::new(&p, None);
        assert_eq!(s.status(), LpStatus::Optimal);
        assert!((s.objective() - 4.0).abs() < 1e-4);
    }
}
