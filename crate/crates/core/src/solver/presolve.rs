//! Bound propagation, then removal of fixed columns and redundant rows.

use crate::milp::{MilpModel, Sense};
use crate::num::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow<T> {
    pub terms: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// A maximization problem over bounded columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem<T> {
    pub obj: Vec<T>,
    pub lb: Vec<T>,
    pub ub: Vec<T>,
    pub integer: Vec<bool>,
    pub rows: Vec<LpRow<T>>,
    pub obj_offset: T,
}

impl<T: Scalar> LpProblem<T> {
    pub fn from_model(m: &MilpModel<T>, relax: bool) -> Self {
        Self {
            obj: m.columns.iter().map(|c| c.obj).collect(),
            lb: m.columns.iter().map(|c| c.lb).collect(),
            ub: m.columns.iter().map(|c| c.ub).collect(),
            integer: m.columns.iter().map(|c| c.integer && !relax).collect(),
            rows: m.rows.iter().map(|r| LpRow { terms: r.terms.clone(), sense: r.sense, rhs: r.rhs }).collect(),
            obj_offset: T::zero(),
        }
    }

    pub fn cols(&self) -> usize {
        self.obj.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.obj_offset + self.obj.iter().zip(x).map(|(c, v)| *c * *v).sum::<T>()
    }
}

#[derive(Clone, Debug)]
pub struct Presolved<T> {
    pub problem: LpProblem<T>,
    /// Original column of each reduced column.
    pub kept: Vec<usize>,
    /// Values of removed columns, indexed by original column.
    pub fixed: Vec<Option<T>>,
    pub passes: usize,
}

impl<T: Scalar> Presolved<T> {
    /// Full original-space vector from reduced values.
    pub fn expand(&self, reduced: &[T]) -> Vec<T> {
        let mut x: Vec<T> = self.fixed.iter().map(|v| v.unwrap_or(T::zero())).collect();
        for (r, &j) in self.kept.iter().enumerate() {
            x[j] = reduced[r];
        }
        x
    }

    pub fn reduce(&self, full: &[T]) -> Vec<T> {
        self.kept.iter().map(|&j| full[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresolveInfeasible;

/// Minimum and maximum activity of a row, skipping column `skip`.
fn activity<T: Scalar>(row: &LpRow<T>, lb: &[T], ub: &[T], skip: Option<usize>) -> (T, T) {
    let (mut lo, mut hi) = (T::zero(), T::zero());
    for &(j, a) in &row.terms {
        if Some(j) == skip {
            continue;
        }
        if a > T::zero() {
            lo = lo + a * lb[j];
            hi = hi + a * ub[j];
        } else {
            lo = lo + a * ub[j];
            hi = hi + a * lb[j];
        }
    }
    (lo, hi)
}

const MAX_PASSES: usize = 64;

/// Tightens integer column bounds from row activities until nothing changes.
/// A continuous column changes only when its implied range collapses onto
/// one of its bounds, and is then fixed there.
pub fn propagate_bounds<T: Scalar>(p: &mut LpProblem<T>) -> Result<usize, PresolveInfeasible> {
    let tol = T::feas_tol();
    let round_tol = T::lit(1e-6);
    let snap = tol * T::lit(1e-3);
    // Columns appearing in each row, for scheduling rows whose columns changed.
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); p.cols()];
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, _) in &row.terms {
            rows_of[j].push(i);
        }
    }
    let mut dirty = vec![true; p.rows.len()];
    let mut passes = 0;
    loop {
        passes += 1;
        let mut next = vec![false; p.rows.len()];
        let mut changed = false;
        for i in 0..p.rows.len() {
            if !dirty[i] {
                continue;
            }
            let row = &p.rows[i];
            let (lo, hi) = activity(row, &p.lb, &p.ub, None);
            let (check_le, check_ge) = match row.sense {
                Sense::Le => (true, false),
                Sense::Ge => (false, true),
                Sense::Eq => (true, true),
            };
            if (check_le && lo > row.rhs + tol) || (check_ge && hi < row.rhs - tol) {
                return Err(PresolveInfeasible);
            }
            let mut updates = Vec::new();
            for &(j, a) in &row.terms {
                if p.lb[j] == p.ub[j] {
                    continue;
                }
                // Activity of the other terms, recovered by removing j's share.
                let (own_lo, own_hi) = if a > T::zero() { (a * p.lb[j], a * p.ub[j]) } else { (a * p.ub[j], a * p.lb[j]) };
                let (rest_lo, rest_hi) = (lo - own_lo, hi - own_hi);
                let (mut nlb, mut nub) = (p.lb[j], p.ub[j]);
                if check_le {
                    let bound = (row.rhs - rest_lo) / a;
                    if a > T::zero() {
                        nub = nub.min(bound);
                    } else {
                        nlb = nlb.max(bound);
                    }
                }
                if check_ge {
                    let bound = (row.rhs - rest_hi) / a;
                    if a > T::zero() {
                        nlb = nlb.max(bound);
                    } else {
                        nub = nub.min(bound);
                    }
                }
                let (nlb, nub) = if p.integer[j] {
                    ((nlb - round_tol).ceil(), (nub + round_tol).floor())
                } else if nub <= p.lb[j] + snap {
                    (p.lb[j], p.lb[j])
                } else if nlb >= p.ub[j] - snap {
                    (p.ub[j], p.ub[j])
                } else {
                    continue;
                };
                if nlb > nub + tol {
                    return Err(PresolveInfeasible);
                }
                if nlb > p.lb[j] || nub < p.ub[j] {
                    updates.push((j, nlb.max(p.lb[j]), nub.min(p.ub[j]).max(nlb.max(p.lb[j]))));
                }
            }
            for (j, nlb, nub) in updates {
                p.lb[j] = nlb;
                p.ub[j] = nub;
                changed = true;
                for &r in &rows_of[j] {
                    next[r] = true;
                }
            }
        }
        if !changed || passes >= MAX_PASSES {
            return Ok(passes);
        }
        dirty = next;
    }
}

/// Propagates bounds, substitutes fixed columns, drops empty and redundant
/// rows, and sets columns left in no row to their best bound.
pub fn presolve<T: Scalar>(mut p: LpProblem<T>) -> Result<Presolved<T>, PresolveInfeasible> {
    let tol = T::feas_tol();
    let passes = propagate_bounds(&mut p)?;
    let n = p.cols();
    let mut fixed: Vec<Option<T>> = vec![None; n];
    for j in 0..n {
        if p.lb[j] > p.ub[j] + tol {
            return Err(PresolveInfeasible);
        }
        if p.lb[j] == p.ub[j] {
            fixed[j] = Some(p.lb[j]);
        }
    }
    let mut offset = p.obj_offset;
    for j in 0..n {
        if let Some(v) = fixed[j] {
            offset = offset + p.obj[j] * v;
        }
    }
    let mut rows = Vec::new();
    let mut used = vec![false; n];
    for row in &p.rows {
        let mut rhs = row.rhs;
        let mut terms = Vec::new();
        for &(j, a) in &row.terms {
            match fixed[j] {
                Some(v) => rhs = rhs - a * v,
                None if a != T::zero() => terms.push((j, a)),
                None => {}
            }
        }
        let reduced = LpRow { terms, sense: row.sense, rhs };
        let (lo, hi) = activity(&reduced, &p.lb, &p.ub, None);
        let redundant = match row.sense {
            Sense::Le => {
                if lo > rhs + tol {
                    return Err(PresolveInfeasible);
                }
                hi <= rhs
            }
            Sense::Ge => {
                if hi < rhs - tol {
                    return Err(PresolveInfeasible);
                }
                lo >= rhs
            }
            Sense::Eq => {
                if lo > rhs + tol || hi < rhs - tol {
                    return Err(PresolveInfeasible);
                }
                reduced.terms.is_empty()
            }
        };
        if !redundant {
            for &(j, _) in &reduced.terms {
                used[j] = true;
            }
            rows.push(reduced);
        }
    }
    for j in 0..n {
        if fixed[j].is_none() && !used[j] {
            let v = if p.obj[j] > T::zero() { p.ub[j] } else { p.lb[j] };
            fixed[j] = Some(v);
            offset = offset + p.obj[j] * v;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut new_id = vec![usize::MAX; n];
    for (r, &j) in kept.iter().enumerate() {
        new_id[j] = r;
    }
    for row in rows.iter_mut() {
        for t in row.terms.iter_mut() {
            t.0 = new_id[t.0];
        }
    }
    let problem = LpProblem {
        obj: kept.iter().map(|&j| p.obj[j]).collect(),
        lb: kept.iter().map(|&j| p.lb[j]).collect(),
        ub: kept.iter().map(|&j| p.ub[j]).collect(),
        integer: kept.iter().map(|&j| p.integer[j]).collect(),
        rows,
        obj_offset: offset,
    };
    Ok(Presolved { problem, kept, fixed, passes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: Vec<f64>, bounds: Vec<(f64, f64)>, integer: bool, rows: Vec<(Vec<(usize, f64)>, Sense, f64)>) -> LpProblem<f64> {
        LpProblem {
            integer: vec![integer; obj.len()],
            obj,
            lb: bounds.iter().map(|b| b.0).collect(),
            ub: bounds.iter().map(|b| b.1).collect(),
            rows: rows.into_iter().map(|(terms, sense, rhs)| LpRow { terms, sense, rhs }).collect(),
            obj_offset: 0.0,
        }
    }

    #[test]
    fn chain_of_implications_fixes_binaries() {
        // x0 fixed 0; x1 <= x0; x2 <= x1.
        let p = lp(
            vec![1.0, 1.0, 1.0],
            vec![(0.0, 0.0), (0.0, 1.0), (0.0, 1.0)],
            true,
            vec![
                (vec![(1, 1.0), (0, -1.0)], Sense::Le, 0.0),
                (vec![(2, 1.0), (1, -1.0)], Sense::Le, 0.0),
            ],
        );
        let pre = presolve(p).unwrap();
        assert_eq!(pre.problem.cols(), 0);
        assert_eq!(pre.expand(&[]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn infeasible_bounds_detected() {
        let p = lp(vec![1.0], vec![(0.0, 1.0)], false, vec![
            (vec![(0, 1.0)], Sense::Ge, 2.0),
        ]);
        assert_eq!(presolve(p).unwrap_err(), PresolveInfeasible);
    }

    #[test]
    fn continuous_column_fixed_when_range_collapses() {
        // y <= x with x fixed 0 forces y = 0; z <= 2 leaves z's [0, 10] alone.
        let p = lp(vec![1.0, 1.0, 1.0], vec![(0.0, 0.0), (0.0, 10.0), (0.0, 10.0)], false, vec![
            (vec![(1, 1.0), (0, -1.0)], Sense::Le, 0.0),
            (vec![(2, 1.0), (1, 1.0)], Sense::Le, 2.0),
        ]);
        let pre = presolve(p).unwrap();
        assert_eq!(pre.kept, vec![2]);
        assert_eq!(pre.fixed[1], Some(0.0));
        assert_eq!((pre.problem.lb[0], pre.problem.ub[0]), (0.0, 10.0));
    }

    #[test]
    fn continuous_bounds_untouched_and_row_kept() {
        let p = lp(vec![1.0, 1.0], vec![(0.0, 10.0), (0.0, 10.0)], false, vec![
            (vec![(0, 1.0), (1, 1.0)], Sense::Le, 4.0),
        ]);
        let pre = presolve(p).unwrap();
        assert_eq!(pre.problem.ub, vec![10.0, 10.0]);
        assert_eq!(pre.problem.rows.len(), 1);
    }

    #[test]
    fn equality_with_fixed_terms_forces_binary() {
        // x0 + x1 = 1 with x0 fixed to 0 -> x1 = 1.
        let p = lp(vec![0.0, 2.0], vec![(0.0, 0.0), (0.0, 1.0)], true, vec![
            (vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0),
        ]);
        let pre = presolve(p).unwrap();
        assert_eq!(pre.expand(&[]), vec![0.0, 1.0]);
        assert_eq!(pre.problem.obj_offset, 2.0);
    }
}
