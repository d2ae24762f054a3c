//! Sparse linear programs, an exact revised-simplex solver with bounded
//! variables, and a fixed-format MPS writer.
//!
//! Storage is a sparse triplet list: the worst-case-distribution program has
//! `2n^2 + 3n` variables for `n` pooled atoms, so dense tableaus are not an
//! option at benchmark scale.

mod mps;
mod simplex;

pub use mps::write_mps;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Objective direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Row relation against its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Termination status of [`LinearProgram::solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
struct Row<T> {
    relation: Relation,
    rhs: T,
    name: Option<String>,
}

/// A linear program over bounded variables.
///
/// Constraints are stored as `(row, col, coeff)` triplets; duplicates are
/// merged (summed) and exact zeros dropped by [`canonicalize`].
///
/// [`canonicalize`]: LinearProgram::canonicalize
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    sense: Sense,
    objective: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    var_names: Vec<Option<String>>,
    rows: Vec<Row<T>>,
    triplets: Vec<(usize, usize, T)>,
    canonical: bool,
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal values of the structural variables.
    pub x: Vec<T>,
    /// Objective value in the original sense.
    pub objective_value: T,
    /// Max violation over rows and bounds at `x`.
    pub max_primal_infeasibility: T,
    /// Simplex iterations spent.
    pub iterations: usize,
}

/// Per-row / per-variable violation report from [`LinearProgram::check_solution`].
#[derive(Debug, Clone)]
pub struct SolutionCheck<T> {
    /// Constraint violation per row (0 when satisfied).
    pub row_violation: Vec<T>,
    /// Bound violation per variable (0 when inside `[lower, upper]`).
    pub bound_violation: Vec<T>,
    pub max_violation: T,
}

impl<T: Real> SolutionCheck<T> {
    pub fn passes(&self, tol: T) -> bool {
        self.max_violation <= tol
    }
}

impl<T: Real> LinearProgram<T> {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            var_names: Vec::new(),
            rows: Vec::new(),
            triplets: Vec::new(),
            canonical: true,
        }
    }

    /// Adds a variable with objective coefficient `obj` and bounds
    /// `[lower, upper]` (infinities allowed). Returns its index.
    pub fn add_var(&mut self, obj: T, lower: T, upper: T, name: Option<&str>) -> usize {
        self.objective.push(obj);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.map(str::to_owned));
        self.objective.len() - 1
    }

    /// Adds a constraint row `sum entries (rel) rhs`. Returns its index.
    pub fn add_row(
        &mut self,
        relation: Relation,
        rhs: T,
        entries: &[(usize, T)],
        name: Option<&str>,
    ) -> usize {
        let r = self.rows.len();
        self.rows.push(Row {
            relation,
            rhs,
            name: name.map(str::to_owned),
        });
        for &(col, coeff) in entries {
            self.triplets.push((r, col, coeff));
        }
        if !entries.is_empty() {
            self.canonical = false;
        }
        r
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective_coeffs(&self) -> &[T] {
        &self.objective
    }

    pub fn bounds(&self, var: usize) -> (T, T) {
        (self.lower[var], self.upper[var])
    }

    pub fn relation(&self, row: usize) -> Relation {
        self.rows[row].relation
    }

    pub fn rhs(&self, row: usize) -> T {
        self.rows[row].rhs
    }

    pub fn var_name(&self, var: usize) -> Option<&str> {
        self.var_names[var].as_deref()
    }

    pub fn row_name(&self, row: usize) -> Option<&str> {
        self.rows[row].name.as_deref()
    }

    /// Sorts triplets by `(row, col)`, merges duplicates by summation and
    /// drops exact zeros. Also validates indices and finiteness.
    pub fn canonicalize(&mut self) -> Result<()> {
        let n = self.n_vars();
        let m = self.n_rows();
        for &(r, c, v) in &self.triplets {
            if r >= m {
                return Err(Error::Dimension {
                    context: "lp row index",
                    expected: m,
                    got: r,
                });
            }
            if c >= n {
                return Err(Error::Dimension {
                    context: "lp column index",
                    expected: n,
                    got: c,
                });
            }
            if !v.is_finite() {
                return Err(Error::invalid("lp coefficient", "non-finite entry"));
            }
        }
        for (i, &v) in self.objective.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(
                    "lp objective",
                    format!("non-finite coefficient on variable {i}"),
                ));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(Error::invalid("lp rhs", "non-finite entry"));
            }
        }
        if !self.canonical {
            self.triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(self.triplets.len());
            for &(r, c, v) in &self.triplets {
                match merged.last_mut() {
                    Some(last) if last.0 == r && last.1 == c => last.2 += v,
                    _ => merged.push((r, c, v)),
                }
            }
            merged.retain(|&(_, _, v)| v != T::zero());
            self.triplets = merged;
            self.canonical = true;
        }
        Ok(())
    }

    /// Canonical `(row, col, coeff)` list; canonicalizes first.
    pub fn canonical_triplets(&mut self) -> Result<&[(usize, usize, T)]> {
        self.canonicalize()?;
        Ok(&self.triplets)
    }

    /// Solves by revised simplex with bounded variables. `tol` is both the
    /// feasibility and the reduced-cost tolerance (default `1e-8` via
    /// [`LinearProgram::solve_default`]); `max_iters` caps pivots.
    pub fn solve(&self, tol: T, max_iters: usize) -> Result<LpSolution<T>> {
        if tol <= T::zero() {
            return Err(Error::invalid("lp tolerance", "must be > 0"));
        }
        let mut lp = self.clone();
        lp.canonicalize()?;
        simplex::solve(&lp, tol, max_iters)
    }

    /// [`solve`](Self::solve) with tol `1e-8` and `10^6` iterations.
    pub fn solve_default(&self) -> Result<LpSolution<T>> {
        self.solve(T::of(1e-8), 1_000_000)
    }

    /// Evaluates `x` against every row and bound.
    pub fn check_solution(&self, x: &[T], _tol: T) -> Result<SolutionCheck<T>> {
        if x.len() != self.n_vars() {
            return Err(Error::Dimension {
                context: "check_solution",
                expected: self.n_vars(),
                got: x.len(),
            });
        }
        let mut lp = self.clone();
        lp.canonicalize()?;
        let mut activity = vec![T::zero(); lp.n_rows()];
        for &(r, c, v) in &lp.triplets {
            activity[r] += v * x[c];
        }
        let mut row_violation = Vec::with_capacity(lp.n_rows());
        for (i, row) in lp.rows.iter().enumerate() {
            let a = activity[i];
            let viol = match row.relation {
                Relation::Le => (a - row.rhs).max(T::zero()),
                Relation::Ge => (row.rhs - a).max(T::zero()),
                Relation::Eq => (a - row.rhs).abs(),
            };
            row_violation.push(viol);
        }
        let mut bound_violation = Vec::with_capacity(lp.n_vars());
        for (i, &xi) in x.iter().enumerate() {
            let below = (lp.lower[i] - xi).max(T::zero());
            let above = (xi - lp.upper[i]).max(T::zero());
            bound_violation.push(below.max(above));
        }
        let max_violation = row_violation
            .iter()
            .chain(bound_violation.iter())
            .copied()
            .fold(T::zero(), T::max);
        Ok(SolutionCheck {
            row_violation,
            bound_violation,
            max_violation,
        })
    }

    /// Objective value of `x` in the original sense.
    pub fn objective_at(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&c, &xi)| acc + c * xi)
    }

    pub(crate) fn triplets_raw(&self) -> &[(usize, usize, T)] {
        &self.triplets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const INF: f64 = f64::INFINITY;

    fn trivial_max() -> LinearProgram<f64> {
        // maximize x s.t. x <= 1, x >= 0
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, INF, Some("x"));
        lp.add_row(Relation::Le, 1.0, &[(x, 1.0)], None);
        lp
    }

    #[test]
    fn trivial_max_is_one() {
        let sol = trivial_max().solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_is_reported() {
        // maximize x s.t. x >= 2, x <= 1
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, INF, None);
        lp.add_row(Relation::Ge, 2.0, &[(x, 1.0)], None);
        lp.add_row(Relation::Le, 1.0, &[(x, 1.0)], None);
        let sol = lp.solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        lp.add_var(1.0, 0.0, INF, None);
        let sol = lp.solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    /// Brute-force oracle for the 2x2 transportation polytope: vertices are
    /// parameterized by gamma_00 in [max(0, s0 - d1), min(s0, d0)].
    fn transport_2x2_oracle(s: [f64; 2], d: [f64; 2], cost: [[f64; 2]; 2]) -> f64 {
        let lo = (s[0] - d[1]).max(0.0);
        let hi = s[0].min(d[0]);
        let eval = |g00: f64| {
            let g01 = s[0] - g00;
            let g10 = d[0] - g00;
            let g11 = s[1] - g10;
            cost[0][0] * g00 + cost[0][1] * g01 + cost[1][0] * g10 + cost[1][1] * g11
        };
        eval(lo).min(eval(hi))
    }

    fn transport_lp(s: [f64; 2], d: [f64; 2], cost: [[f64; 2]; 2]) -> LinearProgram<f64> {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut vars = [[0usize; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                vars[i][j] = lp.add_var(cost[i][j], 0.0, INF, None);
            }
        }
        for i in 0..2 {
            lp.add_row(
                Relation::Eq,
                s[i],
                &[(vars[i][0], 1.0), (vars[i][1], 1.0)],
                None,
            );
        }
        for j in 0..2 {
            lp.add_row(
                Relation::Eq,
                d[j],
                &[(vars[0][j], 1.0), (vars[1][j], 1.0)],
                None,
            );
        }
        lp
    }

    #[test]
    fn transportation_2x2_matches_enumeration() {
        // The spec's toy instance: supplies (1/2, 1/2), demands (1/2, 1/2),
        // costs [[0,1],[1,0]] -> optimum 0 (identity coupling).
        let s = [0.5, 0.5];
        let d = [0.5, 0.5];
        let cost = [[0.0, 1.0], [1.0, 0.0]];
        let sol = transport_lp(s, d, cost).solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 0.0, epsilon = 1e-9);
        assert_relative_eq!(
            sol.objective_value,
            transport_2x2_oracle(s, d, cost),
            epsilon = 1e-9
        );
    }

    #[test]
    fn transportation_random_matches_enumeration() {
        use rand::Rng;
        let mut rng = crate::rng::substream(11, 0, crate::rng::StreamRole::Adhoc);
        for _ in 0..50 {
            let a: f64 = rng.random::<f64>();
            let s = [a, 1.0 - a];
            let b: f64 = rng.random::<f64>();
            let d = [b, 1.0 - b];
            let cost = [
                [rng.random::<f64>(), rng.random::<f64>()],
                [rng.random::<f64>(), rng.random::<f64>()],
            ];
            let sol = transport_lp(s, d, cost).solve_default().unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert_relative_eq!(
                sol.objective_value,
                transport_2x2_oracle(s, d, cost),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn bounded_variables_and_negative_costs() {
        // minimize -x - 2y s.t. x + y <= 3, x in [0,2], y in [-1, 2]
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(-1.0, 0.0, 2.0, None);
        let y = lp.add_var(-2.0, -1.0, 2.0, None);
        lp.add_row(Relation::Le, 3.0, &[(x, 1.0), (y, 1.0)], None);
        let sol = lp.solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(sol.objective_value, -5.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_with_free_variable() {
        // minimize x s.t. x + y = 2, y <= 1, x free
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(1.0, -INF, INF, None);
        let y = lp.add_var(0.0, -INF, 1.0, None);
        lp.add_row(Relation::Eq, 2.0, &[(x, 1.0), (y, 1.0)], None);
        let sol = lp.solve_default().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_triplets_are_merged() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, INF, None);
        // 0.5x + 0.5x <= 1 should canonicalize to a single (0,0,1.0) entry
        lp.add_row(Relation::Le, 1.0, &[(x, 0.5), (x, 0.5)], None);
        let trips = lp.canonical_triplets().unwrap().to_vec();
        assert_eq!(trips, vec![(0, 0, 1.0)]);
        let sol = lp.solve_default().unwrap();
        assert_relative_eq!(sol.objective_value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn check_solution_reports_violations() {
        let lp = trivial_max();
        let ok = lp.check_solution(&[1.0], 1e-9).unwrap();
        assert_eq!(ok.max_violation, 0.0);
        let bad = lp.check_solution(&[2.0], 1e-9).unwrap();
        assert_relative_eq!(bad.row_violation[0], 1.0, epsilon = 1e-12);
        let neg = lp.check_solution(&[-0.5], 1e-9).unwrap();
        assert_relative_eq!(neg.bound_violation[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn check_solution_rejects_wrong_length() {
        let lp = trivial_max();
        assert!(lp.check_solution(&[1.0, 2.0], 1e-9).is_err());
    }

    #[test]
    fn solve_is_deterministic() {
        let lp = transport_lp([0.3, 0.7], [0.6, 0.4], [[0.2, 1.7], [0.9, 0.1]]);
        let a = lp.solve_default().unwrap();
        let b = lp.solve_default().unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective_value, b.objective_value);
    }

    #[test]
    fn optimal_solutions_pass_check() {
        let lp = transport_lp([0.3, 0.7], [0.6, 0.4], [[0.2, 1.7], [0.9, 0.1]]);
        let sol = lp.solve_default().unwrap();
        let check = lp.check_solution(&sol.x, 1e-8).unwrap();
        assert!(check.passes(1e-8), "max violation {}", check.max_violation);
        assert!(sol.max_primal_infeasibility <= 1e-8);
    }
}
