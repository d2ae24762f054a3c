//! Two-phase revised simplex with bounded variables.
//!
//! The basis inverse is kept explicitly (dense, row-major) and updated with
//! product-form pivots; it is rebuilt from scratch every `REFACTOR_EVERY`
//! pivots and once more before the solution is extracted. Pricing is
//! Dantzig's rule with a switch to Bland's rule after a run of
//! non-improving pivots (anti-cycling).

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{LinearProgram, LpSolution, LpStatus, Relation, Sense};

const REFACTOR_EVERY: usize = 1500;
const BLAND_AFTER_STALLED: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    FreeAtZero,
}

struct Columns<T> {
    ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> Columns<T> {
    fn col(&self, j: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.ptr[j], self.ptr[j + 1]);
        (&self.rows[a..b], &self.vals[a..b])
    }

    fn push_col(&mut self, entries: &[(usize, T)]) {
        for &(r, v) in entries {
            self.rows.push(r);
            self.vals.push(v);
        }
        self.ptr.push(self.rows.len());
    }
}

struct Simplex<T> {
    m: usize,
    n_total: usize,
    cols: Columns<T>,
    cost: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    rhs: Vec<T>,
    x: Vec<T>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Dense row-major inverse of the basis matrix.
    binv: Vec<T>,
    y: Vec<T>,
    w: Vec<T>,
    tol: T,
    bland: bool,
    stalled: usize,
    iterations: usize,
    since_refactor: usize,
}

enum Step {
    Pivoted,
    BoundFlip,
    Unbounded,
    /// Pivot element too small; caller refactorizes and retries.
    Unstable,
}

pub(super) fn solve<T: Real>(
    lp: &LinearProgram<T>,
    tol: T,
    max_iters: usize,
) -> Result<LpSolution<T>> {
    let n = lp.n_vars();
    let m = lp.n_rows();

    for j in 0..n {
        let (lo, up) = lp.bounds(j);
        if lo > up {
            return finalize(lp, vec![T::zero(); n], LpStatus::Infeasible, 0);
        }
    }

    // Internal sense: minimize.
    let flip = match lp.sense() {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };

    // Columns: structurals, then one slack per row.  Row i reads
    // a_i . x + s_i = b_i with slack bounds fixed by the relation.
    let mut cols = Columns {
        ptr: vec![0],
        rows: Vec::new(),
        vals: Vec::new(),
    };
    let mut per_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for &(r, c, v) in lp.triplets_raw() {
        per_col[c].push((r, v));
    }
    for entries in &per_col {
        cols.push_col(entries);
    }
    let mut cost: Vec<T> = lp.objective_coeffs().iter().map(|&c| c * flip).collect();
    let mut lower = Vec::with_capacity(n + m);
    let mut upper = Vec::with_capacity(n + m);
    for j in 0..n {
        let (lo, up) = lp.bounds(j);
        lower.push(lo);
        upper.push(up);
    }
    let inf = T::of(f64::INFINITY);
    for i in 0..m {
        cols.push_col(&[(i, T::one())]);
        cost.push(T::zero());
        match lp.relation(i) {
            Relation::Le => {
                lower.push(T::zero());
                upper.push(inf);
            }
            Relation::Ge => {
                lower.push(-inf);
                upper.push(T::zero());
            }
            Relation::Eq => {
                lower.push(T::zero());
                upper.push(T::zero());
            }
        }
    }
    let rhs: Vec<T> = (0..m).map(|i| lp.rhs(i)).collect();

    // Nonbasic start: every variable parked at the finite bound nearest zero.
    let mut x = vec![T::zero(); n + m];
    let mut state = vec![VarState::FreeAtZero; n + m];
    for j in 0..n + m {
        let (lo, up) = (lower[j], upper[j]);
        let (v, s) = if lo.is_finite() && up.is_finite() {
            if lo.abs() <= up.abs() {
                (lo, VarState::AtLower)
            } else {
                (up, VarState::AtUpper)
            }
        } else if lo.is_finite() {
            (lo, VarState::AtLower)
        } else if up.is_finite() {
            (up, VarState::AtUpper)
        } else {
            (T::zero(), VarState::FreeAtZero)
        };
        x[j] = v;
        state[j] = s;
    }

    // Rows whose slack can absorb the residual start with a basic slack,
    // the rest get an artificial column.
    let mut residual = rhs.clone();
    for j in 0..n {
        if x[j] != T::zero() {
            let (rr, vv) = cols.col(j);
            for (&r, &v) in rr.iter().zip(vv) {
                residual[r] -= v * x[j];
            }
        }
    }

    let mut basis = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    let mut diag_sign = Vec::with_capacity(m);
    for i in 0..m {
        let s = n + i;
        if residual[i] >= lower[s] && residual[i] <= upper[s] {
            basis.push(s);
            x[s] = residual[i];
            state[s] = VarState::Basic(i);
            diag_sign.push(T::one());
        } else {
            let short = residual[i] - x[s];
            let sign = if short >= T::zero() {
                T::one()
            } else {
                -T::one()
            };
            let a = cols.ptr.len() - 1;
            cols.push_col(&[(i, sign)]);
            cost.push(T::zero());
            lower.push(T::zero());
            upper.push(inf);
            x.push(short.abs());
            state.push(VarState::Basic(i));
            basis.push(a);
            artificials.push(a);
            diag_sign.push(sign);
        }
    }
    let n_total = cols.ptr.len() - 1;

    let mut sx = Simplex {
        m,
        n_total,
        cols,
        cost,
        lower,
        upper,
        rhs,
        x,
        state,
        basis,
        binv: {
            let mut b = vec![T::zero(); m * m];
            for i in 0..m {
                b[i * m + i] = diag_sign[i];
            }
            b
        },
        y: vec![T::zero(); m],
        w: vec![T::zero(); m],
        tol,
        bland: false,
        stalled: 0,
        iterations: 0,
        since_refactor: 0,
    };

    // Phase 1: minimize the sum of artificials.
    if !artificials.is_empty() {
        let saved = sx.cost.clone();
        sx.cost.iter_mut().for_each(|c| *c = T::zero());
        for &a in &artificials {
            sx.cost[a] = T::one();
        }
        let status = sx.run(max_iters)?;
        if status == LpStatus::IterationLimit {
            return finalize(lp, sx.structurals(n), status, sx.iterations);
        }
        let infeas = artificials
            .iter()
            .map(|&a| sx.x[a])
            .fold(T::zero(), |acc, v| acc + v);
        let scale = T::one() + sx.rhs.iter().fold(T::zero(), |acc, &b| acc.max(b.abs()));
        if infeas > tol * scale {
            return finalize(lp, sx.structurals(n), LpStatus::Infeasible, sx.iterations);
        }
        // Pin artificials to zero for phase 2.
        for &a in &artificials {
            sx.upper[a] = T::zero();
        }
        sx.cost = saved;
        sx.bland = false;
        sx.stalled = 0;
    }

    // Phase 2.
    let status = sx.run(max_iters)?;
    sx.refactorize()?;
    finalize(lp, sx.structurals(n), status, sx.iterations)
}

fn finalize<T: Real>(
    lp: &LinearProgram<T>,
    x: Vec<T>,
    status: LpStatus,
    iterations: usize,
) -> Result<LpSolution<T>> {
    let check = lp.check_solution(&x, T::one())?;
    Ok(LpSolution {
        objective_value: lp.objective_at(&x),
        max_primal_infeasibility: check.max_violation,
        status,
        x,
        iterations,
    })
}

impl<T: Real> Simplex<T> {
    fn structurals(&self, n: usize) -> Vec<T> {
        self.x[..n].to_vec()
    }

    /// Runs the current objective to optimality (or another terminal state).
    fn run(&mut self, max_iters: usize) -> Result<LpStatus> {
        let mut retried = false;
        loop {
            if self.iterations >= max_iters {
                return Ok(LpStatus::IterationLimit);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
            }
            let entering = match self.price() {
                Some(e) => e,
                None => return Ok(LpStatus::Optimal),
            };
            match self.step(entering)? {
                Step::Pivoted | Step::BoundFlip => {
                    retried = false;
                    self.iterations += 1;
                    self.since_refactor += 1;
                }
                Step::Unbounded => return Ok(LpStatus::Unbounded),
                Step::Unstable => {
                    if retried {
                        return Err(Error::numerical(
                            "simplex",
                            "pivot below tolerance after refactorization",
                        ));
                    }
                    self.refactorize()?;
                    retried = true;
                }
            }
        }
    }

    /// Picks a nonbasic column whose reduced cost improves the objective in
    /// its feasible direction. Returns `(var, increasing)`.
    fn price(&mut self) -> Option<(usize, bool)> {
        // y = c_B^T B^-1, skipping zero basic costs.
        self.y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != T::zero() {
                let row = &self.binv[i * self.m..(i + 1) * self.m];
                for (yj, &bj) in self.y.iter_mut().zip(row) {
                    *yj += cb * bj;
                }
            }
        }
        let mut best: Option<(usize, bool, T)> = None;
        for j in 0..self.n_total {
            let (incr_ok, decr_ok) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => (self.upper[j] > self.lower[j], false),
                VarState::AtUpper => (false, self.lower[j] < self.upper[j]),
                VarState::FreeAtZero => (true, true),
            };
            let (rr, vv) = self.cols.col(j);
            let mut d = self.cost[j];
            for (&r, &v) in rr.iter().zip(vv) {
                d -= self.y[r] * v;
            }
            let candidate = if incr_ok && d < -self.tol {
                Some((true, -d))
            } else if decr_ok && d > self.tol {
                Some((false, d))
            } else {
                None
            };
            if let Some((increasing, mag)) = candidate {
                if self.bland {
                    return Some((j, increasing));
                }
                match best {
                    Some((_, _, best_mag)) if best_mag >= mag => {}
                    _ => best = Some((j, increasing, mag)),
                }
            }
        }
        best.map(|(j, inc, _)| (j, inc))
    }

    fn step(&mut self, (q, increasing): (usize, bool)) -> Result<Step> {
        let m = self.m;
        let dir = if increasing { T::one() } else { -T::one() };
        let inf = T::of(f64::INFINITY);
        let pivot_eps = T::of(1e-9);
        let tie = T::of(1e-12);

        // w = B^-1 a_q (dense gather over the sparse column).
        self.w.iter_mut().for_each(|v| *v = T::zero());
        let (rr, vv) = self.cols.col(q);
        for (&r, &v) in rr.iter().zip(vv) {
            for i in 0..m {
                self.w[i] += self.binv[i * m + r] * v;
            }
        }

        // Ratio test: x_B moves by -dir * w * step.
        let range = self.upper[q] - self.lower[q];
        let mut min_cap = inf;
        let mut leave: Option<(usize, bool)> = None; // (basis pos, leaves at lower bound)
        for i in 0..m {
            let g = dir * self.w[i];
            let bi = self.basis[i];
            let (cap, at_lower) = if g > pivot_eps {
                if !self.lower[bi].is_finite() {
                    continue;
                }
                (((self.x[bi] - self.lower[bi]) / g).max(T::zero()), true)
            } else if g < -pivot_eps {
                if !self.upper[bi].is_finite() {
                    continue;
                }
                (((self.upper[bi] - self.x[bi]) / -g).max(T::zero()), false)
            } else {
                continue;
            };
            let replace = match leave {
                None => true,
                Some((cur, _)) => {
                    if cap < min_cap - tie {
                        true
                    } else if cap <= min_cap + tie {
                        // Tie break: Bland wants the smallest variable index,
                        // otherwise prefer the largest pivot magnitude.
                        if self.bland {
                            self.basis[i] < self.basis[cur]
                        } else {
                            self.w[i].abs() > self.w[cur].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                min_cap = min_cap.min(cap);
                leave = Some((i, at_lower));
            }
        }

        let step = if range.is_finite() { range.min(min_cap) } else { min_cap };
        if !step.is_finite() {
            return Ok(Step::Unbounded);
        }

        // Stall bookkeeping for the Bland switch.
        if step <= T::of(1e-12) {
            self.stalled += 1;
            if self.stalled > BLAND_AFTER_STALLED {
                self.bland = true;
            }
        } else {
            self.stalled = 0;
            self.bland = false;
        }

        if range.is_finite() && range <= min_cap {
            // Bound flip: the entering variable traverses its whole range.
            let delta = dir * range;
            for i in 0..m {
                if self.w[i] != T::zero() {
                    let bi = self.basis[i];
                    self.x[bi] -= self.w[i] * delta;
                }
            }
            match self.state[q] {
                VarState::AtLower => {
                    self.x[q] = self.upper[q];
                    self.state[q] = VarState::AtUpper;
                }
                VarState::AtUpper => {
                    self.x[q] = self.lower[q];
                    self.state[q] = VarState::AtLower;
                }
                _ => {
                    return Err(Error::numerical("simplex", "bound flip on a free variable"));
                }
            }
            return Ok(Step::BoundFlip);
        }

        let (r, leaves_lower) = leave.expect("finite step implies a blocking row");
        let piv = self.w[r];
        if piv.abs() < T::of(1e-11) {
            return Ok(Step::Unstable);
        }

        // Move values and swap basis.
        let delta = dir * step;
        for i in 0..m {
            if self.w[i] != T::zero() {
                let bi = self.basis[i];
                self.x[bi] -= self.w[i] * delta;
            }
        }
        let leaving = self.basis[r];
        self.x[leaving] = if leaves_lower {
            self.lower[leaving]
        } else {
            self.upper[leaving]
        };
        self.state[leaving] = if leaves_lower {
            VarState::AtLower
        } else {
            VarState::AtUpper
        };
        self.x[q] = match self.state[q] {
            VarState::AtLower => self.lower[q] + delta,
            VarState::AtUpper => self.upper[q] + delta,
            VarState::FreeAtZero => delta,
            VarState::Basic(_) => unreachable!("entering variable is nonbasic"),
        };
        self.state[q] = VarState::Basic(r);
        self.basis[r] = q;

        // Product-form update of the explicit inverse.
        let inv_piv = T::one() / piv;
        let w = std::mem::take(&mut self.w);
        {
            let (head, rest) = self.binv.split_at_mut(r * m);
            let (prow, tail) = rest.split_at_mut(m);
            for v in prow.iter_mut() {
                *v *= inv_piv;
            }
            let prow: &[T] = prow;
            for (idx, chunk) in head.chunks_exact_mut(m).enumerate() {
                let f = w[idx];
                if f != T::zero() {
                    for (c, &p) in chunk.iter_mut().zip(prow) {
                        *c -= f * p;
                    }
                }
            }
            for (idx, chunk) in tail.chunks_exact_mut(m).enumerate() {
                let f = w[r + 1 + idx];
                if f != T::zero() {
                    for (c, &p) in chunk.iter_mut().zip(prow) {
                        *c -= f * p;
                    }
                }
            }
        }
        self.w = w;

        Ok(Step::Pivoted)
    }

    /// Rebuilds the explicit inverse from the basis columns (Gauss-Jordan
    /// with partial pivoting, re-deriving the basis-to-row assignment) and
    /// recomputes basic values from scratch.
    fn refactorize(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        self.binv.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..m {
            self.binv[i * m + i] = T::one();
        }
        let old_basis = self.basis.clone();
        let mut new_basis = vec![usize::MAX; m];
        let mut taken = vec![false; m];
        let mut w = vec![T::zero(); m];
        for &var in &old_basis {
            w.iter_mut().for_each(|v| *v = T::zero());
            let (rr, vv) = self.cols.col(var);
            for (&r, &v) in rr.iter().zip(vv) {
                for i in 0..m {
                    let b = self.binv[i * m + r];
                    if b != T::zero() {
                        w[i] += b * v;
                    }
                }
            }
            let mut pivot_row = usize::MAX;
            let mut best = T::zero();
            for i in 0..m {
                if !taken[i] && w[i].abs() > best {
                    best = w[i].abs();
                    pivot_row = i;
                }
            }
            if pivot_row == usize::MAX || best < T::of(1e-12) {
                return Err(Error::numerical("simplex", "singular basis at refactor"));
            }
            taken[pivot_row] = true;
            new_basis[pivot_row] = var;
            let piv = w[pivot_row];
            let inv_piv = T::one() / piv;
            let (head, rest) = self.binv.split_at_mut(pivot_row * m);
            let (prow, tail) = rest.split_at_mut(m);
            for v in prow.iter_mut() {
                *v *= inv_piv;
            }
            let prow: &[T] = prow;
            for (idx, chunk) in head.chunks_exact_mut(m).enumerate() {
                let f = w[idx];
                if f != T::zero() {
                    for (c, &p) in chunk.iter_mut().zip(prow) {
                        *c -= f * p;
                    }
                }
            }
            for (idx, chunk) in tail.chunks_exact_mut(m).enumerate() {
                let f = w[pivot_row + 1 + idx];
                if f != T::zero() {
                    for (c, &p) in chunk.iter_mut().zip(prow) {
                        *c -= f * p;
                    }
                }
            }
        }
        self.basis = new_basis;
        for (pos, &var) in self.basis.iter().enumerate() {
            self.state[var] = VarState::Basic(pos);
        }

        // x_B = B^-1 (b - N x_N)
        let mut residual = self.rhs.clone();
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) || self.x[j] == T::zero() {
                continue;
            }
            let (rr, vv) = self.cols.col(j);
            for (&r, &v) in rr.iter().zip(vv) {
                residual[r] -= v * self.x[j];
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let mut acc = T::zero();
            for (&b, &r) in row.iter().zip(residual.iter()) {
                acc += b * r;
            }
            self.x[self.basis[i]] = acc;
        }
        Ok(())
    }
}
