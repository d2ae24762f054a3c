//! Worst-case distributions over 1-Wasserstein ambiguity sets.
//!
//! Given pooled training residuals and radii `(eps1, eps2)`, the finite
//! linear program below finds the distribution pair inside the two
//! ambiguity balls that is hardest to tell apart. Its optimal value `V*`
//! is the sum of pointwise overlaps `min(p1, p2)`, the minimal total
//! variation is `1 - V*`, and the minmax testing risk equals `V*`.
//!
//! Decision variables `(p1, p2, G1, G2, t)`, all nonnegative:
//!
//! ```text
//! max  sum_l t_l
//! s.t. sum_lm G_{k,lm} D_lm <= eps_k          (transport cost, k = 1,2)
//!      sum_m  G_{k,lm} = (Q_k)_l              (row marginals)
//!      sum_l  G_{k,lm} = p_{k,m}              (column marginals)
//!      t_l <= p_{1,l},  t_l <= p_{2,l}
//!      sum_l p_{k,l} = 1
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::ot::{cost_matrix, CostMatrix, DiscreteMeasure};
use crate::scalar::Real;

/// Nominal (`x1`) and surrogate-attacked (`x2`) residual samples.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    x1: Vec<DVector<T>>,
    x2: Vec<DVector<T>>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(x1: Vec<DVector<T>>, x2: Vec<DVector<T>>) -> Result<Self> {
        if x1.is_empty() || x2.is_empty() {
            return Err(Error::invalid("training set", "both classes need >= 1 sample"));
        }
        let d = x1[0].len();
        for s in x1.iter().chain(&x2) {
            if s.len() != d {
                return Err(Error::Dimension {
                    context: "training sample dimension",
                    expected: d,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("training set", "non-finite sample"));
            }
        }
        Ok(TrainingSet { x1, x2 })
    }

    pub fn x1(&self) -> &[DVector<T>] {
        &self.x1
    }

    pub fn x2(&self) -> &[DVector<T>] {
        &self.x2
    }

    pub fn dim(&self) -> usize {
        self.x1[0].len()
    }
}

/// Pooled support with the two empirical weight vectors on it.
#[derive(Debug, Clone)]
pub struct PooledSupport<T> {
    pub points: Vec<DVector<T>>,
    pub q1: Vec<T>,
    pub q2: Vec<T>,
    pub n1: usize,
    pub n2: usize,
}

/// Pools `X1` then `X2` into one indexed support, preserving order and
/// keeping duplicate points as distinct atoms. `Q1` is uniform `1/n1` on
/// the first `n1` indices and zero elsewhere; `Q2` mirrors that on the
/// last `n2` indices.
pub fn pool<T: Real>(ts: &TrainingSet<T>) -> PooledSupport<T> {
    let n1 = ts.x1.len();
    let n2 = ts.x2.len();
    let n = n1 + n2;
    let mut points = Vec::with_capacity(n);
    points.extend(ts.x1.iter().cloned());
    points.extend(ts.x2.iter().cloned());
    let mut q1 = vec![T::zero(); n];
    let mut q2 = vec![T::zero(); n];
    let w1 = T::one() / T::of(n1 as f64);
    let w2 = T::one() / T::of(n2 as f64);
    for q in q1.iter_mut().take(n1) {
        *q = w1;
    }
    for q in q2.iter_mut().skip(n1) {
        *q = w2;
    }
    PooledSupport {
        points,
        q1,
        q2,
        n1,
        n2,
    }
}

/// The Theorem-style LP instance: pooled support, empirical weights, the
/// pairwise cost matrix and the two ambiguity radii.
#[derive(Debug, Clone)]
pub struct WcdProblem<T> {
    support: PooledSupport<T>,
    cost: CostMatrix<T>,
    eps1: T,
    eps2: T,
}

impl<T: Real> WcdProblem<T> {
    /// Builds a problem with strictly positive radii.
    pub fn new(ts: &TrainingSet<T>, eps1: T, eps2: T) -> Result<Self> {
        if !(eps1 > T::zero()) || !(eps2 > T::zero()) {
            return Err(Error::invalid("ambiguity radius", "radii must be > 0"));
        }
        Self::build(ts, eps1, eps2)
    }

    /// Test-support constructor that additionally accepts zero radii
    /// (degenerate singleton ambiguity sets).
    #[doc(hidden)]
    pub fn new_allowing_zero_radii(ts: &TrainingSet<T>, eps1: T, eps2: T) -> Result<Self> {
        if eps1 < T::zero() || eps2 < T::zero() {
            return Err(Error::invalid("ambiguity radius", "radii must be >= 0"));
        }
        Self::build(ts, eps1, eps2)
    }

    fn build(ts: &TrainingSet<T>, eps1: T, eps2: T) -> Result<Self> {
        if !eps1.is_finite() || !eps2.is_finite() {
            return Err(Error::invalid("ambiguity radius", "radii must be finite"));
        }
        let support = pool(ts);
        let cost = cost_matrix(&support.points)?;
        Ok(WcdProblem {
            support,
            cost,
            eps1,
            eps2,
        })
    }

    pub fn n(&self) -> usize {
        self.support.points.len()
    }

    pub fn support(&self) -> &PooledSupport<T> {
        &self.support
    }

    pub fn cost(&self) -> &CostMatrix<T> {
        &self.cost
    }

    pub fn radii(&self) -> (T, T) {
        (self.eps1, self.eps2)
    }

    pub fn q1_measure(&self) -> Result<DiscreteMeasure<T>> {
        DiscreteMeasure::new(self.support.points.clone(), self.support.q1.clone())
    }

    pub fn q2_measure(&self) -> Result<DiscreteMeasure<T>> {
        DiscreteMeasure::new(self.support.points.clone(), self.support.q2.clone())
    }
}

/// Variable layout of the LP built by [`build_lp`]: `p1` then `p2` then
/// row-major `G1`, `G2`, then `t`.
#[derive(Debug, Clone, Copy)]
pub struct VarLayout {
    pub n: usize,
}

impl VarLayout {
    pub fn p1(&self, l: usize) -> usize {
        l
    }
    pub fn p2(&self, l: usize) -> usize {
        self.n + l
    }
    pub fn g1(&self, l: usize, m: usize) -> usize {
        2 * self.n + l * self.n + m
    }
    pub fn g2(&self, l: usize, m: usize) -> usize {
        2 * self.n + self.n * self.n + l * self.n + m
    }
    pub fn t(&self, l: usize) -> usize {
        2 * self.n + 2 * self.n * self.n + l
    }
    pub fn n_vars(&self) -> usize {
        3 * self.n + 2 * self.n * self.n
    }
}

/// Assembles the finite LP. Rows are ordered: two transport-cost rows,
/// row-marginal equalities (k = 1 then 2), column-marginal equalities,
/// `t <= p1` caps, `t <= p2` caps, and the two simplex equalities.
pub fn build_lp<T: Real>(prob: &WcdProblem<T>) -> LinearProgram<T> {
    let n = prob.n();
    let layout = VarLayout { n };
    let d = prob.cost.matrix();
    let sup = &prob.support;

    let mut lp = LinearProgram::new(Sense::Maximize);
    for l in 0..n {
        debug_assert_eq!(lp.n_vars(), layout.p1(l));
        lp.add_var(T::zero(), T::zero(), T::of(f64::INFINITY), None);
    }
    for _ in 0..n {
        lp.add_var(T::zero(), T::zero(), T::of(f64::INFINITY), None);
    }
    for _ in 0..2 * n * n {
        lp.add_var(T::zero(), T::zero(), T::of(f64::INFINITY), None);
    }
    for _ in 0..n {
        lp.add_var(T::one(), T::zero(), T::of(f64::INFINITY), None);
    }

    // Transport cost caps; zero-distance pairs contribute nothing.
    let mut entries = Vec::with_capacity(n * n);
    for l in 0..n {
        for m in 0..n {
            if d[(l, m)] != T::zero() {
                entries.push((layout.g1(l, m), d[(l, m)]));
            }
        }
    }
    lp.add_row(Relation::Le, prob.eps1, &entries, Some("cost1"));
    entries.clear();
    for l in 0..n {
        for m in 0..n {
            if d[(l, m)] != T::zero() {
                entries.push((layout.g2(l, m), d[(l, m)]));
            }
        }
    }
    lp.add_row(Relation::Le, prob.eps2, &entries, Some("cost2"));

    // Row marginals: couplings start at the empirical measures.
    for l in 0..n {
        let row: Vec<(usize, T)> = (0..n).map(|m| (layout.g1(l, m), T::one())).collect();
        lp.add_row(Relation::Eq, sup.q1[l], &row, None);
    }
    for l in 0..n {
        let row: Vec<(usize, T)> = (0..n).map(|m| (layout.g2(l, m), T::one())).collect();
        lp.add_row(Relation::Eq, sup.q2[l], &row, None);
    }

    // Column marginals: couplings end at the decision weights.
    for m in 0..n {
        let mut row: Vec<(usize, T)> = (0..n).map(|l| (layout.g1(l, m), T::one())).collect();
        row.push((layout.p1(m), -T::one()));
        lp.add_row(Relation::Eq, T::zero(), &row, None);
    }
    for m in 0..n {
        let mut row: Vec<(usize, T)> = (0..n).map(|l| (layout.g2(l, m), T::one())).collect();
        row.push((layout.p2(m), -T::one()));
        lp.add_row(Relation::Eq, T::zero(), &row, None);
    }

    // Overlap caps t <= p_k.
    for l in 0..n {
        lp.add_row(
            Relation::Le,
            T::zero(),
            &[(layout.t(l), T::one()), (layout.p1(l), -T::one())],
            None,
        );
    }
    for l in 0..n {
        lp.add_row(
            Relation::Le,
            T::zero(),
            &[(layout.t(l), T::one()), (layout.p2(l), -T::one())],
            None,
        );
    }

    // Simplex constraints.
    let row: Vec<(usize, T)> = (0..n).map(|l| (layout.p1(l), T::one())).collect();
    lp.add_row(Relation::Eq, T::one(), &row, Some("simplex1"));
    let row: Vec<(usize, T)> = (0..n).map(|l| (layout.p2(l), T::one())).collect();
    lp.add_row(Relation::Eq, T::one(), &row, Some("simplex2"));

    lp
}

/// Optimizer bundle extracted from the LP solution.
#[derive(Debug, Clone)]
pub struct WcdSolution<T> {
    /// Worst-case distribution weights on the pooled support.
    pub p1: Vec<T>,
    pub p2: Vec<T>,
    /// Optimal couplings from `Q_k` to `p_k`.
    pub gamma1: DMatrix<T>,
    pub gamma2: DMatrix<T>,
    /// Overlap variables; at the optimum `t_l = min(p1_l, p2_l)`.
    pub t: Vec<T>,
    /// LP optimum `V* = sum t`.
    pub v_star: T,
    /// Minimal total variation `1 - V*`.
    pub tv_star: T,
    /// Minmax testing risk; equals `V*` (see module docs).
    pub minmax_risk: T,
    /// LP iterations, for diagnostics.
    pub iterations: usize,
}

/// Solves the worst-case-distribution LP. The instance is always feasible
/// (`p_k = Q_k` with diagonal couplings and `t = 0`), so any terminal
/// status other than optimal is surfaced as an error.
pub fn solve_wcd<T: Real>(prob: &WcdProblem<T>, tol: T) -> Result<WcdSolution<T>> {
    let n = prob.n();
    let layout = VarLayout { n };
    let lp = build_lp(prob);
    let sol = lp.solve(tol, 1_000_000)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::IterationLimit => {
            return Err(Error::Lp {
                status: sol.status,
            })
        }
        LpStatus::Infeasible | LpStatus::Unbounded => {
            // Theorem guarantees feasibility and boundedness; reaching this
            // indicates a bug in the LP construction.
            return Err(Error::numerical(
                "solve_wcd",
                format!("LP reported {:?} on a provably feasible instance", sol.status),
            ));
        }
    }
    let x = &sol.x;
    let p1: Vec<T> = (0..n).map(|l| x[layout.p1(l)]).collect();
    let p2: Vec<T> = (0..n).map(|l| x[layout.p2(l)]).collect();
    let t: Vec<T> = (0..n).map(|l| x[layout.t(l)]).collect();
    let gamma1 = DMatrix::from_fn(n, n, |l, m| x[layout.g1(l, m)]);
    let gamma2 = DMatrix::from_fn(n, n, |l, m| x[layout.g2(l, m)]);
    let v_star = sol.objective_value;
    Ok(WcdSolution {
        p1,
        p2,
        gamma1,
        gamma2,
        t,
        v_star,
        tv_star: T::one() - v_star,
        minmax_risk: v_star,
        iterations: sol.iterations,
    })
}

/// Tie tolerance for the on-support test.
pub const TIE_TOL: f64 = 1e-9;

/// On-support optimal test values: `1` where the attacked weight clearly
/// dominates, `0` where the nominal weight does, and `1/2` on ties
/// (randomize at decision time).
pub fn on_support_test<T: Real>(sol: &WcdSolution<T>) -> Vec<T> {
    let tie = T::of(TIE_TOL);
    sol.p1
        .iter()
        .zip(&sol.p2)
        .map(|(&a, &b)| {
            if b > a + tie {
                T::one()
            } else if b < a - tie {
                T::zero()
            } else {
                T::of(0.5)
            }
        })
        .collect()
}

/// Constraint audit of a candidate solution.
#[derive(Debug, Clone)]
pub struct WcdAudit<T> {
    pub max_row_marginal_violation: T,
    pub max_col_marginal_violation: T,
    pub max_cost_excess: T,
    pub max_simplex_violation: T,
    pub max_negativity: T,
    pub max_overlap_mismatch: T,
}

impl<T: Real> WcdAudit<T> {
    pub fn max_violation(&self) -> T {
        self.max_row_marginal_violation
            .max(self.max_col_marginal_violation)
            .max(self.max_cost_excess)
            .max(self.max_simplex_violation)
            .max(self.max_negativity)
            .max(self.max_overlap_mismatch)
    }

    pub fn passes(&self, tol: T) -> bool {
        self.max_violation() <= tol
    }
}

/// Audits every constraint of the worst-case-distribution program plus the
/// optimality structure `t_l = min(p1_l, p2_l)`.
pub fn verify_wcd<T: Real>(prob: &WcdProblem<T>, sol: &WcdSolution<T>) -> WcdAudit<T> {
    let n = prob.n();
    let d = prob.cost.matrix();
    let sup = &prob.support;
    let zero = T::zero();

    let mut row_marginal = zero;
    let mut col_marginal = zero;
    let mut negativity = zero;
    for (gamma, q, p) in [
        (&sol.gamma1, &sup.q1, &sol.p1),
        (&sol.gamma2, &sup.q2, &sol.p2),
    ] {
        for l in 0..n {
            let mut row_sum = zero;
            for m in 0..n {
                row_sum += gamma[(l, m)];
                negativity = negativity.max(-gamma[(l, m)]);
            }
            row_marginal = row_marginal.max((row_sum - q[l]).abs());
        }
        for m in 0..n {
            let mut col_sum = zero;
            for l in 0..n {
                col_sum += gamma[(l, m)];
            }
            col_marginal = col_marginal.max((col_sum - p[m]).abs());
        }
        for &w in p.iter() {
            negativity = negativity.max(-w);
        }
    }
    for &tv in &sol.t {
        negativity = negativity.max(-tv);
    }

    let mut cost_excess = zero;
    for (gamma, eps) in [(&sol.gamma1, prob.eps1), (&sol.gamma2, prob.eps2)] {
        let mut total = zero;
        for l in 0..n {
            for m in 0..n {
                total += gamma[(l, m)] * d[(l, m)];
            }
        }
        cost_excess = cost_excess.max(total - eps);
    }

    let sum1 = sol.p1.iter().fold(zero, |acc, &v| acc + v);
    let sum2 = sol.p2.iter().fold(zero, |acc, &v| acc + v);
    let simplex = (sum1 - T::one()).abs().max((sum2 - T::one()).abs());

    let mut overlap = zero;
    for l in 0..n {
        let lo = sol.p1[l].min(sol.p2[l]);
        overlap = overlap.max((sol.t[l] - lo).abs());
    }

    WcdAudit {
        max_row_marginal_violation: row_marginal,
        max_col_marginal_violation: col_marginal,
        max_cost_excess: cost_excess,
        max_simplex_violation: simplex,
        max_negativity: negativity,
        max_overlap_mismatch: overlap,
    }
}

/// The trained-model document persisted to JSON and consumed by the
/// detector: pooled support, worst-case weights, optimal value and radii,
/// plus the kernel bandwidth the training run suggests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WcdArtifact {
    pub support: Vec<Vec<f64>>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    #[serde(rename = "V_star")]
    pub v_star: f64,
    pub tv_star: f64,
    pub minmax_risk: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub bandwidth_hint: f64,
}

impl WcdArtifact {
    pub fn from_solution<T: Real>(
        prob: &WcdProblem<T>,
        sol: &WcdSolution<T>,
        bandwidth_hint: f64,
    ) -> Self {
        WcdArtifact {
            support: prob
                .support
                .points
                .iter()
                .map(|p| p.iter().map(|v| v.as_f64()).collect())
                .collect(),
            p1: sol.p1.iter().map(|v| v.as_f64()).collect(),
            p2: sol.p2.iter().map(|v| v.as_f64()).collect(),
            v_star: sol.v_star.as_f64(),
            tv_star: sol.tv_star.as_f64(),
            minmax_risk: sol.minmax_risk.as_f64(),
            eps1: prob.eps1.as_f64(),
            eps2: prob.eps2.as_f64(),
            bandwidth_hint,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }
}
