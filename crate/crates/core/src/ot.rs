//! Discrete measures, ground-cost matrices, exact 1-Wasserstein distance
//! and total variation on a common support.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::scalar::Real;

/// How far a weight vector may drift from the simplex before construction
/// rejects it instead of renormalizing.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A discrete probability measure: support points plus simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    support: Vec<DVector<T>>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Builds a measure after validating that weights are nonnegative and
    /// sum to one within [`WEIGHT_SUM_TOL`] (the sum is then renormalized
    /// exactly) and that all support points share one dimension.
    pub fn new(support: Vec<DVector<T>>, weights: Vec<T>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("discrete measure", "empty support"));
        }
        if support.len() != weights.len() {
            return Err(Error::Dimension {
                context: "discrete measure weights",
                expected: support.len(),
                got: weights.len(),
            });
        }
        let dim = support[0].len();
        for p in &support {
            if p.len() != dim {
                return Err(Error::Dimension {
                    context: "discrete measure support",
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("discrete measure", "non-finite support point"));
            }
        }
        let mut sum = T::zero();
        for &w in &weights {
            if !w.is_finite() || w < T::zero() {
                return Err(Error::invalid("discrete measure", "negative or non-finite weight"));
            }
            sum += w;
        }
        if (sum - T::one()).abs() > T::of(WEIGHT_SUM_TOL) {
            return Err(Error::invalid(
                "discrete measure",
                format!("weights sum to {}, not 1", sum.as_f64()),
            ));
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(DiscreteMeasure { support, weights })
    }

    /// Dirac measure at a single point.
    pub fn dirac(point: DVector<T>) -> Self {
        DiscreteMeasure {
            support: vec![point],
            weights: vec![T::one()],
        }
    }

    /// Uniform measure on the given points.
    pub fn uniform(support: Vec<DVector<T>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::invalid("discrete measure", "empty support"));
        }
        let w = T::one() / T::of(n as f64);
        Self::new(support, vec![w; n])
    }

    pub fn support(&self) -> &[DVector<T>] {
        &self.support
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// Serializes as CSV rows `w,x1,...,x{d}` with a header.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("w");
        for k in 1..=d {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for (p, &w) in self.support.iter().zip(&self.weights) {
            out.push_str(&format!("{}", w.as_f64()));
            for v in p.iter() {
                out.push_str(&format!(",{}", v.as_f64()));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV produced by [`to_csv`](Self::to_csv). `path` is used
    /// only for error messages.
    pub fn from_csv(text: &str, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let mut it = rec.iter();
            let w: f64 = parse_field(it.next(), path, line)?;
            let coords = it
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_owned(),
                        line,
                        msg: format!("bad number {s:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if coords.is_empty() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    msg: "row has no coordinates".into(),
                });
            }
            weights.push(T::of(w));
            support.push(DVector::from_iterator(
                coords.len(),
                coords.into_iter().map(T::of),
            ));
        }
        DiscreteMeasure::new(support, weights)
    }
}

fn parse_field(field: Option<&str>, path: &str, line: u64) -> Result<f64> {
    let s = field.ok_or_else(|| Error::Parse {
        path: path.to_owned(),
        line,
        msg: "missing field".into(),
    })?;
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        msg: format!("bad number {s:?}"),
    })
}

fn csv_error(path: &str, e: &csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::Utf8 { pos, .. } => pos.as_ref().map(|p| p.line()).unwrap_or(0),
        csv::ErrorKind::UnequalLengths { pos, .. } => {
            pos.as_ref().map(|p| p.line()).unwrap_or(0)
        }
        _ => 0,
    };
    Error::Parse {
        path: path.to_owned(),
        line,
        msg: e.to_string(),
    }
}

/// Pairwise Euclidean ground-cost matrix over a pooled support.
#[derive(Debug, Clone)]
pub struct CostMatrix<T> {
    d: nalgebra::DMatrix<T>,
    points: Vec<DVector<T>>,
}

impl<T: Real> CostMatrix<T> {
    pub fn matrix(&self) -> &nalgebra::DMatrix<T> {
        &self.d
    }

    pub fn points(&self) -> &[DVector<T>] {
        &self.points
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.d[(i, j)]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds the pairwise cost matrix `D[l][m] = ||s_l - s_m||_2`.
pub fn cost_matrix<T: Real>(points: &[DVector<T>]) -> Result<CostMatrix<T>> {
    if points.is_empty() {
        return Err(Error::invalid("cost matrix", "no points"));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::Dimension {
                context: "cost matrix points",
                expected: dim,
                got: p.len(),
            });
        }
    }
    let n = points.len();
    let mut d = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (&points[i] - &points[j]).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(CostMatrix {
        d,
        points: points.to_vec(),
    })
}

/// Exact 1-Wasserstein distance between two discrete measures, computed as
/// the optimal value of the transportation LP
/// `inf_G sum_ij G_ij ||x_i - y_j||` over couplings with the given
/// marginals.
pub fn w1_distance<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>) -> Result<T> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            context: "w1_distance",
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let (m, n) = (mu.len(), nu.len());
    let mut lp = LinearProgram::new(Sense::Minimize);
    let inf = T::of(f64::INFINITY);
    for i in 0..m {
        for j in 0..n {
            let c = (&mu.support()[i] - &nu.support()[j]).norm();
            lp.add_var(c, T::zero(), inf, None);
        }
    }
    for i in 0..m {
        let entries: Vec<(usize, T)> = (0..n).map(|j| (i * n + j, T::one())).collect();
        lp.add_row(Relation::Eq, mu.weights()[i], &entries, None);
    }
    for j in 0..n {
        let entries: Vec<(usize, T)> = (0..m).map(|i| (i * n + j, T::one())).collect();
        lp.add_row(Relation::Eq, nu.weights()[j], &entries, None);
    }
    let sol = lp.solve_default()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp { status: sol.status });
    }
    Ok(sol.objective_value.max(T::zero()))
}

/// Total variation between two weight vectors on a common support:
/// `1 - sum_l min(p_l, q_l)`.
pub fn tv_common_support<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            context: "tv_common_support",
            expected: p.len(),
            got: q.len(),
        });
    }
    let overlap = p
        .iter()
        .zip(q)
        .fold(T::zero(), |acc, (&a, &b)| acc + a.min(b));
    Ok((T::one() - overlap).clamp(T::zero(), T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn cost_matrix_single_point_is_zero() {
        let cm = cost_matrix(&[v1(3.0)]).unwrap();
        assert_eq!(cm.matrix().nrows(), 1);
        assert_eq!(cm.entry(0, 0), 0.0);
    }

    #[test]
    fn cost_matrix_line_points() {
        let cm = cost_matrix(&[v1(0.0), v1(3.0)]).unwrap();
        assert_eq!(cm.entry(0, 1), 3.0);
        assert_eq!(cm.entry(1, 0), 3.0);
        assert_eq!(cm.entry(0, 0), 0.0);
    }

    #[test]
    fn cost_matrix_345_triangle() {
        let cm = cost_matrix(&[v2(0.0, 0.0), v2(3.0, 4.0)]).unwrap();
        assert_relative_eq!(cm.entry(0, 1), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn cost_matrix_rejects_mixed_dims() {
        assert!(cost_matrix(&[v1(0.0), v2(1.0, 2.0)]).is_err());
    }

    #[test]
    fn w1_of_identical_measure_is_zero() {
        let mu = DiscreteMeasure::uniform(vec![v2(0.0, 1.0), v2(2.0, -1.0)]).unwrap();
        let d = w1_distance(&mu, &mu).unwrap();
        assert!(d.abs() <= 1e-10, "got {d}");
    }

    #[test]
    fn w1_between_diracs_is_their_distance() {
        let a = DiscreteMeasure::dirac(v2(0.0, 0.0));
        let b = DiscreteMeasure::dirac(v2(3.0, 4.0));
        assert_relative_eq!(w1_distance(&a, &b).unwrap(), 5.0, epsilon = 1e-8);
    }

    #[test]
    fn w1_split_mass_hand_case() {
        // mu = 1/2 d_0 + 1/2 d_1, nu = d_{0.5}: the only coupling moves each
        // half by 0.5, so W1 = 0.5.
        let mu = DiscreteMeasure::new(vec![v1(0.0), v1(1.0)], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::dirac(v1(0.5));
        assert_relative_eq!(w1_distance(&mu, &nu).unwrap(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn tv_cases() {
        assert_eq!(tv_common_support(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_common_support(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_relative_eq!(
            tv_common_support(&[0.75, 0.25], &[0.25, 0.75]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(tv_common_support(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn measure_rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![v1(0.0)], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![v1(0.0), v1(1.0)], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn measure_csv_roundtrip() {
        let mu = DiscreteMeasure::new(
            vec![v2(0.25, -1.5), v2(2.0, 0.125)],
            vec![0.375, 0.625],
        )
        .unwrap();
        let text = mu.to_csv();
        assert!(text.starts_with("w,x1,x2\n"));
        let back: DiscreteMeasure<f64> = DiscreteMeasure::from_csv(&text, "mem").unwrap();
        assert_eq!(back.weights(), mu.weights());
        assert_eq!(back.support(), mu.support());
    }

    #[test]
    fn csv_parse_error_carries_line() {
        let text = "w,x1\n0.5,0.0\noops,1.0\n";
        let err = DiscreteMeasure::<f64>::from_csv(text, "f.csv").unwrap_err();
        match err {
            crate::Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    /// Random small measures for the metric-axiom properties.
    fn random_measure(rng: &mut impl rand::Rng, n: usize, d: usize) -> DiscreteMeasure<f64> {
        let support: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(d, |_, _| rng.random::<f64>() * 4.0 - 2.0))
            .collect();
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        DiscreteMeasure::new(support, w).unwrap()
    }

    #[test]
    fn w1_metric_axioms_on_random_measures() {
        #[allow(unused_imports)]
        use rand::Rng;
        let mut rng = crate::rng::substream(7, 0, crate::rng::StreamRole::Adhoc);
        for _ in 0..25 {
            let n = rng.random_range(1..=4usize);
            let d = rng.random_range(1..=3usize);
            let nb = rng.random_range(1..=4usize);
            let nc = rng.random_range(1..=4usize);
            let a = random_measure(&mut rng, n, d);
            let b = random_measure(&mut rng, nb, d);
            let c = random_measure(&mut rng, nc, d);
            let dab = w1_distance(&a, &b).unwrap();
            let dba = w1_distance(&b, &a).unwrap();
            let dac = w1_distance(&a, &c).unwrap();
            let dcb = w1_distance(&c, &b).unwrap();
            assert!(dab >= 0.0);
            assert!((dab - dba).abs() <= 1e-8, "symmetry: {dab} vs {dba}");
            assert!(
                dab <= dac + dcb + 1e-8,
                "triangle: {dab} > {dac} + {dcb}"
            );
            assert!(w1_distance(&a, &a).unwrap().abs() <= 1e-8);
        }
    }

    #[test]
    fn w1_scaling_is_exact() {
        #[allow(unused_imports)]
        use rand::Rng;
        let mut rng = crate::rng::substream(8, 0, crate::rng::StreamRole::Adhoc);
        let a = random_measure(&mut rng, 3, 2);
        let b = random_measure(&mut rng, 4, 2);
        let base = w1_distance(&a, &b).unwrap();
        for &c in &[0.5, 2.0, 7.25] {
            let scale = |m: &DiscreteMeasure<f64>| {
                DiscreteMeasure::new(
                    m.support().iter().map(|p| p * c).collect(),
                    m.weights().to_vec(),
                )
                .unwrap()
            };
            let d = w1_distance(&scale(&a), &scale(&b)).unwrap();
            assert!((d - c * base).abs() <= 1e-8, "scaling by {c}: {d} vs {}", c * base);
        }
    }

    proptest! {
        #[test]
        fn tv_is_bounded_and_symmetric(raw in proptest::collection::vec(0.0f64..1.0, 2..6)) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 1e-6);
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let q: Vec<f64> = {
                let mut r = p.clone();
                r.reverse();
                r
            };
            let t = tv_common_support(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!((t - tv_common_support(&q, &p).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn tv_zero_iff_equal(raw in proptest::collection::vec(1e-3f64..1.0, 2..6)) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            // Renormalized weights sum to 1 only up to rounding, so "equals
            // zero" holds to machine precision here; the exact case is
            // covered by `tv_cases`.
            prop_assert!(tv_common_support(&p, &p).unwrap() <= 1e-12);
            let mut q = p.clone();
            q.swap(0, 1);
            if (q[0] - p[0]).abs() > 1e-9 {
                prop_assert!(tv_common_support(&p, &q).unwrap() > 0.0);
            }
        }
    }
}
