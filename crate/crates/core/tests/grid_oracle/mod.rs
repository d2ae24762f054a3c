//! Brute-force oracle for the worst-case-distribution value: exhaustive
//! simplex-grid search over both weight vectors with Wasserstein
//! feasibility checked through `w1_distance`. Independent of the LP path
//! it validates (it never touches `build_lp`/`solve_wcd`).

use nalgebra::DVector;
use rayon::prelude::*;

use otcps_core::ot::{w1_distance, DiscreteMeasure};
use otcps_core::wcd::WcdProblem;

/// All weight vectors on the n-simplex with entries that are multiples of
/// `1/steps`.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; n];
    fill(&mut out, &mut current, 0, steps, steps);
    out
}

fn fill(out: &mut Vec<Vec<f64>>, current: &mut [usize], idx: usize, left: usize, steps: usize) {
    if idx == current.len() - 1 {
        current[idx] = left;
        out.push(current.iter().map(|&c| c as f64 / steps as f64).collect());
        return;
    }
    for take in 0..=left {
        current[idx] = take;
        fill(out, current, idx + 1, left - take, steps);
    }
}

/// Grid points within the W1 ball of radius `eps` around `center`.
fn feasible_points(
    points: &[DVector<f64>],
    center: &DiscreteMeasure<f64>,
    eps: f64,
    grid: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    grid.par_iter()
        .filter(|w| {
            let candidate = DiscreteMeasure::new(points.to_vec(), (*w).clone())
                .expect("grid weights lie on the simplex");
            w1_distance(center, &candidate).expect("transport LP solves") <= eps + 1e-9
        })
        .cloned()
        .collect()
}

/// Max of `sum_l min(p1_l, p2_l)` over all feasible grid pairs.
pub fn grid_search_v_star(prob: &WcdProblem<f64>, steps: usize) -> f64 {
    let points = &prob.support().points;
    let n = points.len();
    let (eps1, eps2) = prob.radii();
    let grid = simplex_grid(n, steps);
    let q1 = prob.q1_measure().unwrap();
    let q2 = prob.q2_measure().unwrap();
    let feas1 = feasible_points(points, &q1, eps1, &grid);
    let feas2 = feasible_points(points, &q2, eps2, &grid);
    assert!(
        !feas1.is_empty() && !feas2.is_empty(),
        "empirical centers must be feasible"
    );
    feas1
        .par_iter()
        .map(|a| {
            let mut best = 0.0f64;
            for b in &feas2 {
                let mut overlap = 0.0;
                for l in 0..n {
                    overlap += a[l].min(b[l]);
                }
                best = best.max(overlap);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}
