//! Dev probe: worst-case-distribution LP timing at benchmark scale.
use nalgebra::DVector;
use otcps_core::rng::{substream, StreamRole};
use otcps_core::wcd::{solve_wcd, verify_wcd, TrainingSet, WcdProblem};
use rand::Rng;
use std::time::Instant;

fn main() {
    for &half in &[30usize, 75, 150] {
        let mut rng = substream(2, 0, StreamRole::Adhoc);
        let x1: Vec<DVector<f64>> = (0..half)
            .map(|_| DVector::from_fn(4, |_, _| rng.random::<f64>() * 0.5 - 0.25))
            .collect();
        let x2: Vec<DVector<f64>> = (0..half)
            .map(|_| DVector::from_fn(4, |_, _| rng.random::<f64>() * 4.0 + 2.0))
            .collect();
        let ts = TrainingSet::new(x1, x2).unwrap();
        let prob = WcdProblem::new(&ts, 0.001, 0.01).unwrap();
        let t0 = Instant::now();
        let sol = solve_wcd(&prob, 1e-8).unwrap();
        let dt = t0.elapsed();
        let audit = verify_wcd(&prob, &sol);
        println!(
            "n={} vars={} V*={:.6} iters={} time={:.2?} max_violation={:.3e}",
            2 * half,
            3 * 2 * half + 2 * (2 * half) * (2 * half),
            sol.v_star,
            sol.iterations,
            dt,
            audit.max_violation()
        );
    }
}
