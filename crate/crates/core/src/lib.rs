//! Optimal-transport-driven attack detection for partially observed
//! stochastic LTI systems.
//!
//! The crate simulates nominal and attacked observer residual streams,
//! solves a finite linear program for the worst-case distribution pair over
//! 1-Wasserstein ambiguity sets, extends the resulting test off-support by
//! Gaussian kernel smoothing, and runs a CUSUM detector with a
//! sub-Gaussian tail-bound threshold calibration. A Monte Carlo benchmark
//! harness reproduces ADD/FAR curves on the quadruple-tank process against
//! a Gaussian log-likelihood-ratio CUSUM baseline.
//!
//! All numerics are generic over [`scalar::Real`] (`f32`/`f64`); `*64`
//! aliases below pin the common `f64` instantiations.

pub mod bench;
pub mod config;
pub mod detector;
pub mod error;
pub mod lin_sys;
pub mod lp;
pub mod ot;
pub mod rng;
pub mod scalar;
pub mod wcd;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SystemModel64 = lin_sys::SystemModel<f64>;
pub type NoiseModel64 = lin_sys::NoiseModel<f64>;
pub type AttackModel64 = lin_sys::AttackModel<f64>;
pub type ObserverGain64 = lin_sys::ObserverGain<f64>;
pub type ResidualStream64 = lin_sys::ResidualStream<f64>;
pub type DiscreteMeasure64 = ot::DiscreteMeasure<f64>;
pub type CostMatrix64 = ot::CostMatrix<f64>;
pub type LinearProgram64 = lp::LinearProgram<f64>;
pub type LpSolution64 = lp::LpSolution<f64>;
pub type TrainingSet64 = wcd::TrainingSet<f64>;
pub type WcdProblem64 = wcd::WcdProblem<f64>;
pub type WcdSolution64 = wcd::WcdSolution<f64>;
pub type ScoreModel64 = detector::ScoreModel<f64>;
pub type CusumState64 = detector::CusumState<f64>;
pub type DetectionRun64 = detector::DetectionRun<f64>;
pub type Scenario64 = bench::Scenario<f64>;
pub type BenchReport64 = bench::BenchReport;
