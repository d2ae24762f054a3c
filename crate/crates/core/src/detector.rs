//! Kernel-smoothed score function over the worst-case distributions,
//! CUSUM recursion, and tail-bound threshold calibration.
//!
//! The discrete worst-case pair `(p1, p2)` on the pooled atoms extends to
//! densities `f_k(z) = sum_l p_{k,l} K_sigma(z - s_l)` by Gaussian kernel
//! smoothing; the detector feeds the score `log f2(z)/f1(z)` (clipped,
//! drift-corrected) into `S_t = max(0, S_{t-1} + X_t)` and alarms when
//! `S_t >= h`. With increments clipped to `[-c, c]` the centered
//! increments are conditionally sub-Gaussian with constant `c`, giving the
//! tail bound `P(S_t >= h) <= 2 exp(-h^2 / (8 sum sigma_i^2))` under a
//! non-positive conditional drift.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_sys::ResidualStream;
use crate::scalar::Real;

/// Smoothing kernel in log domain. Only the Gaussian kernel ships; the
/// trait exists so the score machinery is not welded to it.
pub trait SmoothingKernel<T> {
    /// `log K_sigma(xi)` given `||xi||^2`, the bandwidth and the dimension.
    fn log_kernel(&self, sq_norm: T, sigma: T, dim: usize) -> T;
}

/// `K_sigma(xi) = (2 pi sigma^2)^(-d/2) exp(-||xi||^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianKernel;

impl<T: Real> SmoothingKernel<T> for GaussianKernel {
    fn log_kernel(&self, sq_norm: T, sigma: T, dim: usize) -> T {
        let two = T::of(2.0);
        let tau = two * T::pi() * sigma * sigma;
        -T::of(dim as f64) / two * tau.ln() - sq_norm / (two * sigma * sigma)
    }
}

/// Worst-case distributions plus the smoothing and preprocessing
/// parameters that define the score `s(z)`.
#[derive(Debug, Clone)]
pub struct ScoreModel<T> {
    atoms: Vec<DVector<T>>,
    p1: Vec<T>,
    p2: Vec<T>,
    bandwidth: T,
    clip: Option<T>,
    drift_offset: T,
    knn_truncation: Option<usize>,
    /// Sub-Gaussian constant to use when clipping is disabled (research
    /// mode); without it the tail-bound policy is refused.
    sigma_override: Option<T>,
}

impl<T: Real> ScoreModel<T> {
    pub fn new(
        atoms: Vec<DVector<T>>,
        p1: Vec<T>,
        p2: Vec<T>,
        bandwidth: T,
        clip: Option<T>,
        drift_offset: T,
        knn_truncation: Option<usize>,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("score model", "no atoms"));
        }
        let d = atoms[0].len();
        if atoms.iter().any(|a| a.len() != d) {
            return Err(Error::invalid("score model", "mixed atom dimensions"));
        }
        if p1.len() != atoms.len() || p2.len() != atoms.len() {
            return Err(Error::Dimension {
                context: "score model weights",
                expected: atoms.len(),
                got: p1.len().min(p2.len()),
            });
        }
        for w in [&p1, &p2] {
            let sum = w.iter().fold(T::zero(), |acc, &v| acc + v);
            if w.iter().any(|&v| v < -T::of(1e-12)) || (sum - T::one()).abs() > T::of(1e-7) {
                return Err(Error::invalid("score model", "weights not on the simplex"));
            }
        }
        if !(bandwidth > T::zero()) {
            return Err(Error::invalid("score model", "bandwidth must be > 0"));
        }
        if let Some(c) = clip {
            if !(c > T::zero()) {
                return Err(Error::invalid("score model", "clip bound must be > 0"));
            }
        }
        if drift_offset > T::zero() {
            return Err(Error::invalid("score model", "drift offset must be <= 0"));
        }
        if knn_truncation == Some(0) {
            return Err(Error::invalid("score model", "knn truncation must be >= 1"));
        }
        Ok(ScoreModel {
            atoms,
            p1,
            p2,
            bandwidth,
            clip,
            drift_offset,
            knn_truncation,
            sigma_override: None,
        })
    }

    /// Sets the sub-Gaussian constant for unclipped operation.
    pub fn with_sigma_override(mut self, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::invalid("score model", "sigma override must be > 0"));
        }
        self.sigma_override = Some(sigma);
        Ok(self)
    }

    pub fn atoms(&self) -> &[DVector<T>] {
        &self.atoms
    }

    pub fn weights(&self, k: usize) -> &[T] {
        match k {
            1 => &self.p1,
            2 => &self.p2,
            _ => panic!("hypothesis index must be 1 or 2"),
        }
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn clip(&self) -> Option<T> {
        self.clip
    }

    pub fn drift_offset(&self) -> T {
        self.drift_offset
    }

    pub fn knn_truncation(&self) -> Option<usize> {
        self.knn_truncation
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// Per-step sub-Gaussian constant: the clip bound when clipping is on,
    /// else the configured override.
    pub fn sigma_step(&self) -> Option<T> {
        self.clip.or(self.sigma_override)
    }

    /// `log f_k(z)` by log-sum-exp over the positive-weight atoms; never
    /// `-inf` because each weight vector has at least one positive entry.
    pub fn log_density(&self, k: usize, z: &DVector<T>) -> Result<T> {
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                context: "score input",
                expected: self.dim(),
                got: z.len(),
            });
        }
        let w = match k {
            1 => &self.p1,
            2 => &self.p2,
            _ => return Err(Error::invalid("hypothesis index", "must be 1 or 2")),
        };
        let kernel = GaussianKernel;
        let mut terms: Vec<T> = Vec::with_capacity(self.atoms.len());
        match self.knn_truncation {
            None => {
                for (atom, &wl) in self.atoms.iter().zip(w) {
                    if wl > T::zero() {
                        let sq = (z - atom).norm_squared();
                        terms.push(wl.ln() + kernel.log_kernel(sq, self.bandwidth, self.dim()));
                    }
                }
            }
            Some(kn) => {
                // Exhaustive scan, keep the K nearest contributing atoms.
                let mut cand: Vec<(T, T)> = self
                    .atoms
                    .iter()
                    .zip(w)
                    .filter(|(_, &wl)| wl > T::zero())
                    .map(|(atom, &wl)| ((z - atom).norm_squared(), wl))
                    .collect();
                let keep = kn.min(cand.len());
                cand.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
                for &(sq, wl) in &cand[..keep] {
                    terms.push(wl.ln() + kernel.log_kernel(sq, self.bandwidth, self.dim()));
                }
            }
        }
        Ok(log_sum_exp(&terms))
    }

    /// `f_k(z)`; strictly positive in exact arithmetic, may underflow to
    /// zero in floating point very far from the atoms (use
    /// [`log_density`](Self::log_density) there).
    pub fn density(&self, k: usize, z: &DVector<T>) -> Result<T> {
        Ok(self.log_density(k, z)?.exp())
    }

    /// Raw log-likelihood ratio `log f2(z) - log f1(z)`, before clipping
    /// and drift correction.
    pub fn log_likelihood_ratio(&self, z: &DVector<T>) -> Result<T> {
        Ok(self.log_density(2, z)? - self.log_density(1, z)?)
    }

    /// Detector score: clipped log-likelihood ratio plus the drift offset.
    pub fn score(&self, z: &DVector<T>) -> Result<T> {
        let mut s = self.log_likelihood_ratio(z)?;
        if let Some(c) = self.clip {
            s = s.clamp(-c, c);
        }
        Ok(s + self.drift_offset)
    }
}

fn log_sum_exp<T: Real>(terms: &[T]) -> T {
    let mut hi = T::of(f64::NEG_INFINITY);
    for &t in terms {
        hi = hi.max(t);
    }
    if terms.is_empty() || !hi.is_finite() {
        return hi;
    }
    let sum = terms
        .iter()
        .fold(T::zero(), |acc, &t| acc + (t - hi).exp());
    hi + sum.ln()
}

/// CUSUM statistic with the accumulated variance proxy `V = sum sigma_i^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState<T> {
    s: T,
    t: usize,
    v: T,
}

impl<T: Real> Default for CusumState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> CusumState<T> {
    pub fn new() -> Self {
        CusumState {
            s: T::zero(),
            t: 0,
            v: T::zero(),
        }
    }

    /// One recursion step `S <- max(0, S + x)`; `sigma_i > 0` is the
    /// caller's sub-Gaussian constant for this increment.
    pub fn step(&mut self, x: T, sigma_i: T) {
        debug_assert!(sigma_i > T::zero(), "sigma_i must be > 0");
        self.advance(x);
        self.v += sigma_i * sigma_i;
    }

    /// Recursion step when no sub-Gaussian constant is known; `V` stays put
    /// and tail-bound calibration is unavailable.
    pub fn step_untracked(&mut self, x: T) {
        self.advance(x);
    }

    fn advance(&mut self, x: T) {
        self.s = (self.s + x).max(T::zero());
        self.t += 1;
    }

    pub fn statistic(&self) -> T {
        self.s
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn variance_proxy(&self) -> T {
        self.v
    }
}

/// `P(S_t >= h) <= min(1, 2 exp(-h^2 / (8 V_t)))`.
pub fn tail_bound<T: Real>(h: T, v_t: T) -> Result<T> {
    if !(h > T::zero()) || !(v_t > T::zero()) {
        return Err(Error::invalid("tail bound", "h and V_t must be > 0"));
    }
    let b = T::of(2.0) * (-(h * h) / (T::of(8.0) * v_t)).exp();
    Ok(b.min(T::one()))
}

/// Smallest `h` whose tail bound does not exceed `eta`:
/// `h = sqrt(8 V_t ln(2/eta))`.
pub fn calibrate_threshold<T: Real>(eta: T, v_t: T) -> Result<T> {
    if !(eta > T::zero()) || eta > T::one() {
        return Err(Error::invalid("threshold calibration", "eta must be in (0, 1]"));
    }
    if !(v_t > T::zero()) {
        return Err(Error::invalid("threshold calibration", "V_t must be > 0"));
    }
    Ok((T::of(8.0) * v_t * (T::of(2.0) / eta).ln()).sqrt())
}

/// Static drift correction: `offset = min(0, -(mean + margin))`, so the
/// offset-adjusted empirical mean of nominal scores is at most `-margin`
/// whenever the raw mean exceeds `-margin`, and zero otherwise.
pub fn fit_drift_offset<T: Real>(h0_scores: &[T], margin: T) -> Result<T> {
    if h0_scores.is_empty() {
        return Err(Error::invalid("drift offset", "empty nominal score sample"));
    }
    if margin < T::zero() {
        return Err(Error::invalid("drift offset", "margin must be >= 0"));
    }
    let mean = h0_scores.iter().fold(T::zero(), |acc, &v| acc + v)
        / T::of(h0_scores.len() as f64);
    Ok((-(mean + margin)).min(T::zero()))
}

/// Threshold selection for a detector run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy<T> {
    /// Alarm at a fixed `h > 0`.
    Fixed { h: T },
    /// Calibrate `h` from the tail bound at false-positive budget `eta`
    /// over `horizon` steps (`V = horizon * sigma^2`).
    TailBound { eta: T, horizon: usize },
}

impl<T: Real> ThresholdPolicy<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::Fixed { h } => {
                if !(h > T::zero()) {
                    return Err(Error::invalid("threshold policy", "h must be > 0"));
                }
            }
            ThresholdPolicy::TailBound { eta, horizon } => {
                if !(eta > T::zero()) || eta > T::one() {
                    return Err(Error::invalid("threshold policy", "eta must be in (0, 1]"));
                }
                if horizon == 0 {
                    return Err(Error::invalid("threshold policy", "horizon must be >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// Full trace of one detector pass over a residual stream.
#[derive(Debug, Clone)]
pub struct DetectionRun<T> {
    /// Score of each sample, in stream order.
    pub scores: Vec<T>,
    /// CUSUM statistic after each sample.
    pub statistic: Vec<T>,
    /// First step (1-based; step `t` consumes sample `t-1`) with
    /// `S_t >= h`, `None` if the statistic never reaches `h`.
    pub tau_det: Option<usize>,
    /// Threshold used.
    pub h: T,
    /// False-positive budget when `h` came from the tail bound.
    pub eta: Option<T>,
    /// Variance proxy at the end of the run, when sigma_i is known.
    pub v_t: Option<T>,
}

impl<T: Real> DetectionRun<T> {
    /// CSV rows `t,score,S,alarm` with `t = 1..len`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,score,S,alarm\n");
        for (i, (sc, st)) in self.scores.iter().zip(&self.statistic).enumerate() {
            let alarm = *st >= self.h;
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                sc.as_f64(),
                st.as_f64(),
                u8::from(alarm)
            ));
        }
        out
    }

    /// JSON summary `{tau_det, h, eta, V_t}`.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary {
            tau_det: Option<usize>,
            h: f64,
            eta: Option<f64>,
            #[serde(rename = "V_t")]
            v_t: Option<f64>,
        }
        serde_json::to_string_pretty(&Summary {
            tau_det: self.tau_det,
            h: self.h.as_f64(),
            eta: self.eta.map(|e| e.as_f64()),
            v_t: self.v_t.map(|v| v.as_f64()),
        })
        .expect("summary serializes")
    }
}

/// Streams residuals through score and CUSUM, recording the statistic
/// trajectory and the first alarm time. An alarm fires when `S_t >= h`
/// (ties alarm). The tail-bound policy needs a per-step sub-Gaussian
/// constant, i.e. clipping or an explicit override.
pub fn run_detector<T: Real>(
    model: &ScoreModel<T>,
    residuals: &ResidualStream<T>,
    policy: &ThresholdPolicy<T>,
) -> Result<DetectionRun<T>> {
    policy.validate()?;
    if residuals.is_empty() {
        return Err(Error::invalid("detector input", "empty residual stream"));
    }
    if residuals.dim() != model.dim() {
        return Err(Error::Dimension {
            context: "detector input",
            expected: model.dim(),
            got: residuals.dim(),
        });
    }
    let sigma = model.sigma_step();
    let (h, eta) = match *policy {
        ThresholdPolicy::Fixed { h } => (h, None),
        ThresholdPolicy::TailBound { eta, horizon } => {
            let sigma = sigma.ok_or_else(|| {
                Error::Config(
                    "tail-bound threshold policy requires clipping or a sigma override".into(),
                )
            })?;
            let v = T::of(horizon as f64) * sigma * sigma;
            (calibrate_threshold(eta, v)?, Some(eta))
        }
    };
    let mut state = CusumState::new();
    let mut scores = Vec::with_capacity(residuals.len());
    let mut statistic = Vec::with_capacity(residuals.len());
    let mut tau_det = None;
    for (idx, z) in residuals.samples.iter().enumerate() {
        let x = model.score(z)?;
        match sigma {
            Some(s) => state.step(x, s),
            None => state.step_untracked(x),
        }
        scores.push(x);
        statistic.push(state.statistic());
        if tau_det.is_none() && state.statistic() >= h {
            tau_det = Some(idx + 1);
        }
    }
    Ok(DetectionRun {
        scores,
        statistic,
        tau_det,
        h,
        eta,
        v_t: sigma.map(|s| state.variance_proxy().max(s * s * T::of(residuals.len() as f64))),
    })
}
