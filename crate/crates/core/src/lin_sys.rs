//! Stochastic LTI plant/observer simulation and residual streams.
//!
//! The plant is `x+ = A x + B u + E w`, `y = C x + F w`; the observer is
//! `xh+ = A xh + B u + L (y - C xh)` with residual `r = y - C xh`. The
//! control input is identically zero: residual dynamics do not depend on
//! `u` (the observer cancels `B u`), and no controller is modeled.
//!
//! Under the output-replacement attack the measurement fed to the observer
//! from `t_attack` onward is `v_t = Aa v_{t-1} + vhat_t` (with `v` started
//! at zero), and the residual becomes `v_t - C xh_t`.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default iteration cap for the Riccati recursion in
/// [`steady_state_gain`].
pub const RICCATI_MAX_ITERS: usize = 100_000;

/// Plant/observer matrices and initial states.
#[derive(Debug, Clone)]
pub struct SystemModel<T> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
    pub x0: DVector<T>,
    pub xhat0: DVector<T>,
}

impl<T: Real> SystemModel<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        e: DMatrix<T>,
        f: DMatrix<T>,
        x0: DVector<T>,
        xhat0: DVector<T>,
    ) -> Result<Self> {
        let d_x = a.nrows();
        if a.ncols() != d_x {
            return Err(Error::Dimension {
                context: "A must be square",
                expected: d_x,
                got: a.ncols(),
            });
        }
        if b.nrows() != d_x {
            return Err(Error::Dimension {
                context: "B rows",
                expected: d_x,
                got: b.nrows(),
            });
        }
        if c.ncols() != d_x {
            return Err(Error::Dimension {
                context: "C columns",
                expected: d_x,
                got: c.ncols(),
            });
        }
        let d_w = e.ncols();
        if e.nrows() != d_x {
            return Err(Error::Dimension {
                context: "E rows",
                expected: d_x,
                got: e.nrows(),
            });
        }
        if f.nrows() != c.nrows() {
            return Err(Error::Dimension {
                context: "F rows",
                expected: c.nrows(),
                got: f.nrows(),
            });
        }
        if f.ncols() != d_w {
            return Err(Error::Dimension {
                context: "F columns",
                expected: d_w,
                got: f.ncols(),
            });
        }
        if x0.len() != d_x || xhat0.len() != d_x {
            return Err(Error::Dimension {
                context: "initial state",
                expected: d_x,
                got: x0.len().max(xhat0.len()),
            });
        }
        let finite = |m: &DMatrix<T>| m.iter().all(|v| v.is_finite());
        if !(finite(&a)
            && finite(&b)
            && finite(&c)
            && finite(&e)
            && finite(&f)
            && x0.iter().all(|v| v.is_finite())
            && xhat0.iter().all(|v| v.is_finite()))
        {
            return Err(Error::invalid("system model", "non-finite entry"));
        }
        Ok(SystemModel {
            a,
            b,
            c,
            e,
            f,
            x0,
            xhat0,
        })
    }

    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn d_w(&self) -> usize {
        self.e.ncols()
    }

    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }
}

/// Disturbance distribution: Gaussian, optionally corrupted by an
/// independent Exp(rate) draw added to every coordinate.
#[derive(Debug, Clone)]
pub struct NoiseModel<T> {
    cov: DMatrix<T>,
    /// Factor S with cov = S S^T, from the symmetric eigendecomposition.
    factor: DMatrix<T>,
    exp_rate: Option<T>,
}

impl<T: Real> NoiseModel<T> {
    pub fn gaussian(cov: DMatrix<T>) -> Result<Self> {
        Self::build(cov, None)
    }

    pub fn gaussian_plus_exp(cov: DMatrix<T>, rate: T) -> Result<Self> {
        if !(rate > T::zero()) || !rate.is_finite() {
            return Err(Error::invalid("noise model", "exponential rate must be > 0"));
        }
        Self::build(cov, Some(rate))
    }

    fn build(cov: DMatrix<T>, exp_rate: Option<T>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Dimension {
                context: "noise covariance",
                expected: cov.nrows(),
                got: cov.ncols(),
            });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("noise model", "non-finite covariance entry"));
        }
        let scale = cov.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let sym_tol = T::of(1e-9) * (T::one() + scale);
        for i in 0..cov.nrows() {
            for j in (i + 1)..cov.ncols() {
                if (cov[(i, j)] - cov[(j, i)]).abs() > sym_tol {
                    return Err(Error::invalid("noise model", "covariance not symmetric"));
                }
            }
        }
        let eig = cov.clone().symmetric_eigen();
        let psd_tol = -T::of(1e-9) * (T::one() + scale);
        let mut factor = eig.eigenvectors.clone();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < psd_tol {
                return Err(Error::invalid(
                    "noise model",
                    format!("covariance not PSD (eigenvalue {})", lambda.as_f64()),
                ));
            }
            let s = lambda.max(T::zero()).sqrt();
            for i in 0..factor.nrows() {
                factor[(i, k)] *= s;
            }
        }
        Ok(NoiseModel {
            cov,
            factor,
            exp_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.cov
    }

    pub fn exp_rate(&self) -> Option<T> {
        self.exp_rate
    }
}

/// How the adversary alters the measurement channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// The fed measurement is the attack process output, discarding `y`.
    ReplaceOutput,
}

/// Output-channel deception attack `v_t = Aa v_{t-1} + vhat_t` active from
/// `t_attack` onward.
#[derive(Debug, Clone)]
pub struct AttackModel<T> {
    pub aa: DMatrix<T>,
    pub noise: NoiseModel<T>,
    pub t_attack: usize,
    pub mode: AttackMode,
}

impl<T: Real> AttackModel<T> {
    pub fn new(aa: DMatrix<T>, noise: NoiseModel<T>, t_attack: usize) -> Result<Self> {
        if aa.nrows() != aa.ncols() {
            return Err(Error::Dimension {
                context: "attack matrix Aa",
                expected: aa.nrows(),
                got: aa.ncols(),
            });
        }
        if noise.dim() != aa.nrows() {
            return Err(Error::Dimension {
                context: "attack noise dimension",
                expected: aa.nrows(),
                got: noise.dim(),
            });
        }
        Ok(AttackModel {
            aa,
            noise,
            t_attack,
            mode: AttackMode::ReplaceOutput,
        })
    }
}

/// Observer gain with a verified stable error loop.
#[derive(Debug, Clone)]
pub struct ObserverGain<T> {
    l: DMatrix<T>,
}

impl<T: Real> ObserverGain<T> {
    /// Validates `spectral_radius(A - L C) < 1` before accepting `L`.
    pub fn new(l: DMatrix<T>, a: &DMatrix<T>, c: &DMatrix<T>) -> Result<Self> {
        if l.nrows() != a.nrows() || l.ncols() != c.nrows() {
            return Err(Error::Dimension {
                context: "observer gain shape",
                expected: a.nrows(),
                got: l.nrows(),
            });
        }
        let rho = spectral_radius(&(a - &l * c))?;
        if !(rho < T::one()) {
            return Err(Error::invalid(
                "observer gain",
                format!("spectral radius of A - LC is {}", rho.as_f64()),
            ));
        }
        Ok(ObserverGain { l })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.l
    }
}

/// Regime tag of a residual stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Nominal,
    Attacked,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Nominal => "nominal",
            Regime::Attacked => "attacked",
        }
    }
}

/// Time-ordered residual samples from one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStream<T> {
    pub samples: Vec<DVector<T>>,
    pub regime: Regime,
}

impl<T: Real> ResidualStream<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// CSV with header `t,r1,...,r{d_y},regime`; `t` counts from 0.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        for k in 1..=d {
            out.push_str(&format!(",r{k}"));
        }
        out.push_str(",regime\n");
        for (t, r) in self.samples.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in r.iter() {
                out.push_str(&format!(",{}", v.as_f64()));
            }
            out.push(',');
            out.push_str(self.regime.as_str());
            out.push('\n');
        }
        out
    }

    /// Parses the CSV produced by [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        let mut regime = Regime::Nominal;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: 0,
                msg: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let k = rec.len();
            if k < 3 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    msg: "expected t,r1,...,regime".into(),
                });
            }
            let coords = (1..k - 1)
                .map(|i| {
                    rec[i].trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_owned(),
                        line,
                        msg: format!("bad number {:?}", &rec[i]),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            regime = match rec[k - 1].trim() {
                "nominal" => Regime::Nominal,
                "attacked" => Regime::Attacked,
                other => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line,
                        msg: format!("unknown regime {other:?}"),
                    })
                }
            };
            samples.push(DVector::from_iterator(
                coords.len(),
                coords.into_iter().map(T::of),
            ));
        }
        if samples.is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                msg: "no residual rows".into(),
            });
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                msg: "inconsistent residual dimension".into(),
            });
        }
        Ok(ResidualStream { samples, regime })
    }
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            context: "spectral radius",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("spectral radius", "non-finite entry"));
    }
    if m.nrows() == 0 {
        return Ok(T::zero());
    }
    let eig = m.clone().complex_eigenvalues();
    Ok(eig
        .iter()
        .fold(T::zero(), |acc, z| acc.max((z.re * z.re + z.im * z.im).sqrt())))
}

/// Steady-state observer gain via the discrete Riccati fixed point
/// `P <- A P A' - A P C' (C P C' + Rv)^-1 C P A' + Qw`, iterated from
/// `P = Qw` until successive iterates differ by less than `tol` in
/// sup-norm. Returns `L = A P C' (C P C' + Rv)^-1` and guarantees
/// `spectral_radius(A - L C) < 1`.
pub fn steady_state_gain<T: Real>(
    model: &SystemModel<T>,
    qw: &DMatrix<T>,
    rv: &DMatrix<T>,
    tol: T,
) -> Result<ObserverGain<T>> {
    steady_state_gain_with_iters(model, qw, rv, tol, RICCATI_MAX_ITERS)
}

pub fn steady_state_gain_with_iters<T: Real>(
    model: &SystemModel<T>,
    qw: &DMatrix<T>,
    rv: &DMatrix<T>,
    tol: T,
    max_iters: usize,
) -> Result<ObserverGain<T>> {
    if !(tol > T::zero()) {
        return Err(Error::invalid("riccati tolerance", "must be > 0"));
    }
    let (a, c) = (&model.a, &model.c);
    let d_x = model.d_x();
    let d_y = model.d_y();
    if qw.nrows() != d_x || qw.ncols() != d_x {
        return Err(Error::Dimension {
            context: "Qw",
            expected: d_x,
            got: qw.nrows(),
        });
    }
    if rv.nrows() != d_y || rv.ncols() != d_y {
        return Err(Error::Dimension {
            context: "Rv",
            expected: d_y,
            got: rv.nrows(),
        });
    }
    let mut p = qw.clone();
    for _ in 0..max_iters {
        let innov = c * &p * c.transpose() + rv;
        let innov_inv = innov.try_inverse().ok_or_else(|| {
            Error::numerical("riccati iteration", "singular innovation covariance")
        })?;
        let apct = a * &p * c.transpose();
        let next = a * &p * a.transpose() - &apct * &innov_inv * apct.transpose() + qw;
        let diff = (&next - &p)
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        p = next;
        if diff < tol {
            let innov = c * &p * c.transpose() + rv;
            let innov_inv = innov.try_inverse().ok_or_else(|| {
                Error::numerical("riccati iteration", "singular innovation covariance")
            })?;
            let l = a * &p * c.transpose() * innov_inv;
            return ObserverGain::new(l, a, c);
        }
    }
    Err(Error::NoConvergence {
        what: "riccati iteration",
        iterations: max_iters,
    })
}

/// Draws one disturbance vector. The Gaussian part is `S z` with `z` i.i.d.
/// standard normal; the exponential corruption adds an independent
/// `Exp(rate)` draw to every coordinate. Normal and exponential variates
/// are generated in `f64` and cast, so a fixed generator state yields the
/// same stream for every `T`.
pub fn sample_noise<T: Real>(
    nm: &NoiseModel<T>,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<T>> {
    if dim != nm.dim() {
        return Err(Error::Dimension {
            context: "sample_noise",
            expected: nm.dim(),
            got: dim,
        });
    }
    let z = DVector::from_iterator(dim, (0..dim).map(|_| T::of(StandardNormal.sample(rng))));
    let mut x = &nm.factor * z;
    if let Some(rate) = nm.exp_rate {
        let exp = Exp::new(rate.as_f64())
            .map_err(|e| Error::invalid("noise model", format!("bad exp rate: {e}")))?;
        for i in 0..dim {
            x[i] += T::of(exp.sample(rng));
        }
    }
    Ok(x)
}

/// Simulates the nominal closed loop for `horizon` steps and returns the
/// residual stream `r_t = y_t - C xh_t`, `t = 0..horizon-1`.
pub fn simulate_nominal<T: Real>(
    model: &SystemModel<T>,
    gain: &ObserverGain<T>,
    noise: &NoiseModel<T>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ResidualStream<T>> {
    simulate(model, gain, noise, None, horizon, rng)
}

/// Simulates the attacked closed loop: before `t_attack` identical to
/// [`simulate_nominal`]; from `t_attack` onward the fed measurement is the
/// attack process output.
pub fn simulate_attacked<T: Real>(
    model: &SystemModel<T>,
    gain: &ObserverGain<T>,
    noise: &NoiseModel<T>,
    attack: &AttackModel<T>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ResidualStream<T>> {
    if attack.aa.nrows() != model.d_y() {
        return Err(Error::Dimension {
            context: "attack dimension",
            expected: model.d_y(),
            got: attack.aa.nrows(),
        });
    }
    simulate(model, gain, noise, Some(attack), horizon, rng)
}

fn simulate<T: Real>(
    model: &SystemModel<T>,
    gain: &ObserverGain<T>,
    noise: &NoiseModel<T>,
    attack: Option<&AttackModel<T>>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ResidualStream<T>> {
    if horizon == 0 {
        return Err(Error::invalid("simulation", "horizon must be >= 1"));
    }
    if noise.dim() != model.d_w() {
        return Err(Error::Dimension {
            context: "plant noise dimension",
            expected: model.d_w(),
            got: noise.dim(),
        });
    }
    let d_w = model.d_w();
    let d_y = model.d_y();
    let l = gain.matrix();
    let mut x = model.x0.clone();
    let mut xh = model.xhat0.clone();
    let mut v = DVector::<T>::zeros(d_y);
    let mut samples = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let w = sample_noise(noise, d_w, rng)?;
        let y = &model.c * &x + &model.f * &w;
        let fed = match attack {
            Some(atk) if t >= atk.t_attack => {
                let vhat = sample_noise(&atk.noise, d_y, rng)?;
                v = &atk.aa * &v + vhat;
                v.clone()
            }
            _ => y,
        };
        let r = &fed - &model.c * &xh;
        x = &model.a * &x + &model.e * &w;
        xh = &model.a * &xh + l * &r;
        samples.push(r);
    }
    Ok(ResidualStream {
        samples,
        regime: if attack.is_some() {
            Regime::Attacked
        } else {
            Regime::Nominal
        },
    })
}
