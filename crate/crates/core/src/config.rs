//! Structured-text (TOML) scenario specifications.
//!
//! A spec either names a `preset` or carries a full `[system]` block;
//! every other field overrides the base. Matrix literals are row-major
//! numeric lists shaped by the declared dimensions.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::bench::{preset, Scenario, TrainingConfig};
use crate::error::{Error, Result};
use crate::lin_sys::{steady_state_gain, AttackModel, NoiseModel, ObserverGain, SystemModel};

/// Top-level scenario spec; all override fields are optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub system: Option<SystemSpec>,
    pub noise: Option<NoiseSpec>,
    pub observer: Option<ObserverSpec>,
    pub attack: Option<AttackSpec>,
    pub training: Option<TrainingSpec>,
}

/// Full plant description: row-major matrix literals shaped by the
/// declared dimensions.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub d_x: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub d_w: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    pub xhat0: Option<Vec<f64>>,
}

/// Covariance as a full row-major matrix or a diagonal, plus an optional
/// exponential corruption rate.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub cov: Option<Vec<f64>>,
    pub diag: Option<Vec<f64>>,
    pub exp_rate: Option<f64>,
}

/// Explicit gain, or Riccati weights to synthesize one.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    pub l: Option<Vec<f64>>,
    pub qw_diag: Option<Vec<f64>>,
    pub rv_diag: Option<Vec<f64>>,
    pub riccati_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub aa: Option<Vec<f64>>,
    /// Shorthand for `aa = aa_scale * I`.
    pub aa_scale: Option<f64>,
    pub t_attack: Option<usize>,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub bandwidth: Option<f64>,
    pub clip: Option<f64>,
    /// Set true to disable clipping entirely.
    pub no_clip: Option<bool>,
    pub margin: Option<f64>,
    pub burn_in: Option<usize>,
    pub calib_len: Option<usize>,
}

fn shape(name: &'static str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Config(format!(
            "{name}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl NoiseSpec {
    fn resolve(&self, dim: usize, what: &'static str) -> Result<NoiseModel<f64>> {
        let cov = match (&self.cov, &self.diag) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(format!(
                    "{what}: give either cov or diag, not both"
                )))
            }
            (Some(c), None) => shape("noise cov", c, dim, dim)?,
            (None, Some(d)) => {
                if d.len() != dim {
                    return Err(Error::Config(format!(
                        "{what}: diag needs {dim} entries, got {}",
                        d.len()
                    )));
                }
                DMatrix::from_diagonal(&DVector::from_row_slice(d))
            }
            (None, None) => {
                return Err(Error::Config(format!("{what}: cov or diag required")))
            }
        };
        match self.exp_rate {
            Some(rate) => NoiseModel::gaussian_plus_exp(cov, rate),
            None => NoiseModel::gaussian(cov),
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str, path: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: e.to_string(),
        })
    }

    /// Builds the scenario: start from the preset (or the full `[system]`
    /// spec) and apply every override field.
    pub fn resolve(&self) -> Result<Scenario<f64>> {
        let mut sc: Scenario<f64> = match (&self.preset, &self.system) {
            (Some(p), _) => preset(p)?,
            (None, Some(sys)) => self.from_system(sys)?,
            (None, None) => {
                return Err(Error::Config(
                    "scenario spec needs a preset or a [system] block".into(),
                ))
            }
        };
        if let Some(name) = &self.name {
            sc.name = name.clone();
        }
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if let Some(h) = self.horizon {
            sc.horizon = h;
        }
        if self.preset.is_some() {
            if let Some(noise) = &self.noise {
                sc.nominal_noise = noise.resolve(sc.system.d_w(), "nominal noise")?;
            }
            if let Some(obs) = &self.observer {
                sc.observer = resolve_observer(obs, &sc.system, &sc.nominal_noise)?;
            }
            if let Some(atk) = &self.attack {
                sc.attack = apply_attack_spec(atk, &sc.attack, sc.system.d_y())?;
            }
        }
        if let Some(tr) = &self.training {
            let t = &mut sc.training;
            if let Some(v) = tr.n1 {
                t.n1 = v;
            }
            if let Some(v) = tr.n2 {
                t.n2 = v;
            }
            if let Some(v) = tr.eps1 {
                t.eps1 = v;
            }
            if let Some(v) = tr.eps2 {
                t.eps2 = v;
            }
            if let Some(v) = tr.bandwidth {
                t.bandwidth = v;
            }
            if let Some(v) = tr.clip {
                t.clip = Some(v);
            }
            if tr.no_clip == Some(true) {
                t.clip = None;
            }
            if let Some(v) = tr.margin {
                t.margin = v;
            }
            if let Some(v) = tr.burn_in {
                t.burn_in = v;
            }
            if let Some(v) = tr.calib_len {
                t.calib_len = v;
            }
        }
        sc.validate_components()?;
        Ok(sc)
    }

    fn from_system(&self, sys: &SystemSpec) -> Result<Scenario<f64>> {
        let a = shape("system a", &sys.a, sys.d_x, sys.d_x)?;
        let b = shape("system b", &sys.b, sys.d_x, sys.d_u)?;
        let c = shape("system c", &sys.c, sys.d_y, sys.d_x)?;
        let e = shape("system e", &sys.e, sys.d_x, sys.d_w)?;
        let f = shape("system f", &sys.f, sys.d_y, sys.d_w)?;
        let x0 = match &sys.x0 {
            Some(v) => DVector::from_row_slice(v),
            None => DVector::zeros(sys.d_x),
        };
        let xhat0 = match &sys.xhat0 {
            Some(v) => DVector::from_row_slice(v),
            None => DVector::zeros(sys.d_x),
        };
        let system = SystemModel::new(a, b, c, e, f, x0, xhat0)?;

        let noise_spec = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::Config("[noise] required with a full [system] spec".into()))?;
        let nominal_noise = noise_spec.resolve(sys.d_w, "nominal noise")?;

        let observer = resolve_observer(
            &self.observer.clone().unwrap_or_default(),
            &system,
            &nominal_noise,
        )?;

        let attack_spec = self
            .attack
            .as_ref()
            .ok_or_else(|| Error::Config("[attack] required with a full [system] spec".into()))?;
        let attack_noise = attack_spec
            .noise
            .as_ref()
            .ok_or_else(|| Error::Config("[attack.noise] required".into()))?
            .resolve(sys.d_y, "attack noise")?;
        let aa = resolve_aa(attack_spec, sys.d_y)?
            .ok_or_else(|| Error::Config("attack aa or aa_scale required".into()))?;
        let attack = AttackModel::new(aa, attack_noise, attack_spec.t_attack.unwrap_or(0))?;

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            system,
            observer,
            nominal_noise,
            attack,
            training: TrainingConfig {
                n1: 1,
                n2: 1,
                eps1: 1e-3,
                eps2: 1e-3,
                bandwidth: 0.5,
                clip: Some(2.0),
                margin: 0.05,
                burn_in: 200,
                calib_len: 500,
                surrogate_attack: None,
            },
            horizon: 500,
            seed: 0,
        })
    }
}

fn resolve_aa(spec: &AttackSpec, d_y: usize) -> Result<Option<DMatrix<f64>>> {
    match (&spec.aa, spec.aa_scale) {
        (Some(_), Some(_)) => Err(Error::Config(
            "attack: give either aa or aa_scale, not both".into(),
        )),
        (Some(m), None) => Ok(Some(shape("attack aa", m, d_y, d_y)?)),
        (None, Some(s)) => Ok(Some(DMatrix::identity(d_y, d_y) * s)),
        (None, None) => Ok(None),
    }
}

fn apply_attack_spec(
    spec: &AttackSpec,
    base: &AttackModel<f64>,
    d_y: usize,
) -> Result<AttackModel<f64>> {
    let aa = resolve_aa(spec, d_y)?.unwrap_or_else(|| base.aa.clone());
    let noise = match &spec.noise {
        Some(ns) => ns.resolve(d_y, "attack noise")?,
        None => base.noise.clone(),
    };
    AttackModel::new(aa, noise, spec.t_attack.unwrap_or(base.t_attack))
}

fn resolve_observer(
    spec: &ObserverSpec,
    system: &SystemModel<f64>,
    nominal_noise: &NoiseModel<f64>,
) -> Result<ObserverGain<f64>> {
    if let Some(l) = &spec.l {
        let l = shape("observer l", l, system.d_x(), system.d_y())?;
        return ObserverGain::new(l, &system.a, &system.c);
    }
    // Default Riccati weights from the noise channels, with a ridge on the
    // measurement side for invertibility.
    let qw = match &spec.qw_diag {
        Some(d) => DMatrix::from_diagonal(&DVector::from_row_slice(d)),
        None => &system.e * nominal_noise.covariance() * system.e.transpose(),
    };
    let rv = match &spec.rv_diag {
        Some(d) => DMatrix::from_diagonal(&DVector::from_row_slice(d)),
        None => {
            &system.f * nominal_noise.covariance() * system.f.transpose()
                + DMatrix::identity(system.d_y(), system.d_y()) * 1e-9
        }
    };
    steady_state_gain(system, &qw, &rv, spec.riccati_tol.unwrap_or(1e-12))
}
