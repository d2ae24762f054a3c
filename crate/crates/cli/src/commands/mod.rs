pub mod bench;
pub mod detect;
pub mod export_mps;
pub mod simulate;
pub mod train;

use serde::Serialize;

use otcps_core::bench::Scenario;
use otcps_core::config::ScenarioSpec;
use otcps_core::error::{read_to_string, write_file};
use otcps_core::{Error, Result};

use crate::ScenarioArgs;

/// Resolves a scenario with the documented precedence:
/// flags > config file > preset defaults.
pub fn resolve_scenario(args: &ScenarioArgs) -> Result<Scenario<f64>> {
    let mut spec = match &args.config {
        Some(path) => ScenarioSpec::from_toml(&read_to_string(path)?, path)?,
        None => ScenarioSpec::default(),
    };
    if args.preset.is_some() {
        spec.preset = args.preset.clone();
    }
    let mut sc = spec.resolve()?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(h) = args.horizon {
        sc.horizon = h;
    }
    if let Some(t) = args.t_attack {
        sc.attack.t_attack = t;
    }
    if let Some(v) = args.n1 {
        sc.training.n1 = v;
    }
    if let Some(v) = args.n2 {
        sc.training.n2 = v;
    }
    if let Some(v) = args.eps1 {
        sc.training.eps1 = v;
    }
    if let Some(v) = args.eps2 {
        sc.training.eps2 = v;
    }
    if let Some(v) = args.bandwidth {
        sc.training.bandwidth = v;
    }
    if let Some(v) = args.clip {
        sc.training.clip = Some(v);
    }
    if args.no_clip {
        sc.training.clip = None;
    }
    if let Some(v) = args.margin {
        sc.training.margin = v;
    }
    sc.validate_components()?;
    Ok(sc)
}

/// Joins `out_dir` and a default file name unless an explicit path was
/// given.
pub fn out_path(out_dir: &str, explicit: Option<&str>, default_name: &str) -> String {
    match explicit {
        Some(p) => p.to_owned(),
        None => {
            let mut path = std::path::PathBuf::from(out_dir);
            path.push(default_name);
            path.to_string_lossy().into_owned()
        }
    }
}

/// Reproducibility sidecar written next to CSV outputs.
#[derive(Serialize)]
pub struct Meta<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub scenario: &'a str,
    pub config_digest: &'a str,
}

pub fn write_meta(path: &str, meta: &Meta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Config(format!("serializing metadata: {e}")))?;
    write_file(&format!("{path}.meta.json"), &text)
}
