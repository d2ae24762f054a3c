use otcps_core::bench::{attacked_stream, nominal_stream};
use otcps_core::error::write_file;
use otcps_core::rng::StreamRole;
use otcps_core::Result;

use super::{out_path, resolve_scenario, write_meta, Meta};
use crate::ScenarioArgs;

pub fn run(out_dir: &str, args: &ScenarioArgs, attacked: bool, out: Option<&str>) -> Result<()> {
    let sc = resolve_scenario(args)?;
    let stream = if attacked {
        attacked_stream(&sc, 0, StreamRole::Adhoc, sc.horizon)?
    } else {
        nominal_stream(&sc, 0, StreamRole::Adhoc, sc.horizon)?
    };
    let path = out_path(out_dir, out, "residuals.csv");
    write_file(&path, &stream.to_csv())?;
    write_meta(
        &path,
        &Meta {
            command: "simulate",
            seed: sc.seed,
            scenario: &sc.name,
            config_digest: &sc.digest(),
        },
    )?;
    println!(
        "wrote {} {} residual samples (seed {}) to {}",
        stream.len(),
        stream.regime.as_str(),
        sc.seed,
        path
    );
    Ok(())
}
