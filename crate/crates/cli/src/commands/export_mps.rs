use otcps_core::bench::train_scenario;
use otcps_core::error::{read_to_string, write_file};
use otcps_core::lin_sys::ResidualStream;
use otcps_core::lp::write_mps;
use otcps_core::wcd::{build_lp, TrainingSet, WcdProblem};
use otcps_core::Result;

use super::{out_path, resolve_scenario};
use crate::ScenarioArgs;

pub fn run(
    out_dir: &str,
    args: &ScenarioArgs,
    x1: Option<&str>,
    x2: Option<&str>,
    out: Option<&str>,
) -> Result<()> {
    let sc = resolve_scenario(args)?;
    let ts = match (x1, x2) {
        (Some(p1), Some(p2)) => {
            let s1: ResidualStream<f64> =
                ResidualStream::from_csv(&read_to_string(p1)?, p1)?;
            let s2: ResidualStream<f64> =
                ResidualStream::from_csv(&read_to_string(p2)?, p2)?;
            TrainingSet::new(s1.samples, s2.samples)?
        }
        _ => {
            let trained = train_scenario(&sc)?;
            TrainingSet::new(trained.x1, trained.x2)?
        }
    };
    let prob = WcdProblem::new(&ts, sc.training.eps1, sc.training.eps2)?;
    let lp = build_lp(&prob);
    let text = write_mps(&lp)?;
    let path = out_path(out_dir, out, "problem.mps");
    write_file(&path, &text)?;
    println!(
        "wrote LP with {} variables and {} rows to {path}",
        lp.n_vars(),
        lp.n_rows()
    );
    Ok(())
}
