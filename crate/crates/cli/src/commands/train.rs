use otcps_core::bench::{train_scenario, ModelArtifact};
use otcps_core::detector::fit_drift_offset;
use otcps_core::error::{read_to_string, write_file};
use otcps_core::lin_sys::ResidualStream;
use otcps_core::wcd::{solve_wcd, TrainingSet, WcdArtifact, WcdProblem};
use otcps_core::{Result, ScoreModel64};

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
    let path = out_path(out_dir, out, "model.json");

    let artifact = match (x1, x2) {
        (Some(p1), Some(p2)) => train_from_csv(&sc, p1, p2)?,
        _ => {
            let trained = train_scenario(&sc)?;
            ModelArtifact::from_trained(&sc, &trained)
        }
    };
    write_file(&path, &artifact.to_json())?;
    println!(
        "V* = {:.6}  tv* = {:.6}  minmax risk = {:.6}",
        artifact.wcd.v_star, artifact.wcd.tv_star, artifact.wcd.minmax_risk
    );
    println!("wrote model (seed {}) to {path}", artifact.seed);
    Ok(())
}

/// Training from user-supplied residual CSV files. The drift offset is
/// fitted on the nominal training scores themselves since no simulator is
/// available for a fresh calibration stream.
fn train_from_csv(
    sc: &otcps_core::Scenario64,
    x1_path: &str,
    x2_path: &str,
) -> Result<ModelArtifact> {
    let s1: ResidualStream<f64> = ResidualStream::from_csv(&read_to_string(x1_path)?, x1_path)?;
    let s2: ResidualStream<f64> = ResidualStream::from_csv(&read_to_string(x2_path)?, x2_path)?;
    let ts = TrainingSet::new(s1.samples.clone(), s2.samples)?;
    let tr = &sc.training;
    let problem = WcdProblem::new(&ts, tr.eps1, tr.eps2)?;
    let solution = solve_wcd(&problem, 1e-8)?;
    let raw = ScoreModel64::new(
        problem.support().points.clone(),
        solution.p1.clone(),
        solution.p2.clone(),
        tr.bandwidth,
        tr.clip,
        0.0,
        None,
    )?;
    let h0: Vec<f64> = s1
        .samples
        .iter()
        .map(|z| raw.score(z))
        .collect::<Result<_>>()?;
    let drift_offset = fit_drift_offset(&h0, tr.margin)?;
    Ok(ModelArtifact {
        wcd: WcdArtifact::from_solution(&problem, &solution, tr.bandwidth),
        bandwidth: tr.bandwidth,
        clip: tr.clip,
        drift_offset,
        knn_truncation: None,
        n1: ts.x1().len(),
        n2: ts.x2().len(),
        surrogate_attack: None,
        scenario: format!("csv:{x1_path}+{x2_path}"),
        seed: sc.seed,
        config_digest: sc.digest(),
    })
}
