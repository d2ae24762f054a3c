use serde::Serialize;

use otcps_core::bench::ModelArtifact;
use otcps_core::detector::{run_detector, ThresholdPolicy};
use otcps_core::error::{read_to_string, write_file};
use otcps_core::lin_sys::ResidualStream;
use otcps_core::{Error, Result, ScoreModel64};

use super::out_path;

pub fn run(
    out_dir: &str,
    model_path: &str,
    input_path: &str,
    h: Option<f64>,
    eta: Option<f64>,
    out_prefix: Option<&str>,
) -> Result<()> {
    let artifact = ModelArtifact::from_json(&read_to_string(model_path)?, model_path)?;
    let model: ScoreModel64 = artifact.to_score_model()?;
    let stream: ResidualStream<f64> =
        ResidualStream::from_csv(&read_to_string(input_path)?, input_path)?;
    if stream.dim() != model.dim() {
        return Err(Error::Config(format!(
            "model dimension {} does not match stream dimension {}",
            model.dim(),
            stream.dim()
        )));
    }
    let policy = match (h, eta) {
        (Some(h), None) => ThresholdPolicy::Fixed { h },
        (None, Some(eta)) => ThresholdPolicy::TailBound {
            eta,
            horizon: stream.len(),
        },
        (None, None) => return Err(Error::Config("give --h or --eta".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects --h with --eta"),
    };
    let run = run_detector(&model, &stream, &policy)?;
    if eta.is_some() {
        println!("calibrated h = {} at eta = {}", run.h, eta.unwrap());
    }
    match run.tau_det {
        Some(t) => println!("alarm at step {t}"),
        None => println!("no alarm within {} steps", stream.len()),
    }

    let prefix = out_path(out_dir, out_prefix, "detect");
    write_file(&format!("{prefix}.csv"), &run.to_csv())?;

    #[derive(Serialize)]
    struct Summary<'a> {
        tau_det: Option<usize>,
        h: f64,
        eta: Option<f64>,
        #[serde(rename = "V_t")]
        v_t: Option<f64>,
        model: &'a str,
        input: &'a str,
        config_digest: &'a str,
    }
    let summary = serde_json::to_string_pretty(&Summary {
        tau_det: run.tau_det,
        h: run.h,
        eta: run.eta,
        v_t: run.v_t,
        model: model_path,
        input: input_path,
        config_digest: &artifact.config_digest,
    })
    .map_err(|e| Error::Config(format!("serializing summary: {e}")))?;
    write_file(&format!("{prefix}.json"), &summary)?;
    Ok(())
}
