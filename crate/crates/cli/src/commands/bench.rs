use otcps_core::bench::{
    add_far_curve, auto_h_grid, baseline_gaussian_cusum, estimate_zero_mean_covariance,
    train_scenario, IncrementSource, Scenario,
};
use otcps_core::error::write_file;
use otcps_core::{Error, Result};

use super::{out_path, resolve_scenario};
use crate::ScenarioArgs;

pub fn run(
    out_dir: &str,
    args: &ScenarioArgs,
    trials: usize,
    h_grid: &str,
    detector: &str,
    out_prefix: Option<&str>,
) -> Result<()> {
    let sc = resolve_scenario(args)?;
    let trained = train_scenario(&sc)?;
    let grid = parse_grid(h_grid, &sc, &trained.model)?;
    let prefix = out_path(out_dir, out_prefix, "bench");

    let emit = |source: &dyn DynSource| -> Result<()> {
        let report = source.curve(&sc, &grid, trials)?;
        let csv_path = format!("{prefix}-{}.csv", source.id());
        write_file(&csv_path, &report.to_csv())?;
        write_file(&format!("{prefix}-{}.json", source.id()), &report.to_json())?;
        println!(
            "{}: {} thresholds x {} trials -> {}",
            source.id(),
            grid.len(),
            trials,
            csv_path
        );
        Ok(())
    };

    if detector == "ot" || detector == "both" {
        emit(&OtSource(&trained.model))?;
    }
    if detector == "baseline" || detector == "both" {
        let sigma0 = estimate_zero_mean_covariance(&trained.x1);
        let sigma1 = estimate_zero_mean_covariance(&trained.x2);
        let baseline = baseline_gaussian_cusum(&sigma0, &sigma1)?;
        emit(&BaselineSource(&baseline))?;
    }
    Ok(())
}

/// Object-safe shim over the generic curve runner.
trait DynSource {
    fn id(&self) -> &'static str;
    fn curve(
        &self,
        sc: &Scenario<f64>,
        grid: &[f64],
        trials: usize,
    ) -> Result<otcps_core::bench::BenchReport>;
}

struct OtSource<'a>(&'a otcps_core::ScoreModel64);

impl DynSource for OtSource<'_> {
    fn id(&self) -> &'static str {
        IncrementSource::id(self.0)
    }

    fn curve(
        &self,
        sc: &Scenario<f64>,
        grid: &[f64],
        trials: usize,
    ) -> Result<otcps_core::bench::BenchReport> {
        add_far_curve(sc, self.0, grid, trials)
    }
}

struct BaselineSource<'a>(&'a otcps_core::bench::GaussianLlrCusum<f64>);

impl DynSource for BaselineSource<'_> {
    fn id(&self) -> &'static str {
        IncrementSource::id(self.0)
    }

    fn curve(
        &self,
        sc: &Scenario<f64>,
        grid: &[f64],
        trials: usize,
    ) -> Result<otcps_core::bench::BenchReport> {
        add_far_curve(sc, self.0, grid, trials)
    }
}

/// `auto`, `lo:hi:n` (log-spaced) or a comma-separated ascending list.
fn parse_grid(
    spec: &str,
    sc: &Scenario<f64>,
    model: &otcps_core::ScoreModel64,
) -> Result<Vec<f64>> {
    if spec == "auto" {
        let sigma = model.sigma_step().ok_or_else(|| {
            Error::Config("auto h-grid requires clipping or a sigma override".into())
        })?;
        return auto_h_grid(sigma, sc.horizon);
    }
    if let Some((range, n)) = spec.rsplit_once(':') {
        if let Some((lo, hi)) = range.split_once(':') {
            let lo: f64 = parse_num(lo)?;
            let hi: f64 = parse_num(hi)?;
            let n: usize = n
                .parse()
                .map_err(|_| Error::Config(format!("bad grid size {n:?}")))?;
            if !(lo > 0.0) || hi <= lo || n < 2 {
                return Err(Error::Config(
                    "grid needs 0 < lo < hi and at least 2 points".into(),
                ));
            }
            return Ok((0..n)
                .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
                .collect());
        }
    }
    let grid: Vec<f64> = spec
        .split(',')
        .map(parse_num)
        .collect::<Result<_>>()?;
    Ok(grid)
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad threshold {s:?}")))
}
