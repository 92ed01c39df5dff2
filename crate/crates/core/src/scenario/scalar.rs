//! Scalar random-walk experiment: at every step each fuser combines the
//! one-step prediction with the current measurement, with process and
//! measurement noise drawn jointly correlated, and the optimized fusion
//! weight is traced. The prediction always carries more variance than the
//! measurement here, which drives the degenerate endpoint weights of the
//! convex-combination fusers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::{self, FusionMethod};
use crate::gaussian::GaussianEstimate;
use crate::metrics;

use super::report::{FuserReport, MetricSeries, RunReport};
use super::{collect_runs, ScalarConfig, ScenarioConfig};

/// Per-step record of one run.
struct StepSample {
    omega: f64,
    error: f64,
    reported_var: f64,
}

fn run_one(
    s: &ScalarConfig,
    fuser: FusionMethod,
    seed: u64,
    run: usize,
) -> Result<Vec<StepSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut est = GaussianEstimate::scalar(s.prior_mean, s.prior_var)?;
    let mut truth = s.prior_mean;
    // Cholesky factor of the joint (process, measurement) noise covariance.
    let tail = (1.0 - s.rho * s.rho).max(0.0).sqrt();
    let mut steps = Vec::with_capacity(s.steps);
    for _ in 0..s.steps {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let w = s.process_noise_var.sqrt() * a;
        let v = s.meas_noise_var.sqrt() * (s.rho * a + tail * b);
        truth += w;
        let z = truth + v;
        let prediction =
            GaussianEstimate::scalar(est.mean()[0], est.cov()[(0, 0)] + s.process_noise_var)?;
        let measurement = GaussianEstimate::scalar(z, s.meas_noise_var)?;
        let fused = fusion::fuse_optimized(&prediction, &measurement, fuser)?;
        est = fused.estimate;
        steps.push(StepSample {
            omega: fused.weight.map(|w| w.omega).unwrap_or(f64::NAN),
            error: est.mean()[0] - truth,
            reported_var: est.cov()[(0, 0)],
        });
    }
    Ok(steps)
}

pub(super) fn run_scalar(config: &ScenarioConfig) -> Result<RunReport> {
    let s = config
        .scalar
        .as_ref()
        .ok_or_else(|| Error::InvalidScenario("scalar section missing".into()))?;
    let mut fusers = Vec::with_capacity(config.fusers.len());
    let mut run_failures = 0;
    let mut first_failure = None;
    let mut completed = 0;
    for &fuser in &config.fusers {
        let started = Instant::now();
        let outcome = collect_runs(config.mc_runs, |run| run_one(s, fuser, config.seed, run))?;
        let wall_clock_s = started.elapsed().as_secs_f64();
        run_failures += outcome.failures;
        if first_failure.is_none() {
            first_failure = outcome.first_failure.clone();
        }
        completed = outcome.ok.len();
        fusers.push(summarize(s, fuser, wall_clock_s, &outcome.ok)?);
    }
    Ok(RunReport {
        config: config.clone(),
        fusers,
        run_failures,
        first_failure,
        mc_runs_completed: completed,
    })
}

fn summarize(
    s: &ScalarConfig,
    fuser: FusionMethod,
    wall_clock_s: f64,
    runs: &[Vec<StepSample>],
) -> Result<FuserReport> {
    let m = runs.len();
    if m == 0 {
        return Err(Error::InvalidScenario("no successful runs".into()));
    }
    let mut report = FuserReport::new(fuser);
    report.wall_clock_s = wall_clock_s;
    let mut omega_series = MetricSeries::new("omega");
    let mut rmse_series = MetricSeries::new("rmse");
    let mut nees_series = MetricSeries::new("nees");
    let (nees_lo, nees_hi) = metrics::nees_bounds(m, 1, 0.95)?;
    let mut omega_min = f64::INFINITY;
    let mut omega_max = f64::NEG_INFINITY;
    let mut omega_total = 0.0;
    let mut nees_total = 0.0;
    let mut rmse_last = 0.0;
    for k in 0..s.steps {
        let errors: Vec<DVector<f64>> = runs
            .iter()
            .map(|r| DVector::from_element(1, r[k].error))
            .collect();
        let covs: Vec<DMatrix<f64>> = runs
            .iter()
            .map(|r| DMatrix::from_element(1, 1, r[k].reported_var))
            .collect();
        let omega_mean =
            runs.iter().map(|r| r[k].omega).sum::<f64>() / m as f64;
        for r in runs {
            omega_min = omega_min.min(r[k].omega);
            omega_max = omega_max.max(r[k].omega);
        }
        omega_total += omega_mean;
        let rmse = metrics::rmse_step(&errors);
        let nees = metrics::nees_step(&errors, &covs)?;
        nees_total += nees;
        rmse_last = rmse;
        let time = (k + 1) as f64;
        omega_series.push(k + 1, time, omega_mean);
        rmse_series.push(k + 1, time, rmse);
        nees_series.push_bounded(k + 1, time, nees, nees_lo, nees_hi);
    }
    report.series.push(omega_series);
    report.series.push(rmse_series);
    report.series.push(nees_series);
    report
        .summary
        .insert("mean_omega".into(), omega_total / s.steps as f64);
    report.summary.insert("omega_min".into(), omega_min);
    report.summary.insert("omega_max".into(), omega_max);
    report
        .summary
        .insert("mean_nees".into(), nees_total / s.steps as f64);
    report.summary.insert("rmse_final".into(), rmse_last);
    Ok(report)
}
