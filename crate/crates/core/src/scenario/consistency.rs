//! Monte-Carlo runner for the network consistency tests.
//!
//! Every run draws one truth (static or linear-Gaussian dynamic), lets each
//! node filter it from the shared prior with its own measurements, then
//! pushes estimates through the flow graph with the selected fuser; the
//! centralized baseline instead folds all raw measurements into one filter.
//! Consistency is judged at the sink: run-averaged reported covariance
//! against the mean-squared-error matrix of the sink estimate.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::{self, FusionMethod, LinearMeasurement};
use crate::gaussian::{symmetrize, GaussianEstimate};
use crate::metrics;
use crate::track::{kf_predict, kf_update, MotionModel};

use super::report::{FuserReport, MetricSeries, RunReport};
use super::{collect_runs, ConsistencyConfig, ScenarioConfig};

/// One run's outcome at the sink for one fuser.
struct SinkSample {
    error: DVector<f64>,
    reported: DMatrix<f64>,
    omega_sum: f64,
    omega_count: usize,
}

/// Measurements of all nodes over all steps, in generation order.
struct RunData {
    truth_final: DVector<f64>,
    /// `measurements[step][node]`.
    measurements: Vec<Vec<DVector<f64>>>,
}

/// Draw the truth trajectory and every node's measurements for one run.
/// Consumes the RNG identically for every fuser so the data is shared.
fn generate_run(c: &ConsistencyConfig, rng: &mut ChaCha8Rng) -> Result<RunData> {
    let prior = GaussianEstimate::new(c.prior_mean.clone(), c.prior_cov.clone())?;
    let mut truth = prior.sample(rng);
    let process = match &c.dynamics {
        Some(d) => Some(GaussianEstimate::new(DVector::zeros(truth.len()), d.q.clone())?),
        None => None,
    };
    let noise_models: Vec<GaussianEstimate> = c
        .nodes
        .iter()
        .map(|n| GaussianEstimate::new(DVector::zeros(n.r.nrows()), n.r.clone()))
        .collect::<Result<_>>()?;
    let mut measurements = Vec::with_capacity(c.steps);
    for _ in 0..c.steps {
        if let (Some(d), Some(w)) = (&c.dynamics, &process) {
            truth = &d.f * &truth + w.sample(rng);
        }
        let scan: Vec<DVector<f64>> = c
            .nodes
            .iter()
            .zip(&noise_models)
            .map(|(node, noise)| &node.h * &truth + noise.sample(rng))
            .collect();
        measurements.push(scan);
    }
    Ok(RunData {
        truth_final: truth,
        measurements,
    })
}

/// Run each node's local filter over the generated measurements.
fn local_estimates(c: &ConsistencyConfig, data: &RunData) -> Result<Vec<GaussianEstimate>> {
    let prior = GaussianEstimate::new(c.prior_mean.clone(), c.prior_cov.clone())?;
    let model = c
        .dynamics
        .as_ref()
        .map(|d| MotionModel::from_parts(d.f.clone(), d.q.clone(), 1.0))
        .transpose()?;
    let mut estimates = vec![prior; c.nodes.len()];
    for scan in &data.measurements {
        for (i, node) in c.nodes.iter().enumerate() {
            if let Some(m) = &model {
                estimates[i] = kf_predict(&estimates[i], m)?;
            }
            estimates[i] = kf_update(&estimates[i], &scan[i], &node.h, &node.r)?;
        }
    }
    Ok(estimates)
}

/// The common information shared by every pair of node estimates: the prior
/// propagated through the shared dynamics (process noise included, since
/// all nodes filter the same truth).
fn propagated_prior(c: &ConsistencyConfig) -> Result<GaussianEstimate> {
    let mut prior = GaussianEstimate::new(c.prior_mean.clone(), c.prior_cov.clone())?;
    if let Some(d) = &c.dynamics {
        let model = MotionModel::from_parts(d.f.clone(), d.q.clone(), 1.0)?;
        for _ in 0..c.steps {
            prior = kf_predict(&prior, &model)?;
        }
    }
    Ok(prior)
}

/// Fuse the local estimates through the flow graph; returns the sink
/// estimate and the optimized weights used along the way.
fn cascade(
    c: &ConsistencyConfig,
    fuser: FusionMethod,
    locals: &[GaussianEstimate],
    common: &GaussianEstimate,
) -> Result<(GaussianEstimate, Vec<f64>)> {
    let order = c.graph.topo_order()?;
    let sink = c.graph.sink()?;
    let mut fused: Vec<Option<GaussianEstimate>> = vec![None; locals.len()];
    let mut omegas = Vec::new();
    for node in order {
        let mut acc = locals[node].clone();
        for src in c.graph.inbound(node) {
            let incoming = fused[src]
                .as_ref()
                .ok_or_else(|| Error::InvalidScenario("flow graph order violated".into()))?;
            let result = match fuser {
                FusionMethod::KnownPrior => {
                    fusion::known_prior_fusion(&acc, incoming, Some(common))?
                }
                _ => fusion::fuse_optimized(&acc, incoming, fuser)?,
            };
            if let Some(w) = &result.weight {
                omegas.push(w.omega);
            }
            acc = result.estimate;
        }
        fused[node] = Some(acc);
    }
    Ok((fused[sink].take().expect("sink visited"), omegas))
}

/// Centralized baseline: one filter folds every node's raw measurements.
fn centralized_estimate(c: &ConsistencyConfig, data: &RunData) -> Result<GaussianEstimate> {
    let mut estimate = GaussianEstimate::new(c.prior_mean.clone(), c.prior_cov.clone())?;
    let model = c
        .dynamics
        .as_ref()
        .map(|d| MotionModel::from_parts(d.f.clone(), d.q.clone(), 1.0))
        .transpose()?;
    for scan in &data.measurements {
        if let Some(m) = &model {
            estimate = kf_predict(&estimate, m)?;
        }
        let measurements: Vec<LinearMeasurement> = c
            .nodes
            .iter()
            .zip(scan)
            .map(|(node, z)| LinearMeasurement {
                z: z.clone(),
                h: node.h.clone(),
                r: node.r.clone(),
            })
            .collect();
        estimate = fusion::centralized(&estimate, &measurements)?;
    }
    Ok(estimate)
}

pub(super) fn run_consistency(config: &ScenarioConfig) -> Result<RunReport> {
    let c = config
        .consistency
        .as_ref()
        .ok_or_else(|| Error::InvalidScenario("consistency section missing".into()))?;
    let common = propagated_prior(c)?;
    let mut fusers = Vec::with_capacity(config.fusers.len());
    let mut run_failures = 0;
    let mut first_failure = None;
    let mut completed = 0;
    for &fuser in &config.fusers {
        let started = Instant::now();
        let outcome = collect_runs(config.mc_runs, |run| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(run as u64);
            let data = generate_run(c, &mut rng)?;
            let (estimate, omegas) = match fuser {
                FusionMethod::Centralized => (centralized_estimate(c, &data)?, Vec::new()),
                _ => {
                    let locals = local_estimates(c, &data)?;
                    cascade(c, fuser, &locals, &common)?
                }
            };
            Ok(SinkSample {
                error: estimate.mean() - &data.truth_final,
                reported: estimate.cov().clone(),
                omega_sum: omegas.iter().sum(),
                omega_count: omegas.len(),
            })
        })?;
        let wall_clock_s = started.elapsed().as_secs_f64();
        run_failures += outcome.failures;
        if first_failure.is_none() {
            first_failure = outcome.first_failure.clone();
        }
        completed = outcome.ok.len();
        fusers.push(summarize(c, fuser, wall_clock_s, &outcome.ok)?);
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
    c: &ConsistencyConfig,
    fuser: FusionMethod,
    wall_clock_s: f64,
    samples: &[SinkSample],
) -> Result<FuserReport> {
    let dim = c.prior_mean.len();
    let m = samples.len();
    if m == 0 {
        return Err(Error::InvalidScenario("no successful runs".into()));
    }
    // Mean-squared-error matrix about the truth (bias counts against
    // consistency) and the run-averaged reported covariance.
    let mut mse = DMatrix::zeros(dim, dim);
    let mut reported = DMatrix::zeros(dim, dim);
    for s in samples {
        mse += &s.error * s.error.transpose();
        reported += &s.reported;
    }
    mse /= m as f64;
    reported /= m as f64;
    symmetrize(&mut mse);
    symmetrize(&mut reported);

    let errors: Vec<DVector<f64>> = samples.iter().map(|s| s.error.clone()).collect();
    let covs: Vec<DMatrix<f64>> = samples.iter().map(|s| s.reported.clone()).collect();
    let rmse = metrics::rmse_step(&errors);
    let nees = metrics::nees_step(&errors, &covs)?;
    let (nees_lo, nees_hi) = metrics::nees_bounds(m, dim, 0.95)?;

    let sample_trace = mse.trace();
    let reported_trace = reported.trace();
    let margin = (&reported - &mse)
        .symmetric_eigen()
        .eigenvalues
        .min()
        / reported_trace;

    let mut report = FuserReport::new(fuser);
    report.wall_clock_s = wall_clock_s;
    let step = c.steps;
    let time = c.steps as f64;
    let mut rmse_series = MetricSeries::new("rmse");
    rmse_series.push(step, time, rmse);
    let mut nees_series = MetricSeries::new("nees");
    nees_series.push_bounded(step, time, nees, nees_lo, nees_hi);
    report.series.push(rmse_series);
    report.series.push(nees_series);

    report.summary.insert("rmse".into(), rmse);
    report.summary.insert("mean_nees".into(), nees);
    report.summary.insert("sample_trace".into(), sample_trace);
    report
        .summary
        .insert("reported_trace".into(), reported_trace);
    report
        .summary
        .insert("trace_ratio".into(), sample_trace / reported_trace);
    report.summary.insert("consistency_margin".into(), margin);
    let omega_count: usize = samples.iter().map(|s| s.omega_count).sum();
    if omega_count > 0 {
        let omega_sum: f64 = samples.iter().map(|s| s.omega_sum).sum();
        report
            .summary
            .insert("mean_omega".into(), omega_sum / omega_count as f64);
    }

    if dim == 2 {
        let sample_est = GaussianEstimate::new(DVector::zeros(2), mse.clone())?;
        let reported_est = GaussianEstimate::new(DVector::zeros(2), reported.clone())?;
        report.ellipses.push(super::report::EllipseRecord {
            label: "sample".into(),
            ellipse: metrics::ellipse_from_cov(&sample_est, 0.865)?,
        });
        report.ellipses.push(super::report::EllipseRecord {
            label: "reported".into(),
            ellipse: metrics::ellipse_from_cov(&reported_est, 0.865)?,
        });
    }
    report.sample_cov = Some(mse);
    report.reported_cov = Some(reported);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(config: &mut ScenarioConfig, runs: usize) {
        config.mc_runs = runs;
    }

    #[test]
    fn reports_cover_every_requested_fuser() {
        let mut config = super::super::build_consistency1();
        small(&mut config, 50);
        let report = run_consistency(&config).unwrap();
        assert_eq!(report.fusers.len(), 5);
        assert_eq!(report.mc_runs_completed, 50);
        assert_eq!(report.run_failures, 0);
        for f in &report.fusers {
            assert!(f.summary.contains_key("trace_ratio"));
            assert!(f.sample_cov.is_some());
            assert_eq!(f.ellipses.len(), 2);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut config = super::super::build_consistency2();
        small(&mut config, 20);
        let a = run_consistency(&config).unwrap();
        let b = run_consistency(&config).unwrap();
        for (fa, fb) in a.fusers.iter().zip(&b.fusers) {
            assert_eq!(fa.summary.get("sample_trace"), fb.summary.get("sample_trace"));
            assert_eq!(fa.summary.get("mean_nees"), fb.summary.get("mean_nees"));
        }
    }

    #[test]
    fn centralized_is_consistent_and_naive_is_not_at_pilot_scale() {
        let mut config = super::super::build_consistency1();
        small(&mut config, 400);
        let report = run_consistency(&config).unwrap();
        let centralized = report.fuser_report(FusionMethod::Centralized).unwrap();
        let ratio = centralized.summary["trace_ratio"];
        assert!(
            (ratio - 1.0).abs() < 0.25,
            "centralized trace ratio {ratio} at pilot scale"
        );
        let naive = report.fuser_report(FusionMethod::Naive).unwrap();
        assert!(
            naive.summary["trace_ratio"] > 1.2,
            "naive trace ratio {} not clearly optimistic",
            naive.summary["trace_ratio"]
        );
    }

    #[test]
    fn conservative_fusers_report_more_than_the_error_shows() {
        let mut config = super::super::build_consistency2();
        small(&mut config, 400);
        let report = run_consistency(&config).unwrap();
        for fuser in [FusionMethod::Ci, FusionMethod::Ici, FusionMethod::HmdGa] {
            let f = report.fuser_report(fuser).unwrap();
            assert!(
                f.summary["trace_ratio"] < 1.1,
                "{fuser} trace ratio {}",
                f.summary["trace_ratio"]
            );
        }
    }

    #[test]
    fn known_prior_matches_centralized_in_the_static_star() {
        // Two nodes, shared static prior, identity measurements: dividing
        // the prior out once is exactly the centralized answer.
        let node = super::super::NodeSpec {
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 0.3,
        };
        let c = ConsistencyConfig {
            prior_mean: DVector::zeros(2),
            prior_cov: DMatrix::identity(2, 2) * 2.0,
            steps: 1,
            dynamics: None,
            nodes: vec![node.clone(), node],
            graph: super::super::NodeGraph::new(2, vec![(0, 1)]).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = generate_run(&c, &mut rng).unwrap();
        let locals = local_estimates(&c, &data).unwrap();
        let common = propagated_prior(&c).unwrap();
        let (fused, _) =
            cascade(&c, FusionMethod::KnownPrior, &locals, &common).unwrap();
        let central = centralized_estimate(&c, &data).unwrap();
        assert_relative_eq!(fused.mean(), central.mean(), epsilon = 1e-9);
        assert_relative_eq!(fused.cov(), central.cov(), epsilon = 1e-9);
    }
}
