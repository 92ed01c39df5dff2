//! Monte-Carlo runner for the three-radar surveillance scenario.
//!
//! Truth follows constant-rate great-arc paths between geodetic endpoints,
//! shared by every run. Each radar runs a PDA tracker over its own noisy,
//! cluttered scans; at every fusion instant the confirmed local tracks are
//! shipped to the fusion center, which predicts its persistent global
//! tracks forward, associates them per node with an optimal gated
//! assignment, and fuses matches with the selected rule. Per-target RMSE
//! and NEES are aggregated over runs, excluding instants where no global
//! track lies within the loss radius of the truth.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::assoc::{solve_assignment, t2t_cost, AssignmentProblem};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionMethod};
use crate::gaussian::GaussianEstimate;
use crate::geo::{geodetic_to_ecef, ecef_slerp, EnuFrame, Geodetic};
use crate::metrics;
use crate::track::{kf_predict, MotionModel, RangeBearingSensor, TrackManager};

use super::report::{FuserReport, MetricSeries, RunReport};
use super::{collect_runs, ScenarioConfig, SurveillanceConfig};

/// Scene data shared by every run: radar positions, truth states per scan,
/// and the fusion schedule.
struct Scene {
    radar_positions: Vec<DVector<f64>>,
    /// `truth[target][scan]` = `[east, north, v_east, v_north]`.
    truth: Vec<Vec<DVector<f64>>>,
    /// Scan indices at which the fusion center runs.
    fusion_scans: Vec<usize>,
    t2t_gate: f64,
    sigma_bearing_rad: f64,
}

fn build_scene(s: &SurveillanceConfig) -> Result<Scene> {
    let origin = Geodetic::from_degrees(s.radars[0].lat_deg, s.radars[0].lon_deg, 0.0)?;
    let frame = EnuFrame::new(origin);
    let radar_positions = s
        .radars
        .iter()
        .map(|r| {
            let g = Geodetic::from_degrees(r.lat_deg, r.lon_deg, 0.0)?;
            let enu = frame.geodetic_to_enu(&g);
            Ok(DVector::from_row_slice(&[enu[0], enu[1]]))
        })
        .collect::<Result<Vec<_>>>()?;
    let scans = s.scan_count();
    let mut truth = Vec::with_capacity(s.targets.len());
    for target in &s.targets {
        let a = geodetic_to_ecef(&Geodetic::from_degrees(
            target.start.lat_deg,
            target.start.lon_deg,
            0.0,
        )?);
        let b = geodetic_to_ecef(&Geodetic::from_degrees(
            target.end.lat_deg,
            target.end.lon_deg,
            0.0,
        )?);
        let positions: Vec<(f64, f64)> = (0..scans)
            .map(|k| {
                let frac = (k as f64 * s.scan_period_s) / s.duration_s;
                let enu = frame.ecef_to_enu(&ecef_slerp(&a, &b, frac));
                (enu[0], enu[1])
            })
            .collect();
        let states = (0..scans)
            .map(|k| {
                // Central differences except at the endpoints.
                let (lo, hi) = if k == 0 {
                    (0, 1)
                } else if k == scans - 1 {
                    (scans - 2, scans - 1)
                } else {
                    (k - 1, k + 1)
                };
                let dt = (hi - lo) as f64 * s.scan_period_s;
                DVector::from_row_slice(&[
                    positions[k].0,
                    positions[k].1,
                    (positions[hi].0 - positions[lo].0) / dt,
                    (positions[hi].1 - positions[lo].1) / dt,
                ])
            })
            .collect();
        truth.push(states);
    }
    let per_fusion = s.scans_per_fusion();
    let fusion_scans = (0..scans).filter(|k| k % per_fusion == 0).collect();
    let chi4 = ChiSquared::new(4.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Scene {
        radar_positions,
        truth,
        fusion_scans,
        t2t_gate: chi4.inverse_cdf(s.t2t_gate_mass),
        sigma_bearing_rad: s.sigma_bearing_deg.to_radians(),
    })
}

/// Confirmed local tracks of one radar at each fusion instant.
type LocalSnapshots = Vec<Vec<GaussianEstimate>>;

/// Run one radar's tracker over the whole scenario, snapshotting confirmed
/// tracks at fusion instants.
fn run_local_tracker(
    s: &SurveillanceConfig,
    scene: &Scene,
    radar: usize,
    seed: u64,
    run: usize,
) -> Result<LocalSnapshots> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run as u64) * 16 + radar as u64 + 1);
    let sensor = RangeBearingSensor::new(
        scene.radar_positions[radar].clone(),
        s.sigma_range_m,
        scene.sigma_bearing_rad,
        s.coverage_m,
        s.detection_probability,
        s.clutter_density,
    )?;
    let model = MotionModel::ncv(s.scan_period_s, s.process_noise_intensity);
    let mut manager = TrackManager::new(s.gate_mass, s.max_init_speed_m_s);
    let per_fusion = s.scans_per_fusion();
    let mut snapshots = Vec::with_capacity(scene.fusion_scans.len());
    let scans = s.scan_count();
    let mut truths_at = Vec::with_capacity(scene.truth.len());
    for k in 0..scans {
        truths_at.clear();
        for target in &scene.truth {
            truths_at.push(target[k].clone());
        }
        let scan = sensor.generate_scan(&truths_at, &mut rng);
        let time = k as f64 * s.scan_period_s;
        manager.step(time, &scan, &sensor, &model)?;
        if k % per_fusion == 0 {
            snapshots.push(
                manager
                    .confirmed_tracks()
                    .map(|t| t.estimate.clone())
                    .collect(),
            );
        }
    }
    Ok(snapshots)
}

struct GlobalTrack {
    estimate: GaussianEstimate,
    last_time: f64,
    misses: usize,
}

/// One (target, fusion-instant) observation from one run.
#[derive(Clone, Copy)]
struct Observation {
    pos_err_sq: f64,
    vel_err_sq: f64,
    nees: f64,
    cov_trace: f64,
}

struct FcRunResult {
    /// `cells[target][instant]`: `None` when the target was lost.
    cells: Vec<Vec<Option<Observation>>>,
    omega_sum: f64,
    omega_count: usize,
    fc_seconds: f64,
}

/// Run the fusion center for one fuser over one run's local snapshots.
fn run_fusion_center(
    s: &SurveillanceConfig,
    scene: &Scene,
    locals: &[LocalSnapshots],
    fuser: FusionMethod,
) -> Result<FcRunResult> {
    let started = Instant::now();
    let mut globals: Vec<GlobalTrack> = Vec::new();
    let n_targets = scene.truth.len();
    let mut cells = vec![vec![None; scene.fusion_scans.len()]; n_targets];
    let mut omega_sum = 0.0;
    let mut omega_count = 0usize;
    for (fi, &k) in scene.fusion_scans.iter().enumerate() {
        let time = k as f64 * s.scan_period_s;
        for g in &mut globals {
            if time > g.last_time {
                let model = MotionModel::ncv(time - g.last_time, s.process_noise_intensity);
                g.estimate = kf_predict(&g.estimate, &model)?;
                g.last_time = time;
            }
        }
        let mut associated = vec![false; globals.len()];
        for snapshots in locals {
            let tracks = &snapshots[fi];
            if tracks.is_empty() {
                continue;
            }
            if globals.is_empty() {
                for local in tracks {
                    globals.push(GlobalTrack {
                        estimate: local.clone(),
                        last_time: time,
                        misses: 0,
                    });
                    associated.push(true);
                }
                continue;
            }
            let mut cost = DMatrix::zeros(globals.len(), tracks.len());
            for (gi, g) in globals.iter().enumerate() {
                for (li, local) in tracks.iter().enumerate() {
                    cost[(gi, li)] = t2t_cost(&g.estimate, local)?;
                }
            }
            let matching = solve_assignment(&AssignmentProblem {
                cost,
                gate: scene.t2t_gate,
            })?;
            for &(gi, li) in &matching.pairs {
                let fused = fusion::fuse_optimized(&globals[gi].estimate, &tracks[li], fuser)?;
                if let Some(w) = &fused.weight {
                    omega_sum += w.omega;
                    omega_count += 1;
                }
                globals[gi].estimate = fused.estimate;
                associated[gi] = true;
            }
            for &li in &matching.unmatched_cols {
                globals.push(GlobalTrack {
                    estimate: tracks[li].clone(),
                    last_time: time,
                    misses: 0,
                });
                associated.push(true);
            }
        }
        // Reset or bump miss counts; drop tracks that coasted too long.
        let mut kept = Vec::with_capacity(globals.len());
        for (mut g, was_associated) in globals.into_iter().zip(associated) {
            if was_associated {
                g.misses = 0;
                kept.push(g);
            } else {
                g.misses += 1;
                if g.misses <= s.global_coast_limit {
                    kept.push(g);
                }
            }
        }
        globals = kept;
        for (target, states) in scene.truth.iter().enumerate() {
            let truth = &states[k];
            let mut best: Option<(f64, &GlobalTrack)> = None;
            for g in &globals {
                let dx = g.estimate.mean()[0] - truth[0];
                let dy = g.estimate.mean()[1] - truth[1];
                let d = (dx * dx + dy * dy).sqrt();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, g));
                }
            }
            if let Some((d, g)) = best {
                if d <= s.loss_radius_m {
                    let e = g.estimate.mean() - truth;
                    let info = g.estimate.information();
                    let nees = (e.transpose() * info * &e)[(0, 0)];
                    cells[target][fi] = Some(Observation {
                        pos_err_sq: e[0] * e[0] + e[1] * e[1],
                        vel_err_sq: e[2] * e[2] + e[3] * e[3],
                        nees,
                        cov_trace: g.estimate.cov().trace(),
                    });
                }
            }
        }
    }
    Ok(FcRunResult {
        cells,
        omega_sum,
        omega_count,
        fc_seconds: started.elapsed().as_secs_f64(),
    })
}

pub(super) fn run_surveillance(config: &ScenarioConfig) -> Result<RunReport> {
    let s = config
        .surveillance
        .as_ref()
        .ok_or_else(|| Error::InvalidScenario("surveillance section missing".into()))?;
    let scene = build_scene(s)?;
    let fusers = config.fusers.clone();
    // One run: local tracking once, then every fuser consumes the same
    // local tracks through its own persistent fusion center.
    let outcome = collect_runs(config.mc_runs, |run| {
        let locals: Vec<LocalSnapshots> = (0..s.radars.len())
            .map(|radar| run_local_tracker(s, &scene, radar, config.seed, run))
            .collect::<Result<_>>()?;
        fusers
            .iter()
            .map(|&fuser| run_fusion_center(s, &scene, &locals, fuser))
            .collect::<Result<Vec<FcRunResult>>>()
    })?;
    let mut reports = Vec::with_capacity(fusers.len());
    for (fx, &fuser) in fusers.iter().enumerate() {
        let per_run: Vec<&FcRunResult> = outcome.ok.iter().map(|runs| &runs[fx]).collect();
        reports.push(summarize(s, &scene, fuser, &per_run)?);
    }
    Ok(RunReport {
        config: config.clone(),
        fusers: reports,
        run_failures: outcome.failures,
        first_failure: outcome.first_failure,
        mc_runs_completed: outcome.ok.len(),
    })
}

fn summarize(
    s: &SurveillanceConfig,
    scene: &Scene,
    fuser: FusionMethod,
    runs: &[&FcRunResult],
) -> Result<FuserReport> {
    if runs.is_empty() {
        return Err(Error::InvalidScenario("no successful runs".into()));
    }
    let mut report = FuserReport::new(fuser);
    report.wall_clock_s = runs.iter().map(|r| r.fc_seconds).sum();
    let omega_count: usize = runs.iter().map(|r| r.omega_count).sum();
    if omega_count > 0 {
        let omega_sum: f64 = runs.iter().map(|r| r.omega_sum).sum();
        report
            .summary
            .insert("mean_omega".into(), omega_sum / omega_count as f64);
    }
    let mut nees_avg_accum = Vec::new();
    let mut bound_cells = 0usize;
    let mut bound_violations = 0usize;
    for (target_idx, target) in s.targets.iter().enumerate() {
        if s.excluded_targets.contains(&target.id) {
            continue;
        }
        let tag = format!("t{:02}", target.id);
        let mut rmse_pos = MetricSeries::new(format!("rmse_pos_{tag}"));
        let mut rmse_vel = MetricSeries::new(format!("rmse_vel_{tag}"));
        let mut nees_series = MetricSeries::new(format!("nees_{tag}"));
        let mut trace_series = MetricSeries::new(format!("cov_trace_{tag}"));
        let mut covered = 0usize;
        let mut total = 0usize;
        for (fi, &k) in scene.fusion_scans.iter().enumerate() {
            let time = k as f64 * s.scan_period_s;
            let observations: Vec<Observation> = runs
                .iter()
                .filter_map(|r| r.cells[target_idx][fi])
                .collect();
            total += runs.len();
            covered += observations.len();
            if observations.is_empty() {
                continue;
            }
            let m = observations.len();
            let pos =
                (observations.iter().map(|o| o.pos_err_sq).sum::<f64>() / m as f64).sqrt();
            let vel =
                (observations.iter().map(|o| o.vel_err_sq).sum::<f64>() / m as f64).sqrt();
            let nees = observations.iter().map(|o| o.nees).sum::<f64>() / m as f64;
            let trace = observations.iter().map(|o| o.cov_trace).sum::<f64>() / m as f64;
            let (lo, hi) = metrics::nees_bounds(m, 4, 0.95)?;
            bound_cells += 1;
            if nees > hi {
                bound_violations += 1;
            }
            rmse_pos.push(k, time, pos);
            rmse_vel.push(k, time, vel);
            nees_series.push_bounded(k, time, nees, lo, hi);
            trace_series.push(k, time, trace);
        }
        if let Some(avg) = rmse_pos.time_average() {
            report.summary.insert(format!("rmse_avg_{tag}"), avg);
        }
        if let Some(avg) = nees_series.time_average() {
            report.summary.insert(format!("nees_avg_{tag}"), avg);
            nees_avg_accum.push(avg);
        }
        if let Some(avg) = trace_series.time_average() {
            report.summary.insert(format!("cov_trace_avg_{tag}"), avg);
        }
        report.summary.insert(
            format!("covered_frac_{tag}"),
            covered as f64 / total.max(1) as f64,
        );
        report.series.push(rmse_pos);
        report.series.push(rmse_vel);
        report.series.push(nees_series);
        report.series.push(trace_series);
    }
    if !nees_avg_accum.is_empty() {
        report.summary.insert(
            "nees_avg_all".into(),
            nees_avg_accum.iter().sum::<f64>() / nees_avg_accum.len() as f64,
        );
    }
    if bound_cells > 0 {
        report.summary.insert(
            "nees_frac_above_upper".into(),
            bound_violations as f64 / bound_cells as f64,
        );
    }
    Ok(report)
}
