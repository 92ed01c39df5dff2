//! Estimation-quality metrics (RMSE, NEES with chi-square bounds,
//! covariance ellipses) and relative-runtime benchmarking of the fusers.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fusion::{self, FusionMethod, WeightObjective};
use crate::gaussian::{spd_inverse, GaussianEstimate};

/// Root-mean-square norm of per-run error vectors at one time step.
pub fn rmse_step(errors: &[DVector<f64>]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let sum: f64 = errors.iter().map(|e| e.norm_squared()).sum();
    (sum / errors.len() as f64).sqrt()
}

/// Mean normalized estimation error squared over runs at one time step:
/// `(1/M) sum e^T Cov^-1 e`.
pub fn nees_step(errors: &[DVector<f64>], covariances: &[DMatrix<f64>]) -> Result<f64> {
    if errors.len() != covariances.len() {
        return Err(Error::DimensionMismatch {
            context: "nees_step",
            left: errors.len(),
            right: covariances.len(),
        });
    }
    if errors.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (e, cov) in errors.iter().zip(covariances) {
        let inv = spd_inverse(cov)?;
        sum += (e.transpose() * inv * e)[(0, 0)];
    }
    Ok(sum / errors.len() as f64)
}

/// Two-sided NEES acceptance bounds at the given probability mass: the
/// chi-square quantiles with `runs * dim` degrees of freedom, divided by
/// the run count.
pub fn nees_bounds(runs: usize, dim: usize, mass: f64) -> Result<(f64, f64)> {
    if runs == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "NEES bounds need positive runs and dimension".into(),
        ));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bound mass {mass} outside (0, 1)"
        )));
    }
    let dof = (runs * dim) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let tail = (1.0 - mass) / 2.0;
    Ok((
        chi.inverse_cdf(tail) / runs as f64,
        chi.inverse_cdf(1.0 - tail) / runs as f64,
    ))
}

/// A confidence ellipse of a 2-D Gaussian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipseSummary {
    pub center: DVector<f64>,
    /// Semi-major axis, meters (or state units).
    pub semi_major: f64,
    /// Semi-minor axis.
    pub semi_minor: f64,
    /// Orientation of the major axis in `[-pi/2, pi/2)`.
    pub orientation: f64,
    pub confidence: f64,
}

/// Extract the confidence ellipse of a 2-D estimate: axes are
/// `sqrt(quantile * eigenvalue)` with the chi-square(2) quantile at the
/// requested mass.
pub fn ellipse_from_cov(est: &GaussianEstimate, confidence: f64) -> Result<EllipseSummary> {
    if est.dim() != 2 {
        return Err(Error::UnsupportedDimension(est.dim()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ellipse confidence {confidence} outside (0, 1)"
        )));
    }
    // For 2 degrees of freedom the quantile has the closed form
    // -2 ln(1 - confidence).
    let quantile = -2.0 * (1.0 - confidence).ln();
    let eig = est.cov().clone().symmetric_eigen();
    let (mut major, mut minor) = (0, 1);
    if eig.eigenvalues[minor] > eig.eigenvalues[major] {
        std::mem::swap(&mut major, &mut minor);
    }
    let v = eig.eigenvectors.column(major);
    let mut orientation = v[1].atan2(v[0]);
    // An ellipse's orientation is defined modulo pi.
    if orientation >= std::f64::consts::FRAC_PI_2 {
        orientation -= std::f64::consts::PI;
    } else if orientation < -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    }
    Ok(EllipseSummary {
        center: est.mean().clone(),
        semi_major: (quantile * eig.eigenvalues[major]).sqrt(),
        semi_minor: (quantile * eig.eigenvalues[minor]).sqrt(),
        orientation,
        confidence,
    })
}

/// Timed result of one fuser in a benchmark sweep.
#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub method: FusionMethod,
    pub median: Duration,
    /// Median wall-clock normalized to the naive fuser.
    pub relative: f64,
}

/// Minimum fusion calls per fuser for a reportable benchmark.
pub const MIN_BENCH_CALLS: usize = 10_000;

/// Benchmark the pairwise fusers on the given estimate pairs.
///
/// Each fuser (with its weight optimization, where it has one) is warmed up
/// and then timed over `rounds` batches covering at least
/// [`MIN_BENCH_CALLS`] calls; the per-batch medians are normalized to the
/// naive fuser. Ratios are hardware-dependent and reported, not asserted.
pub fn bench_fusers(
    pairs: &[(GaussianEstimate, GaussianEstimate)],
    calls_per_fuser: usize,
) -> Result<Vec<BenchEntry>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs input pairs".into()));
    }
    if calls_per_fuser < MIN_BENCH_CALLS {
        return Err(Error::InvalidArgument(format!(
            "benchmark needs at least {MIN_BENCH_CALLS} calls per fuser, got {calls_per_fuser}"
        )));
    }
    let methods = [
        FusionMethod::Naive,
        FusionMethod::Ci,
        FusionMethod::Ici,
        FusionMethod::HmdGa,
    ];
    let rounds = 11;
    let per_round = calls_per_fuser.div_ceil(rounds);
    let mut medians = Vec::with_capacity(methods.len());
    for method in methods {
        let run_batch = |calls: usize| -> Result<f64> {
            // Fold a result component into a sink so the optimizer cannot
            // drop the fusion call.
            let mut sink = 0.0;
            for k in 0..calls {
                let (e1, e2) = &pairs[k % pairs.len()];
                let fused = match method {
                    FusionMethod::Naive => fusion::naive(e1, e2)?,
                    method => {
                        let w =
                            fusion::optimize_weight(e1, e2, method, WeightObjective::Trace)?;
                        match method {
                            FusionMethod::Ci => fusion::ci(e1, e2, w)?,
                            FusionMethod::Ici => fusion::ici(e1, e2, w)?,
                            _ => fusion::hmd_ga(e1, e2, w)?,
                        }
                    }
                };
                sink += fused.estimate.cov()[(0, 0)];
            }
            Ok(sink)
        };
        run_batch(per_round.min(1000))?; // warm-up
        let mut times = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let start = Instant::now();
            let sink = run_batch(per_round)?;
            let elapsed = start.elapsed();
            std::hint::black_box(sink);
            times.push(elapsed);
        }
        times.sort();
        medians.push((method, times[rounds / 2]));
    }
    let naive = medians[0].1.as_secs_f64();
    Ok(medians
        .into_iter()
        .map(|(method, median)| BenchEntry {
            method,
            median,
            relative: median.as_secs_f64() / naive,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_zero_for_perfect_estimates() {
        let errors = vec![DVector::zeros(2); 5];
        assert_eq!(rmse_step(&errors), 0.0);
    }

    #[test]
    fn rmse_hand_value() {
        let errors = vec![
            DVector::from_row_slice(&[3.0, 4.0]),
            DVector::from_row_slice(&[0.0, 0.0]),
        ];
        assert_relative_eq!(rmse_step(&errors), 12.5_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rmse_grows_when_adding_a_worse_run() {
        let mut errors = vec![DVector::from_row_slice(&[1.0, 0.0]); 4];
        let before = rmse_step(&errors);
        errors.push(DVector::from_row_slice(&[10.0, 0.0]));
        assert!(rmse_step(&errors) > before);
    }

    #[test]
    fn rmse_invariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let errors: Vec<DVector<f64>> = (0..50)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0)))
            .collect();
        let angle: f64 = 0.7;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let rotated: Vec<DVector<f64>> = errors.iter().map(|e| &rot * e).collect();
        assert_relative_eq!(rmse_step(&errors), rmse_step(&rotated), epsilon = 1e-12);
    }

    #[test]
    fn nees_of_consistent_estimator_is_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]);
        let est = GaussianEstimate::new(DVector::zeros(2), cov.clone()).unwrap();
        let runs = 5000;
        let errors: Vec<DVector<f64>> = (0..runs).map(|_| est.sample(&mut rng)).collect();
        let covs = vec![cov; runs];
        let nees = nees_step(&errors, &covs).unwrap();
        assert!((nees - 2.0).abs() < 0.1, "mean NEES {nees}");
        // Halving the reported covariance doubles the statistic.
        let halved: Vec<DMatrix<f64>> = covs.iter().map(|c| c * 0.5).collect();
        let doubled = nees_step(&errors, &halved).unwrap();
        assert_relative_eq!(doubled, 2.0 * nees, epsilon = 1e-9);
    }

    #[test]
    fn nees_bounds_reference_values() {
        let (lo, hi) = nees_bounds(200, 2, 0.95).unwrap();
        assert!((lo - 1.73).abs() < 0.01, "lower bound {lo}");
        assert!((hi - 2.29).abs() < 0.01, "upper bound {hi}");
    }

    #[test]
    fn consistent_estimator_stays_within_bounds_across_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, -0.3, -0.3, 1.1]);
        let est = GaussianEstimate::new(DVector::zeros(2), cov.clone()).unwrap();
        let runs = 500;
        let steps = 50;
        let (lo, hi) = nees_bounds(runs, 2, 0.95).unwrap();
        let mut inside = 0;
        for _ in 0..steps {
            let errors: Vec<DVector<f64>> = (0..runs).map(|_| est.sample(&mut rng)).collect();
            let covs = vec![cov.clone(); runs];
            let nees = nees_step(&errors, &covs).unwrap();
            if nees > lo && nees < hi {
                inside += 1;
            }
        }
        assert!(
            inside * 10 >= steps * 9,
            "only {inside}/{steps} steps within bounds"
        );
    }

    #[test]
    fn unit_circle_ellipse_has_axis_two_at_86_5() {
        let est = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let ellipse = ellipse_from_cov(&est, 0.865).unwrap();
        assert!((ellipse.semi_major - 2.0).abs() < 2e-3);
        assert!((ellipse.semi_minor - 2.0).abs() < 2e-3);
    }

    #[test]
    fn axis_aligned_ellipse_shape() {
        let est = GaussianEstimate::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let ellipse = ellipse_from_cov(&est, 0.865).unwrap();
        assert_relative_eq!(ellipse.semi_major, 2.0 * ellipse.semi_minor, epsilon = 1e-9);
        assert!(ellipse.orientation.abs() < 1e-9);
    }

    #[test]
    fn ellipse_rotates_with_the_covariance() {
        let base = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0]);
        let angle: f64 = 0.6;
        let rot = DMatrix::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let rotated_cov = &rot * &base * rot.transpose();
        let a = ellipse_from_cov(
            &GaussianEstimate::new(DVector::zeros(2), base).unwrap(),
            0.9,
        )
        .unwrap();
        let b = ellipse_from_cov(
            &GaussianEstimate::new(DVector::zeros(2), rotated_cov).unwrap(),
            0.9,
        )
        .unwrap();
        assert_relative_eq!(a.semi_major, b.semi_major, epsilon = 1e-9);
        assert_relative_eq!(a.semi_minor, b.semi_minor, epsilon = 1e-9);
        assert_relative_eq!(b.orientation, angle, epsilon = 1e-9);
    }

    #[test]
    fn bench_rejects_undersized_call_budget() {
        let e = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(bench_fusers(&[(e.clone(), e)], 100).is_err());
    }

    #[test]
    fn bench_normalizes_to_naive_and_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pairs: Vec<(GaussianEstimate, GaussianEstimate)> = (0..32)
            .map(|_| {
                let m1 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let m2 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                (
                    GaussianEstimate::new(m1, &a * a.transpose() + DMatrix::identity(2, 2) * 0.2)
                        .unwrap(),
                    GaussianEstimate::new(m2, &b * b.transpose() + DMatrix::identity(2, 2) * 0.2)
                        .unwrap(),
                )
            })
            .collect();
        let report = bench_fusers(&pairs, MIN_BENCH_CALLS).unwrap();
        assert_eq!(report[0].method, FusionMethod::Naive);
        assert_relative_eq!(report[0].relative, 1.0);
        for entry in &report[1..] {
            assert!(
                entry.relative > 1.0,
                "{:?} not slower than naive",
                entry.method
            );
        }
    }
}
