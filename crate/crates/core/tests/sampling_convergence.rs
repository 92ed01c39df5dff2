//! Monte-Carlo convergence of the sampled normalization constant.
//!
//! The absolute error of the sampled normalization against a fine-grid
//! quadrature value should shrink like `1/sqrt(S)`: the log-log slope over a
//! geometric ladder of sample counts must sit near -1/2.

use nalgebra::{DMatrix, DVector};
use trackfuse_core::fusion::FusionWeight;
use trackfuse_core::grid::{grid_hmd, GridDensity};
use trackfuse_core::sampling::{
    weighted_fusion_samples, FusionFamily, SampleFusionConfig, SampleSource,
};
use trackfuse_core::GaussianEstimate;

fn reference_pair() -> (GaussianEstimate, GaussianEstimate) {
    let e1 = GaussianEstimate::new(
        DVector::from_row_slice(&[0.5, 1.0]),
        DMatrix::from_row_slice(2, 2, &[2.5, -1.0, -1.0, 1.2]),
    )
    .unwrap();
    let e2 = GaussianEstimate::new(
        DVector::from_row_slice(&[2.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.8, -0.5, -0.5, 4.0]),
    )
    .unwrap();
    (e1, e2)
}

#[test]
fn zeta_error_shrinks_like_inverse_sqrt_sample_count() {
    let (e1, e2) = reference_pair();
    let weight = FusionWeight::fixed(0.5).unwrap();

    let bounds = GridDensity::joint_envelope(&[&e1, &e2]);
    let g1 = GridDensity::evaluate(&e1, &bounds, 401).unwrap();
    let g2 = GridDensity::evaluate(&e2, &bounds, 401).unwrap();
    let (_, zeta_ref) = grid_hmd(&g1, &g2, weight.omega).unwrap();

    let ladder = [500usize, 2000, 8000, 32000];
    let seeds = 0..8u64;
    let mut log_s = Vec::new();
    let mut log_err = Vec::new();
    for &s in &ladder {
        let mut err_sum = 0.0;
        let mut count = 0;
        for seed in seeds.clone() {
            let cfg = SampleFusionConfig::new(s, 1.0, SampleSource::FromP1, seed).unwrap();
            let set =
                weighted_fusion_samples(FusionFamily::Harmonic, &e1, &e2, weight.omega, &cfg)
                    .unwrap();
            err_sum += (set.zeta() - zeta_ref).abs();
            count += 1;
        }
        log_s.push((s as f64).ln());
        log_err.push((err_sum / count as f64).ln());
    }

    // Least-squares slope of log error against log sample count.
    let n = log_s.len() as f64;
    let mx = log_s.iter().sum::<f64>() / n;
    let my = log_err.iter().sum::<f64>() / n;
    let sxy: f64 = log_s
        .iter()
        .zip(&log_err)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = log_s.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    assert!(
        (-0.65..=-0.35).contains(&slope),
        "log-log error slope {slope:.3} outside [-0.65, -0.35]"
    );
}
