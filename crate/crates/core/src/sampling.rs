//! Sample-based harmonic-mean and geometric-mean fusion.
//!
//! The fused density is never tabulated: expectations under it are rewritten
//! as weighted expectations under one of the *input* densities, so no third
//! proposal density is needed. Drawing from `p1`, the harmonic weight is
//! `w(x) = p2(x) / ((1-w) p1(x) + w p2(x))` and the geometric weight is
//! `(p2(x)/p1(x))^(1-w)`; the mean raw weight estimates the normalization
//! constant `zeta`. Covariance inflation spreads the draws (`cov -> a cov`,
//! `a >= 1`) while all weight evaluations keep the original densities, which
//! widens the reported covariance monotonically in `a`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FusionWeight;
use crate::gaussian::{GaussianEstimate, GaussianMixture};

/// Which input density the fused-density samples are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    FromP1,
    FromP2,
    /// Draw a candidate from each input per index and keep the one with the
    /// larger importance weight (ties prefer the `p1` draw). Deterministic
    /// given the draws, but the per-index maximum biases the raw weights
    /// upward, so `zeta` from this rule overestimates.
    Adaptive,
}

/// The two sample-fusible density families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionFamily {
    Harmonic,
    Geometric,
}

/// Configuration of one sample-fusion call.
#[derive(Debug, Clone, Copy)]
pub struct SampleFusionConfig {
    pub sample_count: usize,
    pub inflation: f64,
    pub source_rule: SampleSource,
    pub rng_seed: u64,
}

impl SampleFusionConfig {
    pub fn new(
        sample_count: usize,
        inflation: f64,
        source_rule: SampleSource,
        rng_seed: u64,
    ) -> Result<Self> {
        if sample_count < 100 {
            return Err(Error::InvalidArgument(format!(
                "sample count {sample_count} below minimum 100"
            )));
        }
        if !(inflation >= 1.0 && inflation.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "inflation factor {inflation} must be finite and >= 1"
            )));
        }
        Ok(Self {
            sample_count,
            inflation,
            source_rule,
            rng_seed,
        })
    }
}

/// A density that can be evaluated in log space and drawn from directly.
pub trait SampleDensity: Sync {
    fn dim(&self) -> usize;
    fn log_pdf(&self, x: &DVector<f64>) -> f64;
    fn draw_inflated(&self, alpha: f64, rng: &mut ChaCha8Rng) -> DVector<f64>;
}

impl SampleDensity for GaussianEstimate {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_pdf(x)
    }

    fn draw_inflated(&self, alpha: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.sample_inflated(alpha, rng)
    }
}

impl SampleDensity for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_pdf(x)
    }

    fn draw_inflated(&self, alpha: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.sample_inflated(alpha, rng)
    }
}

/// Weighted draws from a fused density, with the normalization estimate.
#[derive(Debug, Clone)]
pub struct WeightedSampleSet {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
    zeta: f64,
    frac_from_p1: f64,
}

impl WeightedSampleSet {
    fn build(points: Vec<DVector<f64>>, weights: Vec<f64>, frac_from_p1: f64) -> Result<Self> {
        debug_assert_eq!(points.len(), weights.len());
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "non-finite or negative importance weight".into(),
            ));
        }
        let zeta = weights.iter().sum::<f64>() / weights.len() as f64;
        if zeta <= 0.0 {
            return Err(Error::DegenerateOverlap);
        }
        Ok(Self {
            points,
            weights,
            zeta,
            frac_from_p1,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mean raw weight: the estimate of the fused density's normalization.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Fraction of kept samples drawn from the first input.
    pub fn frac_from_p1(&self) -> f64 {
        self.frac_from_p1
    }

    /// Effective sample size `(sum w)^2 / sum w^2`.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        s * s / s2
    }

    /// Standard error of `zeta` (standard deviation of the raw weights over
    /// the square root of the sample count).
    pub fn zeta_standard_error(&self) -> f64 {
        let n = self.weights.len() as f64;
        let var = self
            .weights
            .iter()
            .map(|w| (w - self.zeta).powi(2))
            .sum::<f64>()
            / n;
        (var / n).sqrt()
    }

    /// Self-normalized expectation `sum w f(x) / sum w`.
    pub fn expectation<F: Fn(&DVector<f64>) -> DVector<f64>>(&self, f: F) -> DVector<f64> {
        let mut acc = f(&self.points[0]) * self.weights[0];
        for (x, w) in self.points.iter().zip(&self.weights).skip(1) {
            acc += f(x) * *w;
        }
        acc / self.weights.iter().sum::<f64>()
    }

    /// Weighted mean and raw (uncorrected) weighted covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.points[0].len();
        let total: f64 = self.weights.iter().sum();
        let mut mean = DVector::zeros(n);
        for (x, w) in self.points.iter().zip(&self.weights) {
            mean += x * *w;
        }
        mean /= total;
        let mut cov = DMatrix::zeros(n, n);
        for (x, w) in self.points.iter().zip(&self.weights) {
            let d = x - &mean;
            cov += d.clone() * d.transpose() * *w;
        }
        cov /= total;
        (mean, cov)
    }

    /// Per-axis standard error of the weighted mean, `sqrt(var / ESS)`.
    pub fn mean_standard_error(&self) -> DVector<f64> {
        let (_, cov) = self.moments();
        let ess = self.ess();
        DVector::from_fn(cov.nrows(), |i, _| (cov[(i, i)] / ess).sqrt())
    }
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_open_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample fusion weight {omega} outside the open interval (0, 1)"
        )));
    }
    Ok(())
}

/// Log importance weight of a draw from `p1` (or `p2` when `from_p1` is
/// false), given both log densities at the point.
fn log_weight(family: FusionFamily, from_p1: bool, lp1: f64, lp2: f64, omega: f64) -> f64 {
    match family {
        FusionFamily::Harmonic => {
            let log_denom = logsumexp2((1.0 - omega).ln() + lp1, omega.ln() + lp2);
            if from_p1 {
                lp2 - log_denom
            } else {
                lp1 - log_denom
            }
        }
        FusionFamily::Geometric => {
            if from_p1 {
                (1.0 - omega) * (lp2 - lp1)
            } else {
                omega * (lp1 - lp2)
            }
        }
    }
}

/// Per-index selection between paired candidate draws from the two inputs:
/// each candidate is scored with its own source's importance weight and the
/// larger one is kept (ties keep the `p1` draw).
pub fn choose_sample_source<A: SampleDensity + ?Sized, B: SampleDensity + ?Sized>(
    x1s: &[DVector<f64>],
    x2s: &[DVector<f64>],
    p1: &A,
    p2: &B,
    omega: f64,
    family: FusionFamily,
) -> Result<WeightedSampleSet> {
    check_open_omega(omega)?;
    if x1s.len() != x2s.len() {
        return Err(Error::DimensionMismatch {
            context: "choose_sample_source",
            left: x1s.len(),
            right: x2s.len(),
        });
    }
    let mut points = Vec::with_capacity(x1s.len());
    let mut weights = Vec::with_capacity(x1s.len());
    let mut kept_from_p1 = 0_usize;
    for (x1, x2) in x1s.iter().zip(x2s) {
        let w1 = log_weight(family, true, p1.log_pdf(x1), p2.log_pdf(x1), omega).exp();
        let w2 = log_weight(family, false, p1.log_pdf(x2), p2.log_pdf(x2), omega).exp();
        if w1 >= w2 {
            points.push(x1.clone());
            weights.push(w1);
            kept_from_p1 += 1;
        } else {
            points.push(x2.clone());
            weights.push(w2);
        }
    }
    let frac = kept_from_p1 as f64 / x1s.len() as f64;
    WeightedSampleSet::build(points, weights, frac)
}

#[allow(clippy::too_many_arguments)]
fn fusion_samples_with_rng<A: SampleDensity + ?Sized, B: SampleDensity + ?Sized>(
    family: FusionFamily,
    p1: &A,
    p2: &B,
    omega: f64,
    source_rule: SampleSource,
    inflation: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<WeightedSampleSet> {
    check_open_omega(omega)?;
    match source_rule {
        SampleSource::FromP1 | SampleSource::FromP2 => {
            let from_p1 = source_rule == SampleSource::FromP1;
            let mut points = Vec::with_capacity(count);
            let mut weights = Vec::with_capacity(count);
            for _ in 0..count {
                let x = if from_p1 {
                    p1.draw_inflated(inflation, rng)
                } else {
                    p2.draw_inflated(inflation, rng)
                };
                let lw = log_weight(family, from_p1, p1.log_pdf(&x), p2.log_pdf(&x), omega);
                points.push(x);
                weights.push(lw.exp());
            }
            WeightedSampleSet::build(points, weights, if from_p1 { 1.0 } else { 0.0 })
        }
        SampleSource::Adaptive => {
            let mut x1s = Vec::with_capacity(count);
            let mut x2s = Vec::with_capacity(count);
            for _ in 0..count {
                x1s.push(p1.draw_inflated(inflation, rng));
                x2s.push(p2.draw_inflated(inflation, rng));
            }
            choose_sample_source(&x1s, &x2s, p1, p2, omega, family)
        }
    }
}

/// Draw and weight fused-density samples under `cfg`.
pub fn weighted_fusion_samples<A: SampleDensity + ?Sized, B: SampleDensity + ?Sized>(
    family: FusionFamily,
    p1: &A,
    p2: &B,
    omega: f64,
    cfg: &SampleFusionConfig,
) -> Result<WeightedSampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    fusion_samples_with_rng(
        family,
        p1,
        p2,
        omega,
        cfg.source_rule,
        cfg.inflation,
        cfg.sample_count,
        &mut rng,
    )
}

/// Expectation of `f` under the fused density, with the normalization
/// estimate `zeta`; deterministic given `cfg.rng_seed`.
pub fn sample_expectation<A, B, F>(
    family: FusionFamily,
    f: F,
    p1: &A,
    p2: &B,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<(DVector<f64>, f64)>
where
    A: SampleDensity + ?Sized,
    B: SampleDensity + ?Sized,
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let set = weighted_fusion_samples(family, p1, p2, weight.omega, cfg)?;
    Ok((set.expectation(f), set.zeta()))
}

/// Moment-match a weighted sample set into a Gaussian estimate.
fn moment_matched(set: &WeightedSampleSet) -> Result<GaussianEstimate> {
    let (mean, cov) = set.moments();
    GaussianEstimate::new(mean, cov)
}

/// Sample-based harmonic-mean fusion of two Gaussians, returning the
/// weighted draws alongside the moment-matched estimate.
pub fn hmd_s_weighted(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<(GaussianEstimate, WeightedSampleSet)> {
    let set = weighted_fusion_samples(FusionFamily::Harmonic, e1, e2, weight.omega, cfg)?;
    Ok((moment_matched(&set)?, set))
}

/// Sample-based harmonic-mean fusion of two Gaussians.
pub fn hmd_s_gaussian(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<GaussianEstimate> {
    hmd_s_weighted(e1, e2, weight, cfg).map(|(est, _)| est)
}

/// Sample-based geometric-mean fusion of two Gaussians with the draws.
pub fn gmd_s_weighted(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<(GaussianEstimate, WeightedSampleSet)> {
    let set = weighted_fusion_samples(FusionFamily::Geometric, e1, e2, weight.omega, cfg)?;
    Ok((moment_matched(&set)?, set))
}

/// Sample-based geometric-mean fusion of two Gaussians.
pub fn gmd_s_gaussian(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<GaussianEstimate> {
    gmd_s_weighted(e1, e2, weight, cfg).map(|(est, _)| est)
}

/// Minimum draws spent on each component pair in mixture fusion.
const MIN_PAIR_SAMPLES: usize = 200;
/// Component pairs whose normalization falls below this fraction of the
/// largest pair's are dropped and the remaining weights renormalized.
const PAIR_DROP_REL: f64 = 1e-12;

/// Mixture fusion output with its sampling diagnostics.
#[derive(Debug, Clone)]
pub struct MixtureFusion {
    pub mixture: GaussianMixture,
    /// Overall normalization estimate: sum of the per-pair estimates.
    pub zeta: f64,
    /// Per-axis standard error of the moment-matched mean.
    pub mean_se: DVector<f64>,
    /// Component pairs dropped for negligible overlap.
    pub dropped: usize,
}

/// Sample-based harmonic-mean fusion of two Gaussian mixtures.
///
/// Every component pair `(m, n)` contributes one fused component: its
/// numerator is the product of the component densities scaled by both
/// mixture weights, while the denominator keeps the *full* mixtures, so a
/// pair's normalization reflects its share of the overall fused mass. Pairs
/// run in parallel; each derives its RNG stream from `(rng_seed, pair
/// index)`, so the result is schedule-independent.
pub fn hmd_s_mixture_detailed(
    m1: &GaussianMixture,
    m2: &GaussianMixture,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<MixtureFusion> {
    check_open_omega(weight.omega)?;
    let omega = weight.omega;
    let pairs = m1.len() * m2.len();
    let per_pair = (cfg.sample_count / pairs).max(MIN_PAIR_SAMPLES);

    // Per pair: raw normalization mass, and (points, weights, mean-error
    // variance) when the pair survives.
    type PairOutcome = (f64, Option<(Vec<DVector<f64>>, Vec<f64>, f64)>);
    let results: Vec<Result<PairOutcome>> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let (m, n) = (k / m2.len(), k % m2.len());
            let (c1, p1m) = &m1.components()[m];
            let (c2, p2n) = &m2.components()[n];
            let scale = c1 * c2;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(k as u64);

            let pair_log_weight = |x: &DVector<f64>, from_p1: bool| -> f64 {
                let log_denom = logsumexp2(
                    (1.0 - omega).ln() + m1.log_pdf(x),
                    omega.ln() + m2.log_pdf(x),
                );
                let log_num = if from_p1 { p2n.log_pdf(x) } else { p1m.log_pdf(x) };
                scale.ln() + log_num - log_denom
            };

            let mut points = Vec::with_capacity(per_pair);
            let mut weights = Vec::with_capacity(per_pair);
            let mut kept_from_p1 = 0_usize;
            for _ in 0..per_pair {
                match cfg.source_rule {
                    SampleSource::FromP1 => {
                        let x = p1m.sample_inflated(cfg.inflation, &mut rng);
                        weights.push(pair_log_weight(&x, true).exp());
                        points.push(x);
                        kept_from_p1 += 1;
                    }
                    SampleSource::FromP2 => {
                        let x = p2n.sample_inflated(cfg.inflation, &mut rng);
                        weights.push(pair_log_weight(&x, false).exp());
                        points.push(x);
                    }
                    SampleSource::Adaptive => {
                        let x1 = p1m.sample_inflated(cfg.inflation, &mut rng);
                        let x2 = p2n.sample_inflated(cfg.inflation, &mut rng);
                        let w1 = pair_log_weight(&x1, true).exp();
                        let w2 = pair_log_weight(&x2, false).exp();
                        if w1 >= w2 {
                            points.push(x1);
                            weights.push(w1);
                            kept_from_p1 += 1;
                        } else {
                            points.push(x2);
                            weights.push(w2);
                        }
                    }
                }
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidArgument(
                    "non-finite importance weight in mixture pair".into(),
                ));
            }
            let zeta_k = weights.iter().sum::<f64>() / per_pair as f64;
            if zeta_k <= 0.0 {
                // Negligible overlap for this pair; it carries no mass.
                return Ok((0.0, None));
            }
            let frac = kept_from_p1 as f64 / per_pair as f64;
            Ok((zeta_k, Some((points, weights, frac))))
        })
        .collect();

    let mut zetas = Vec::with_capacity(pairs);
    let mut sets: Vec<Option<WeightedSampleSet>> = Vec::with_capacity(pairs);
    for r in results {
        let (zeta_k, raw) = r?;
        zetas.push(zeta_k);
        sets.push(match raw {
            Some((points, weights, frac)) => Some(WeightedSampleSet::build(points, weights, frac)?),
            None => None,
        });
    }

    let zeta_total: f64 = zetas.iter().sum();
    if zeta_total <= 0.0 {
        return Err(Error::DegenerateOverlap);
    }
    let max_zeta = zetas.iter().copied().fold(0.0_f64, f64::max);
    let mut components = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = 0_usize;
    for (zeta_k, set) in zetas.iter().zip(&sets) {
        match set {
            Some(set) if *zeta_k >= PAIR_DROP_REL * max_zeta => {
                components.push((*zeta_k, moment_matched(set)?));
                kept.push(set);
            }
            _ => dropped += 1,
        }
    }
    let kept_total: f64 = components.iter().map(|(z, _)| *z).sum();
    for (z, _) in &mut components {
        *z /= kept_total;
    }

    // SE of the moment-matched mean: combine the per-component mean errors
    // with the (fixed) component weights.
    let dim = m1.dim();
    let mut mean_var = DVector::zeros(dim);
    for ((lambda, _), set) in components.iter().zip(&kept) {
        let se = set.mean_standard_error();
        for i in 0..dim {
            mean_var[i] += (lambda * se[i]).powi(2);
        }
    }
    let mean_se = mean_var.map(f64::sqrt);

    Ok(MixtureFusion {
        mixture: GaussianMixture::new(components)?,
        zeta: zeta_total,
        mean_se,
        dropped,
    })
}

/// Sample-based harmonic-mean fusion of two Gaussian mixtures.
pub fn hmd_s_mixture(
    m1: &GaussianMixture,
    m2: &GaussianMixture,
    weight: FusionWeight,
    cfg: &SampleFusionConfig,
) -> Result<GaussianMixture> {
    hmd_s_mixture_detailed(m1, m2, weight, cfg).map(|f| f.mixture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grid_hmd, GridDensity};
    use approx::assert_relative_eq;

    fn cfg(s: usize, alpha: f64, rule: SampleSource, seed: u64) -> SampleFusionConfig {
        SampleFusionConfig::new(s, alpha, rule, seed).unwrap()
    }

    fn w(omega: f64) -> FusionWeight {
        FusionWeight::fixed(omega).unwrap()
    }

    fn scalar(mean: f64, var: f64) -> GaussianEstimate {
        GaussianEstimate::scalar(mean, var).unwrap()
    }

    fn est2(mean: [f64; 2], cov: [f64; 4]) -> GaussianEstimate {
        GaussianEstimate::new(
            DVector::from_row_slice(&mean),
            DMatrix::from_row_slice(2, 2, &cov),
        )
        .unwrap()
    }

    fn reference_pair() -> (GaussianEstimate, GaussianEstimate) {
        (
            est2([0.5, 1.0], [2.5, -1.0, -1.0, 1.2]),
            est2([2.0, 1.0], [0.8, -0.5, -0.5, 4.0]),
        )
    }

    fn grid_oracle(e1: &GaussianEstimate, e2: &GaussianEstimate, omega: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let bounds = GridDensity::joint_envelope(&[e1, e2]);
        let mut g1 = GridDensity::evaluate(e1, &bounds, 401).unwrap();
        let mut g2 = GridDensity::evaluate(e2, &bounds, 401).unwrap();
        g1.normalize();
        g2.normalize();
        let (fused, zeta) = grid_hmd(&g1, &g2, omega).unwrap();
        let (mean, cov) = fused.moments();
        (zeta, mean, cov)
    }

    #[test]
    fn config_rejects_tiny_sample_count_and_deflation() {
        assert!(SampleFusionConfig::new(99, 1.0, SampleSource::FromP1, 0).is_err());
        assert!(SampleFusionConfig::new(1000, 0.9, SampleSource::FromP1, 0).is_err());
    }

    #[test]
    fn identical_standard_normals_have_unit_zeta_and_zero_mean() {
        let e = scalar(0.0, 1.0);
        let c = cfg(5000, 1.0, SampleSource::FromP1, 7);
        let (mean, zeta) =
            sample_expectation(FusionFamily::Harmonic, |x| x.clone(), &e, &e, w(0.5), &c).unwrap();
        let tol = 3.0 / (c.sample_count as f64).sqrt();
        assert!(mean[0].abs() < tol, "mean {}", mean[0]);
        assert_relative_eq!(zeta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn endpoint_weights_are_rejected() {
        let e = scalar(0.0, 1.0);
        let c = cfg(500, 1.0, SampleSource::FromP1, 7);
        for omega in [0.0, 1.0] {
            assert!(
                weighted_fusion_samples(FusionFamily::Harmonic, &e, &e, omega, &c).is_err()
            );
        }
    }

    #[test]
    fn disjoint_supports_report_degenerate_overlap() {
        // 600 sigma apart: every weight underflows to zero.
        let e1 = scalar(0.0, 1.0);
        let e2 = scalar(600.0, 1.0);
        let c = cfg(500, 1.0, SampleSource::FromP1, 7);
        match weighted_fusion_samples(FusionFamily::Harmonic, &e1, &e2, 0.5, &c) {
            Err(Error::DegenerateOverlap) => {}
            other => panic!("expected degenerate overlap, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_is_deterministic_and_seeds_differ() {
        let (e1, e2) = reference_pair();
        let c = cfg(1000, 1.0, SampleSource::Adaptive, 11);
        let a = hmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
        let b = hmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.cov(), b.cov());
        let c2 = cfg(1000, 1.0, SampleSource::Adaptive, 12);
        let d = hmd_s_gaussian(&e1, &e2, w(0.5), &c2).unwrap();
        assert_ne!(a.mean(), d.mean());
    }

    #[test]
    fn hmd_zeta_matches_grid_oracle_within_three_ses() {
        let (e1, e2) = reference_pair();
        let (zeta_grid, _, _) = grid_oracle(&e1, &e2, 0.5);
        let c = cfg(5000, 1.0, SampleSource::FromP1, 42);
        let set = weighted_fusion_samples(FusionFamily::Harmonic, &e1, &e2, 0.5, &c).unwrap();
        let diff = (set.zeta() - zeta_grid).abs();
        assert!(
            diff <= 3.0 * set.zeta_standard_error(),
            "zeta {} vs oracle {zeta_grid} (se {})",
            set.zeta(),
            set.zeta_standard_error()
        );
    }

    #[test]
    fn hmd_mean_matches_grid_oracle_within_three_ses() {
        let (e1, e2) = reference_pair();
        let (_, mean_grid, _) = grid_oracle(&e1, &e2, 0.5);
        let c = cfg(5000, 1.0, SampleSource::FromP1, 42);
        let (est, set) = hmd_s_weighted(&e1, &e2, w(0.5), &c).unwrap();
        let se = set.mean_standard_error();
        for i in 0..2 {
            let diff = (est.mean()[i] - mean_grid[i]).abs();
            assert!(
                diff <= 3.0 * se[i],
                "axis {i}: {} vs {} (se {})",
                est.mean()[i],
                mean_grid[i],
                se[i]
            );
        }
    }

    #[test]
    fn gmd_matches_closed_form_ci_within_three_ses() {
        use crate::fusion::ci;
        let (e1, e2) = reference_pair();
        let oracle = ci(&e1, &e2, w(0.5)).unwrap().estimate;
        let c = cfg(20_000, 1.0, SampleSource::FromP1, 42);
        let (est, set) = gmd_s_weighted(&e1, &e2, w(0.5), &c).unwrap();
        let se = set.mean_standard_error();
        for i in 0..2 {
            assert!(
                (est.mean()[i] - oracle.mean()[i]).abs() <= 3.0 * se[i],
                "axis {i}: {} vs {}",
                est.mean()[i],
                oracle.mean()[i]
            );
        }
        assert_relative_eq!(est.cov().trace(), oracle.cov().trace(), max_relative = 0.1);
    }

    #[test]
    fn gmd_symmetric_scalars_center_mean() {
        let c = cfg(5000, 1.0, SampleSource::Adaptive, 3);
        let est = gmd_s_gaussian(&scalar(0.0, 1.0), &scalar(2.0, 1.0), w(0.5), &c).unwrap();
        assert!((est.mean()[0] - 1.0).abs() < 0.1, "mean {}", est.mean()[0]);
    }

    #[test]
    fn adaptive_trace_ordering_ga_below_hmd_s_below_gmd_s() {
        use crate::fusion::hmd_ga;
        let (e1, e2) = reference_pair();
        let c = cfg(5000, 1.0, SampleSource::Adaptive, 42);
        let ga = hmd_ga(&e1, &e2, w(0.5)).unwrap().estimate;
        let hs = hmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
        let gs = gmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
        assert!(
            ga.cov().trace() <= hs.cov().trace(),
            "ga {} vs hmd-s {}",
            ga.cov().trace(),
            hs.cov().trace()
        );
        assert!(
            hs.cov().trace() <= gs.cov().trace(),
            "hmd-s {} vs gmd-s {}",
            hs.cov().trace(),
            gs.cov().trace()
        );
    }

    #[test]
    fn inflation_widens_reported_covariance_monotonically() {
        let (e1, e2) = reference_pair();
        for rule in [SampleSource::FromP1, SampleSource::Adaptive] {
            let mut last = 0.0;
            for alpha in [1.0, 1.5, 2.0] {
                let c = cfg(5000, alpha, rule, 42);
                let est = hmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
                let t = est.cov().trace();
                assert!(
                    t >= last,
                    "trace {t} shrank from {last} at alpha {alpha} ({rule:?})"
                );
                last = t;
            }
        }
    }

    #[test]
    fn fused_density_bounded_by_input_maximum_on_samples() {
        let (e1, e2) = reference_pair();
        let c = cfg(2000, 1.0, SampleSource::Adaptive, 13);
        let set = weighted_fusion_samples(FusionFamily::Harmonic, &e1, &e2, 0.3, &c).unwrap();
        for x in set.points() {
            let p1 = e1.pdf(x);
            let p2 = e2.pdf(x);
            let fused = p1 * p2 / (0.7 * p1 + 0.3 * p2);
            assert!(fused <= p1.max(p2) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tie_break_prefers_first_source() {
        let e = scalar(0.0, 1.0);
        let xs: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_element(1, i as f64 * 0.1))
            .collect();
        let set =
            choose_sample_source(&xs, &xs, &e, &e, 0.5, FusionFamily::Harmonic).unwrap();
        assert_eq!(set.frac_from_p1(), 1.0);
    }

    #[test]
    fn central_candidate_of_second_source_wins() {
        // The p1 draw sits at p1's center where p2 is negligible; the p2 draw
        // sits slightly toward p1 from p2's center. The p2 draw's weight is
        // larger, so the kept sample comes from p2.
        let p1 = scalar(0.0, 1.0);
        let p2 = scalar(6.0, 1.0);
        let x1s = vec![DVector::from_element(1, 0.0)];
        let x2s = vec![DVector::from_element(1, 5.0)];
        let set =
            choose_sample_source(&x1s, &x2s, &p1, &p2, 0.5, FusionFamily::Geometric).unwrap();
        assert_eq!(set.frac_from_p1(), 0.0);
        assert_eq!(set.points()[0][0], 5.0);
    }

    #[test]
    fn ess_equals_count_for_uniform_weights() {
        let e = scalar(0.0, 1.0);
        let c = cfg(500, 1.0, SampleSource::FromP1, 1);
        let set = weighted_fusion_samples(FusionFamily::Harmonic, &e, &e, 0.4, &c).unwrap();
        assert_relative_eq!(set.ess(), 500.0, epsilon = 1e-9);
    }

    fn mixture_pair() -> (GaussianMixture, GaussianMixture) {
        let c1a = [2.5, -1.0, -1.0, 1.2];
        let c1b = [0.8, -0.5, -0.5, 4.0];
        let m1 = GaussianMixture::new(vec![
            (0.3, est2([-0.5, 3.0], c1a)),
            (0.7, est2([2.0, 0.3], c1b)),
        ])
        .unwrap();
        let m2 = GaussianMixture::new(vec![
            (0.4, est2([-1.5, 1.0], c1a)),
            (0.6, est2([3.0, -4.0], c1b)),
        ])
        .unwrap();
        (m1, m2)
    }

    #[test]
    fn single_component_mixture_equals_gaussian_path() {
        let (e1, e2) = reference_pair();
        let c = cfg(2000, 1.0, SampleSource::Adaptive, 5);
        let direct = hmd_s_gaussian(&e1, &e2, w(0.5), &c).unwrap();
        let via_mixture = hmd_s_mixture(
            &GaussianMixture::single(e1),
            &GaussianMixture::single(e2),
            w(0.5),
            &c,
        )
        .unwrap();
        assert_eq!(via_mixture.len(), 1);
        let (lambda, est) = &via_mixture.components()[0];
        assert_relative_eq!(*lambda, 1.0, epsilon = 1e-12);
        assert_eq!(est.mean(), direct.mean());
        assert_eq!(est.cov(), direct.cov());
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        let (m1, m2) = mixture_pair();
        let c = cfg(4000, 1.0, SampleSource::Adaptive, 21);
        let fused = hmd_s_mixture(&m1, &m2, w(0.5), &c).unwrap();
        let total: f64 = fused.components().iter().map(|(w, _)| w).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(fused.len(), 4);
    }

    #[test]
    fn mixture_mean_matches_grid_oracle_within_three_ses() {
        let (m1, m2) = mixture_pair();
        let bounds = GridDensity::joint_envelope(&[&m1, &m2]);
        let mut g1 = GridDensity::evaluate(&m1, &bounds, 401).unwrap();
        let mut g2 = GridDensity::evaluate(&m2, &bounds, 401).unwrap();
        g1.normalize();
        g2.normalize();
        let (fused_grid, _) = grid_hmd(&g1, &g2, 0.5).unwrap();
        let (mean_grid, _) = fused_grid.moments();

        let c = cfg(20_000, 1.0, SampleSource::FromP1, 42);
        let detail = hmd_s_mixture_detailed(&m1, &m2, w(0.5), &c).unwrap();
        let mean = detail.mixture.moment_match().unwrap().mean().clone();
        for i in 0..2 {
            let diff = (mean[i] - mean_grid[i]).abs();
            assert!(
                diff <= 3.0 * detail.mean_se[i],
                "axis {i}: {} vs {} (se {})",
                mean[i],
                mean_grid[i],
                detail.mean_se[i]
            );
        }
    }

    #[test]
    fn far_apart_mixture_pairs_are_dropped() {
        let near = GaussianMixture::new(vec![
            (0.5, scalar(0.0, 1.0)),
            (0.5, scalar(600.0, 1.0)),
        ])
        .unwrap();
        let other = GaussianMixture::single(scalar(0.5, 1.0));
        let c = cfg(2000, 1.0, SampleSource::FromP1, 9);
        let detail = hmd_s_mixture_detailed(&near, &other, w(0.5), &c).unwrap();
        assert_eq!(detail.dropped, 1);
        assert_eq!(detail.mixture.len(), 1);
    }

    #[test]
    fn zeta_error_shrinks_with_sample_count() {
        let (e1, e2) = reference_pair();
        let (zeta_grid, _, _) = grid_oracle(&e1, &e2, 0.5);
        let mut errs = Vec::new();
        for &s in &[500_usize, 32_000] {
            let mut acc = 0.0;
            for seed in 0..8 {
                let c = cfg(s, 1.0, SampleSource::FromP1, 100 + seed);
                let set =
                    weighted_fusion_samples(FusionFamily::Harmonic, &e1, &e2, 0.5, &c).unwrap();
                acc += (set.zeta() - zeta_grid).abs();
            }
            errs.push(acc / 8.0);
        }
        // Eight-fold sample growth should shrink the error by roughly sqrt(64).
        assert!(
            errs[1] < errs[0] * 0.5,
            "errors {errs:?} did not shrink"
        );
    }
}
