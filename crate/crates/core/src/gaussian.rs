//! Gaussian estimates and mixtures: the state currency of every fuser and tracker.
//!
//! Covariances are symmetrized on construction and validated as positive
//! definite; a one-shot jitter of `1e-10 * I` repairs matrices whose smallest
//! eigenvalue sits in the numerical-noise band, anything worse is an error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalues above this are accepted as positive definite outright.
const SPD_ACCEPT: f64 = 1e-12;
/// Eigenvalues down to this (exclusive) are treated as numerical noise and
/// repaired by jitter; below it the matrix is rejected.
const SPD_REJECT: f64 = -1e-10;
/// Jitter added to the diagonal when repairing a noise-band matrix.
const SPD_JITTER: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_4;

/// Symmetrize `a` in place as `(A + A^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Symmetrize and validate a covariance, applying the jitter policy.
///
/// Returns the repaired matrix together with its Cholesky factorization.
fn make_spd(
    mut cov: DMatrix<f64>,
    context: &'static str,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    if cov.nrows() != cov.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            left: cov.nrows(),
            right: cov.ncols(),
        });
    }
    symmetrize(&mut cov);
    // Fast path: a successful Cholesky proves positive definiteness.
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok((cov, chol));
    }
    // Slow path: inspect the spectrum and decide between repair and rejection.
    let min_eig = cov
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig > SPD_REJECT && min_eig <= SPD_ACCEPT {
        let n = cov.nrows();
        let repaired = &cov + DMatrix::<f64>::identity(n, n) * SPD_JITTER;
        if let Some(chol) = Cholesky::new(repaired.clone()) {
            return Ok((repaired, chol));
        }
    }
    Err(Error::NotPositiveDefinite { context, min_eig })
}

/// Invert a symmetric positive-definite matrix via its Cholesky factorization.
pub fn spd_inverse(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (_, chol) = make_spd(cov.clone(), "spd_inverse")?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// A mean vector with a symmetric positive-definite covariance.
#[derive(Debug, Clone)]
pub struct GaussianEstimate {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `-0.5 * (n ln 2pi + ln det cov)`, the log-pdf normalization.
    log_norm: f64,
}

impl GaussianEstimate {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                context: "GaussianEstimate::new",
                left: mean.len(),
                right: cov.nrows(),
            });
        }
        let (cov, chol) = make_spd(cov, "GaussianEstimate::new")?;
        let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + ln_det);
        Ok(Self {
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    /// Construct from scalar mean and variance.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    /// Construct from information form: `cov = info_mat^-1`, `mean = cov * info_vec`.
    pub fn from_information(info_vec: &DVector<f64>, info_mat: &DMatrix<f64>) -> Result<Self> {
        let cov = spd_inverse(info_mat)?;
        let mean = &cov * info_vec;
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Covariance inverse (information matrix).
    pub fn information(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let y = self.chol.solve(&d);
        d.dot(&y)
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Draw one sample, optionally with covariance inflated by `alpha >= 1`.
    ///
    /// The same standard-normal draw maps monotonically in `alpha`: inflating
    /// the covariance scales the Cholesky factor by `sqrt(alpha)`.
    pub fn sample_inflated<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l_dirty().lower_triangle() * z * alpha.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_inflated(1.0, rng)
    }
}

/// A convex combination of Gaussian components.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<(f64, GaussianEstimate)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, GaussianEstimate)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        let dim = components[0].1.dim();
        let mut total = 0.0;
        for (w, est) in &components {
            if est.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "GaussianMixture::new",
                    left: dim,
                    right: est.dim(),
                });
            }
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "mixture weight {w} outside (0, 1]"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    /// Single-component mixture wrapping `est`.
    pub fn single(est: GaussianEstimate) -> Self {
        Self {
            components: vec![(1.0, est)],
        }
    }

    pub fn components(&self) -> &[(f64, GaussianEstimate)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.components.iter().map(|(w, e)| w * e.pdf(x)).sum()
    }

    /// Log-density via log-sum-exp over the components, stable far into the
    /// tails where the plain pdf underflows.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|(w, e)| w.ln() + e.log_pdf(x))
            .collect();
        let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
    }

    /// Draw one sample: pick a component by weight, then sample it with its
    /// covariance inflated by `alpha >= 1`.
    pub fn sample_inflated<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, est) in &self.components {
            acc += w;
            if u <= acc {
                return est.sample_inflated(alpha, rng);
            }
        }
        self.components.last().unwrap().1.sample_inflated(alpha, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_inflated(1.0, rng)
    }

    /// Collapse the mixture to a single Gaussian with the same first two moments.
    ///
    /// The covariance is the weighted component covariance plus the
    /// spread-of-means term `sum_i w_i (m_i - m)(m_i - m)^T`, which is
    /// positive semi-definite, so the result is at least as wide as the
    /// weighted covariance average.
    pub fn moment_match(&self) -> Result<GaussianEstimate> {
        let n = self.dim();
        let mut mean = DVector::zeros(n);
        for (w, est) in &self.components {
            mean += est.mean() * *w;
        }
        let mut cov = DMatrix::zeros(n, n);
        for (w, est) in &self.components {
            let d = est.mean() - &mean;
            cov += (est.cov() + d.clone() * d.transpose()) * *w;
        }
        GaussianEstimate::new(mean, cov)
    }
}

/// Anything that can be evaluated pointwise as a probability density.
pub trait Density {
    fn dim(&self) -> usize;
    fn pdf(&self, x: &DVector<f64>) -> f64;
    /// Mean +/- 6 sigma box per axis, used for default grid bounds.
    fn envelope(&self) -> Vec<(f64, f64)>;
}

impl Density for GaussianEstimate {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.pdf(x)
    }

    fn envelope(&self) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|i| {
                let s = self.cov[(i, i)].sqrt();
                (self.mean[i] - 6.0 * s, self.mean[i] + 6.0 * s)
            })
            .collect()
    }
}

impl Density for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn pdf(&self, x: &DVector<f64>) -> f64 {
        self.pdf(x)
    }

    fn envelope(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim()];
        for (_, est) in &self.components {
            for (axis, (lo, hi)) in est.envelope().into_iter().enumerate() {
                out[axis].0 = out[axis].0.min(lo);
                out[axis].1 = out[axis].1.max(hi);
            }
        }
        out
    }
}
