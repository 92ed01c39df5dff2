//! Closed-form track fusers and their weight optimization.
//!
//! Implements naive information-sum fusion, covariance intersection (CI),
//! inverse covariance intersection (ICI), harmonic-mean fusion with a
//! Gaussian-approximated denominator mixture (HMD-GA), exact fusion with a
//! known common prior, and centralized measurement fusion. The fusion weight
//! `w` is found by golden-section search; diagnostics cover the
//! cross-covariance consistency residual, the ICI mutual-covariance ordering
//! contradiction, and the eigenvalue interlacing between HMD-GA and ICI.
//!
//! Weight convention, fixed crate-wide: `w` weights the *second* density in
//! the harmonic denominator mixture `(1-w) p1 + w p2`, while ICI's mutual
//! covariance keeps the interchanged form `w G1 + (1-w) G2`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{spd_inverse, symmetrize, GaussianEstimate};

/// Scalar summary used when optimizing the fusion weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightObjective {
    Trace,
    Determinant,
}

/// Whether a weight was optimized or supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightProvenance {
    Optimized,
    Fixed,
}

/// A fusion weight in `[0, 1]` with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct FusionWeight {
    pub omega: f64,
    pub objective: WeightObjective,
    pub how_found: WeightProvenance,
}

impl FusionWeight {
    pub fn fixed(omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidArgument(format!(
                "fusion weight {omega} outside [0, 1]"
            )));
        }
        Ok(Self {
            omega,
            objective: WeightObjective::Trace,
            how_found: WeightProvenance::Fixed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMethod {
    Naive,
    Ci,
    Ici,
    HmdGa,
    Centralized,
    KnownPrior,
}

impl FusionMethod {
    /// Stable lowercase label used in file names and reports.
    pub fn label(&self) -> &'static str {
        match self {
            FusionMethod::Naive => "naive",
            FusionMethod::Ci => "ci",
            FusionMethod::Ici => "ici",
            FusionMethod::HmdGa => "hmd-ga",
            FusionMethod::Centralized => "centralized",
            FusionMethod::KnownPrior => "known-prior",
        }
    }

    /// Parse a label as accepted on command lines and in config files.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(FusionMethod::Naive),
            "ci" => Ok(FusionMethod::Ci),
            "ici" => Ok(FusionMethod::Ici),
            "hmd-ga" | "hmd_ga" | "hmdga" => Ok(FusionMethod::HmdGa),
            "centralized" => Ok(FusionMethod::Centralized),
            "known-prior" | "known_prior" => Ok(FusionMethod::KnownPrior),
            other => Err(Error::InvalidArgument(format!("unknown fuser '{other}'"))),
        }
    }
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A fused estimate together with the weight used and, where the method
/// defines one, the mutual-information component that was divided out.
#[derive(Debug, Clone)]
pub struct FusedResult {
    pub estimate: GaussianEstimate,
    pub weight: Option<FusionWeight>,
    pub mutual: Option<GaussianEstimate>,
    pub method: FusionMethod,
}

fn check_dims(e1: &GaussianEstimate, e2: &GaussianEstimate, context: &'static str) -> Result<()> {
    if e1.dim() != e2.dim() {
        return Err(Error::DimensionMismatch {
            context,
            left: e1.dim(),
            right: e2.dim(),
        });
    }
    Ok(())
}

/// Information-sum fusion; double-counts whatever the inputs share.
pub fn naive(e1: &GaussianEstimate, e2: &GaussianEstimate) -> Result<FusedResult> {
    check_dims(e1, e2, "naive")?;
    let i1 = e1.information();
    let i2 = e2.information();
    let estimate = GaussianEstimate::from_information(
        &(&i1 * e1.mean() + &i2 * e2.mean()),
        &(i1 + i2),
    )?;
    Ok(FusedResult {
        estimate,
        weight: None,
        mutual: None,
        method: FusionMethod::Naive,
    })
}

/// Covariance intersection: convex combination of the information forms.
pub fn ci(e1: &GaussianEstimate, e2: &GaussianEstimate, weight: FusionWeight) -> Result<FusedResult> {
    check_dims(e1, e2, "ci")?;
    let w = weight.omega;
    // The endpoints return an input unchanged; avoid a needless round trip
    // through the information form.
    let estimate = if w == 1.0 {
        e1.clone()
    } else if w == 0.0 {
        e2.clone()
    } else {
        let i1 = e1.information();
        let i2 = e2.information();
        GaussianEstimate::from_information(
            &(&i1 * e1.mean() * w + &i2 * e2.mean() * (1.0 - w)),
            &(i1 * w + i2 * (1.0 - w)),
        )?
    };
    Ok(FusedResult {
        estimate,
        weight: Some(weight),
        mutual: None,
        method: FusionMethod::Ci,
    })
}

/// Mean and covariance of the ICI mutual component `w e1 + (1-w) e2`.
fn ici_mutual(e1: &GaussianEstimate, e2: &GaussianEstimate, w: f64) -> Result<GaussianEstimate> {
    GaussianEstimate::new(
        e1.mean() * w + e2.mean() * (1.0 - w),
        e1.cov() * w + e2.cov() * (1.0 - w),
    )
}

/// Inverse covariance intersection: subtract an approximated mutual
/// component, the covariance-space mixture of the inputs.
pub fn ici(e1: &GaussianEstimate, e2: &GaussianEstimate, weight: FusionWeight) -> Result<FusedResult> {
    check_dims(e1, e2, "ici")?;
    let mutual = ici_mutual(e1, e2, weight.omega)?;
    let estimate = subtract_mutual(e1, e2, &mutual)?;
    Ok(FusedResult {
        estimate,
        weight: Some(weight),
        mutual: Some(mutual),
        method: FusionMethod::Ici,
    })
}

/// Mean and covariance of the Gaussian matched to the harmonic denominator
/// mixture `(1-w) p1 + w p2`: the covariance mixture plus the rank-one
/// spread-of-means term `w(1-w) d d^T`.
fn hmd_mutual(e1: &GaussianEstimate, e2: &GaussianEstimate, w: f64) -> Result<GaussianEstimate> {
    let d = e1.mean() - e2.mean();
    let spread = &d * d.transpose() * (w * (1.0 - w));
    GaussianEstimate::new(
        e1.mean() * (1.0 - w) + e2.mean() * w,
        e1.cov() * (1.0 - w) + e2.cov() * w + spread,
    )
}

/// Harmonic-mean fusion with the denominator mixture replaced by its
/// moment-matched Gaussian.
pub fn hmd_ga(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
) -> Result<FusedResult> {
    check_dims(e1, e2, "hmd_ga")?;
    let mutual = hmd_mutual(e1, e2, weight.omega)?;
    let estimate = subtract_mutual(e1, e2, &mutual)?;
    Ok(FusedResult {
        estimate,
        weight: Some(weight),
        mutual: Some(mutual),
        method: FusionMethod::HmdGa,
    })
}

/// Information-form fusion dividing the mutual component out once:
/// `G^-1 = G1^-1 + G2^-1 - Gm^-1`.
fn subtract_mutual(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    mutual: &GaussianEstimate,
) -> Result<GaussianEstimate> {
    let i1 = e1.information();
    let i2 = e2.information();
    let im = mutual.information();
    let info = i1.clone() + &i2 - &im;
    let iv = i1 * e1.mean() + i2 * e2.mean() - im * mutual.mean();
    GaussianEstimate::from_information(&iv, &info)
}

/// Exact fusion when the common information is known; `mutual = None` means
/// the shared prior carries no information and the result reduces to naive.
pub fn known_prior_fusion(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    mutual: Option<&GaussianEstimate>,
) -> Result<FusedResult> {
    check_dims(e1, e2, "known_prior_fusion")?;
    let estimate = match mutual {
        Some(m) => subtract_mutual(e1, e2, m)?,
        None => naive(e1, e2)?.estimate,
    };
    Ok(FusedResult {
        estimate,
        weight: None,
        mutual: mutual.cloned(),
        method: FusionMethod::KnownPrior,
    })
}

/// A raw linear measurement `z = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    pub z: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Fuse raw measurements into one prior in information form; the result is
/// independent of measurement order.
pub fn centralized(
    prior: &GaussianEstimate,
    measurements: &[LinearMeasurement],
) -> Result<GaussianEstimate> {
    let n = prior.dim();
    let mut info = prior.information();
    let mut iv = &info * prior.mean();
    for m in measurements {
        if m.h.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "centralized",
                left: m.h.ncols(),
                right: n,
            });
        }
        let ri = spd_inverse(&m.r)?;
        let ht_ri = m.h.transpose() * ri;
        info += &ht_ri * &m.h;
        iv += ht_ri * &m.z;
    }
    GaussianEstimate::from_information(&iv, &info)
}

// ---------------------------------------------------------------------------
// Weight optimization
// ---------------------------------------------------------------------------

/// Absolute tolerance of the golden-section search on `w`.
const OMEGA_TOL: f64 = 1e-4;
/// Number of points in the coarse scan that brackets the optimum.
const COARSE_POINTS: usize = 25;

fn matrix_objective(m: &DMatrix<f64>, objective: WeightObjective) -> Result<f64> {
    match objective {
        WeightObjective::Trace => Ok(m.trace()),
        WeightObjective::Determinant => Cholesky::new(m.clone())
            .map(|c| c.determinant())
            .ok_or(Error::NotPositiveDefinite {
                context: "matrix_objective",
                min_eig: f64::NAN,
            }),
    }
}

/// Minimize `f` over `[0, 1]`: coarse scan, then golden-section refinement.
///
/// Boundary optima snap to exactly 0 or 1; a flat objective returns 0.5.
fn golden_section_min<F: FnMut(f64) -> Result<f64>>(mut f: F) -> Result<f64> {
    let xs: Vec<f64> = (0..COARSE_POINTS)
        .map(|i| i as f64 / (COARSE_POINTS - 1) as f64)
        .collect();
    let mut vals = Vec::with_capacity(COARSE_POINTS);
    for &x in &xs {
        vals.push(f(x)?);
    }
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi - lo <= 1e-12 * (lo.abs() + 1.0) {
        return Ok(0.5);
    }
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut a = xs[best.saturating_sub(1)];
    let mut b = xs[(best + 1).min(COARSE_POINTS - 1)];

    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > OMEGA_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    // Snap boundary optima so the degenerate scalar cases return exact 0 / 1.
    if x < 2.0 * OMEGA_TOL {
        Ok(0.0)
    } else if x > 1.0 - 2.0 * OMEGA_TOL {
        Ok(1.0)
    } else {
        Ok(x)
    }
}

/// Find the fusion weight minimizing the method's covariance objective.
///
/// CI and ICI minimize their fused covariance; HMD-GA instead maximizes the
/// mutual component, i.e. minimizes the objective of the mutual covariance's
/// inverse, which needs a single factorization per evaluation.
pub fn optimize_weight(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    method: FusionMethod,
    objective: WeightObjective,
) -> Result<FusionWeight> {
    check_dims(e1, e2, "optimize_weight")?;
    let omega = match method {
        FusionMethod::Ci => {
            let i1 = e1.information();
            let i2 = e2.information();
            golden_section_min(|w| {
                let fused = spd_inverse(&(&i1 * w + &i2 * (1.0 - w)))?;
                matrix_objective(&fused, objective)
            })?
        }
        FusionMethod::Ici => {
            let i1 = e1.information();
            let i2 = e2.information();
            golden_section_min(|w| {
                let gm_inv = spd_inverse(&(e1.cov() * w + e2.cov() * (1.0 - w)))?;
                let fused = spd_inverse(&(&i1 + &i2 - gm_inv))?;
                matrix_objective(&fused, objective)
            })?
        }
        FusionMethod::HmdGa => {
            let d = e1.mean() - e2.mean();
            let dd = &d * d.transpose();
            golden_section_min(|w| {
                let gm = e1.cov() * (1.0 - w) + e2.cov() * w + &dd * (w * (1.0 - w));
                let gm_inv = spd_inverse(&gm)?;
                matrix_objective(&gm_inv, objective)
            })?
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no fusion weight to optimize for {method:?}"
            )))
        }
    };
    Ok(FusionWeight {
        omega,
        objective,
        how_found: WeightProvenance::Optimized,
    })
}

/// Fuse with the method's optimized weight (trace objective).
pub fn fuse_optimized(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    method: FusionMethod,
) -> Result<FusedResult> {
    match method {
        FusionMethod::Naive => naive(e1, e2),
        FusionMethod::Ci => ci(e1, e2, optimize_weight(e1, e2, method, WeightObjective::Trace)?),
        FusionMethod::Ici => ici(e1, e2, optimize_weight(e1, e2, method, WeightObjective::Trace)?),
        FusionMethod::HmdGa => {
            hmd_ga(e1, e2, optimize_weight(e1, e2, method, WeightObjective::Trace)?)
        }
        _ => Err(Error::InvalidArgument(format!(
            "{method:?} is not a pairwise fuser"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Correlated pairs and diagnostics
// ---------------------------------------------------------------------------

/// Two estimates with a known cross-covariance between their errors.
#[derive(Debug, Clone)]
pub struct CorrelatedPair {
    pub est1: GaussianEstimate,
    pub est2: GaussianEstimate,
    pub cross: DMatrix<f64>,
}

impl CorrelatedPair {
    /// Validates that the joint covariance `[[G1, G12], [G12^T, G2]]` is PSD.
    pub fn new(est1: GaussianEstimate, est2: GaussianEstimate, cross: DMatrix<f64>) -> Result<Self> {
        let n = est1.dim();
        if est2.dim() != n || cross.nrows() != n || cross.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "CorrelatedPair::new",
                left: n,
                right: est2.dim().max(cross.nrows()),
            });
        }
        let mut joint = DMatrix::zeros(2 * n, 2 * n);
        joint.view_mut((0, 0), (n, n)).copy_from(est1.cov());
        joint.view_mut((0, n), (n, n)).copy_from(&cross);
        joint.view_mut((n, 0), (n, n)).copy_from(&cross.transpose());
        joint.view_mut((n, n), (n, n)).copy_from(est2.cov());
        symmetrize(&mut joint);
        let min_eig = joint
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-9 {
            return Err(Error::NotPositiveDefinite {
                context: "CorrelatedPair joint covariance",
                min_eig,
            });
        }
        Ok(Self { est1, est2, cross })
    }
}

/// Generator for correlated estimate pairs built from independent information
/// plus a shared (mutual) component.
///
/// Each local covariance satisfies `Gi^-1 = Gind_i^-1 + Gm^-1` and the cross
/// term is `G12 = G1 Gm^-1 G2`; with no mutual component the pair is
/// independent.
#[derive(Debug, Clone)]
pub struct CorrelatedStructure {
    ind1: GaussianEstimate,
    ind2: GaussianEstimate,
    mutual: Option<GaussianEstimate>,
    cov1: DMatrix<f64>,
    cov2: DMatrix<f64>,
    cross: DMatrix<f64>,
}

/// One draw from a [`CorrelatedStructure`]: two unbiased local estimates of
/// `truth` plus the realized mutual component they share.
#[derive(Debug, Clone)]
pub struct CorrelatedSample {
    pub est1: GaussianEstimate,
    pub est2: GaussianEstimate,
    pub mutual: Option<GaussianEstimate>,
}

impl CorrelatedStructure {
    pub fn new(
        ind1_cov: DMatrix<f64>,
        ind2_cov: DMatrix<f64>,
        mutual_cov: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = ind1_cov.nrows();
        let zero = DVector::zeros(n);
        let ind1 = GaussianEstimate::new(zero.clone(), ind1_cov)?;
        let ind2 = GaussianEstimate::new(zero.clone(), ind2_cov)?;
        let mutual = mutual_cov
            .map(|c| GaussianEstimate::new(zero.clone(), c))
            .transpose()?;
        let (cov1, cov2, cross) = match &mutual {
            Some(m) => {
                let im = m.information();
                let cov1 = spd_inverse(&(ind1.information() + &im))?;
                let cov2 = spd_inverse(&(ind2.information() + &im))?;
                let cross = &cov1 * im * &cov2;
                (cov1, cov2, cross)
            }
            None => (
                ind1.cov().clone(),
                ind2.cov().clone(),
                DMatrix::zeros(n, n),
            ),
        };
        Ok(Self {
            ind1,
            ind2,
            mutual,
            cov1,
            cov2,
            cross,
        })
    }

    pub fn local_cov1(&self) -> &DMatrix<f64> {
        &self.cov1
    }

    pub fn local_cov2(&self) -> &DMatrix<f64> {
        &self.cov2
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// The pair's covariance structure packaged with the given means.
    pub fn pair(&self, mean1: DVector<f64>, mean2: DVector<f64>) -> Result<CorrelatedPair> {
        CorrelatedPair::new(
            GaussianEstimate::new(mean1, self.cov1.clone())?,
            GaussianEstimate::new(mean2, self.cov2.clone())?,
            self.cross.clone(),
        )
    }

    /// Draw one correlated pair of unbiased estimates of `truth`.
    ///
    /// The mutual pseudo-measurement `truth + noise(Gm)` is shared by both
    /// locals; each local combines it with its own independent
    /// pseudo-measurement in information form, which reproduces the local
    /// covariances and the cross term exactly.
    pub fn sample<R: Rng + ?Sized>(&self, truth: &DVector<f64>, rng: &mut R) -> Result<CorrelatedSample> {
        let z1 = truth + self.ind1.sample(rng);
        let z2 = truth + self.ind2.sample(rng);
        match &self.mutual {
            Some(m) => {
                let zm = truth + m.sample(rng);
                let im = m.information();
                let mean1 = &self.cov1 * (self.ind1.information() * &z1 + &im * &zm);
                let mean2 = &self.cov2 * (self.ind2.information() * &z2 + &im * &zm);
                Ok(CorrelatedSample {
                    est1: GaussianEstimate::new(mean1, self.cov1.clone())?,
                    est2: GaussianEstimate::new(mean2, self.cov2.clone())?,
                    mutual: Some(GaussianEstimate::new(zm, m.cov().clone())?),
                })
            }
            None => Ok(CorrelatedSample {
                est1: GaussianEstimate::new(z1, self.cov1.clone())?,
                est2: GaussianEstimate::new(z2, self.cov2.clone())?,
                mutual: None,
            }),
        }
    }
}

/// Residual of the cross-covariance consistency condition for HMD-GA:
/// `(1-w) G1^-1 G12 Gm^-1 + w Gm^-1 G12 G2^-1 - G1^-1 G12 G2^-1`.
///
/// Zero means the fused covariance matches the true mean-squared error for
/// this cross-covariance. Reported as a diagnostic, not asserted. At exactly
/// `w = 0.5` the weight is nudged by 1e-6 so the two mixture weights differ,
/// which the underlying uniqueness argument requires.
pub fn consistency_residual_hmd(pair: &CorrelatedPair, weight: FusionWeight) -> Result<DMatrix<f64>> {
    let mut w = weight.omega;
    if (w - 0.5).abs() < 1e-9 {
        w = 0.5 + 1e-6;
    }
    let gm = hmd_mutual(&pair.est1, &pair.est2, w)?;
    let i1 = pair.est1.information();
    let i2 = pair.est2.information();
    let im = gm.information();
    let g12 = &pair.cross;
    Ok(&i1 * g12 * &im * (1.0 - w) + &im * g12 * &i2 * w - i1 * g12 * i2)
}

/// Loewner-order report on the ICI mutual covariance.
///
/// A mutual component that truly upper-bounds the common information must
/// dominate both locals (`Gm >= G1`, `Gm >= G2`); ICI instead takes the
/// covariance mixture, which is dominated *by* construction
/// (`Gm <= w G1 + (1-w) G2`, with equality). The two requirements conflict
/// whenever the locals differ, and this report shows it on concrete inputs.
#[derive(Debug, Clone)]
pub struct IciStructureReport {
    pub mutual: GaussianEstimate,
    /// Smallest eigenvalue of `Gm - G1`; nonnegative iff `Gm >= G1`.
    pub min_eig_vs_1: f64,
    /// Smallest eigenvalue of `Gm - G2`; nonnegative iff `Gm >= G2`.
    pub min_eig_vs_2: f64,
    /// Smallest eigenvalue of `w G1 + (1-w) G2 - Gm`; always ~0 for ICI.
    pub min_eig_upper: f64,
}

impl IciStructureReport {
    pub fn dominates_first(&self) -> bool {
        self.min_eig_vs_1 >= -1e-9
    }

    pub fn dominates_second(&self) -> bool {
        self.min_eig_vs_2 >= -1e-9
    }

    pub fn upper_bound_holds(&self) -> bool {
        self.min_eig_upper >= -1e-9
    }
}

pub fn ici_structure_check(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
) -> Result<IciStructureReport> {
    check_dims(e1, e2, "ici_structure_check")?;
    let w = weight.omega;
    let mutual = ici_mutual(e1, e2, w)?;
    let min_eig = |m: DMatrix<f64>| {
        m.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let upper = e1.cov() * w + e2.cov() * (1.0 - w) - mutual.cov();
    Ok(IciStructureReport {
        min_eig_vs_1: min_eig(mutual.cov() - e1.cov()),
        min_eig_vs_2: min_eig(mutual.cov() - e2.cov()),
        min_eig_upper: min_eig(upper),
        mutual,
    })
}

/// Sorted (descending) fused-covariance spectra of HMD-GA and ICI.
///
/// The ICI spectrum is computed at the complementary weight `1-w` so both
/// fused covariances subtract a mutual term built on the *same* covariance
/// mixture; HMD-GA's differs from it only by the rank-one spread-of-means
/// term, which is what makes the two spectra interlace.
#[derive(Debug, Clone)]
pub struct EigenCompare {
    pub hmd: Vec<f64>,
    pub ici: Vec<f64>,
}

impl EigenCompare {
    /// Checks the interlacing chain
    /// `l_n(HMD) <= l_n(ICI) <= l_(n-1)(HMD) <= ... <= l_1(ICI)`
    /// with relative tolerance `tol`.
    pub fn interlaces(&self, tol: f64) -> bool {
        let n = self.hmd.len();
        for k in 0..n {
            // Ascending index from the bottom of the spectrum.
            let h = self.hmd[n - 1 - k];
            let i = self.ici[n - 1 - k];
            if h > i * (1.0 + tol) + tol {
                return false;
            }
            if k + 1 < n {
                let h_next = self.hmd[n - 2 - k];
                if i > h_next * (1.0 + tol) + tol {
                    return false;
                }
            }
        }
        true
    }
}

pub fn hmd_vs_ici_eigen_compare(
    e1: &GaussianEstimate,
    e2: &GaussianEstimate,
    weight: FusionWeight,
) -> Result<EigenCompare> {
    let hmd = hmd_ga(e1, e2, weight)?;
    let complement = FusionWeight {
        omega: 1.0 - weight.omega,
        ..weight
    };
    let ici_res = ici(e1, e2, complement)?;
    let spectrum = |est: &GaussianEstimate| {
        let mut ev: Vec<f64> = est
            .cov()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    };
    Ok(EigenCompare {
        hmd: spectrum(&hmd.estimate),
        ici: spectrum(&ici_res.estimate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(mean: f64, var: f64) -> GaussianEstimate {
        GaussianEstimate::scalar(mean, var).unwrap()
    }

    fn est2(mean: [f64; 2], cov: [f64; 4]) -> GaussianEstimate {
        GaussianEstimate::new(DVector::from_row_slice(&mean), DMatrix::from_row_slice(2, 2, &cov))
            .unwrap()
    }

    fn reference_pair() -> (GaussianEstimate, GaussianEstimate) {
        (
            est2([0.5, 1.0], [2.5, -1.0, -1.0, 1.2]),
            est2([2.0, 1.0], [0.8, -0.5, -0.5, 4.0]),
        )
    }

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn random_pair(n: usize, rng: &mut ChaCha8Rng) -> (GaussianEstimate, GaussianEstimate) {
        let m1 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let m2 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        (
            GaussianEstimate::new(m1, random_pd(n, rng)).unwrap(),
            GaussianEstimate::new(m2, random_pd(n, rng)).unwrap(),
        )
    }

    #[test]
    fn naive_halves_equal_covariances() {
        let e = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
        let f = naive(&e, &e).unwrap();
        assert_relative_eq!(f.estimate.cov()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.estimate.mean().norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn naive_averages_symmetric_scalars() {
        let f = naive(&scalar(0.0, 2.0), &scalar(4.0, 2.0)).unwrap();
        assert_relative_eq!(f.estimate.mean()[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.estimate.cov()[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ci_endpoints_return_inputs() {
        let (e1, e2) = reference_pair();
        let f1 = ci(&e1, &e2, FusionWeight::fixed(1.0).unwrap()).unwrap();
        assert_eq!(f1.estimate.mean(), e1.mean());
        assert_eq!(f1.estimate.cov(), e1.cov());
        let f0 = ci(&e1, &e2, FusionWeight::fixed(0.0).unwrap()).unwrap();
        assert_eq!(f0.estimate.mean(), e2.mean());
    }

    #[test]
    fn ci_of_identical_inputs_is_identity() {
        let (e1, _) = reference_pair();
        let f = ci(&e1, &e1, FusionWeight::fixed(0.3).unwrap()).unwrap();
        assert!((f.estimate.mean() - e1.mean()).norm() < 1e-12);
        assert!((f.estimate.cov() - e1.cov()).norm() < 1e-12);
    }

    #[test]
    fn ici_of_identical_inputs_is_identity() {
        let (e1, _) = reference_pair();
        let f = ici(&e1, &e1, FusionWeight::fixed(0.4).unwrap()).unwrap();
        assert!((f.estimate.mean() - e1.mean()).norm() < 1e-9);
        assert!((f.estimate.cov() - e1.cov()).norm() < 1e-9);
    }

    #[test]
    fn hmd_ga_of_identical_inputs_is_identity() {
        let (e1, _) = reference_pair();
        let f = hmd_ga(&e1, &e1, FusionWeight::fixed(0.4).unwrap()).unwrap();
        assert!((f.estimate.mean() - e1.mean()).norm() < 1e-9);
        assert!((f.estimate.cov() - e1.cov()).norm() < 1e-9);
    }

    #[test]
    fn hmd_ga_scalar_worked_example() {
        // e1 = (0, 2), e2 = (1, 1), w = 0.5: spread term 0.25, mutual
        // covariance 0.5*2 + 0.5*1 + 0.25 = 1.75, fused covariance
        // 1/(0.5 + 1 - 1/1.75) = 1.076923, fused mean
        // 1.076923 * (0 + 1 - 0.5/1.75) = 0.769231.
        let f = hmd_ga(&scalar(0.0, 2.0), &scalar(1.0, 1.0), FusionWeight::fixed(0.5).unwrap())
            .unwrap();
        let mutual = f.mutual.as_ref().unwrap();
        assert_relative_eq!(mutual.cov()[(0, 0)], 1.75, epsilon = 1e-12);
        assert_relative_eq!(mutual.mean()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.estimate.cov()[(0, 0)], 1.0 / (1.5 - 1.0 / 1.75), epsilon = 1e-12);
        assert_relative_eq!(f.estimate.mean()[0], 0.769_230_769_230_769_2, epsilon = 1e-9);
    }

    #[test]
    fn hmd_mutual_matches_mixture_moment_match() {
        use crate::gaussian::GaussianMixture;
        let (e1, e2) = reference_pair();
        let w = 0.3;
        let direct = hmd_mutual(&e1, &e2, w).unwrap();
        let mm = GaussianMixture::new(vec![(1.0 - w, e1), (w, e2)])
            .unwrap()
            .moment_match()
            .unwrap();
        assert!((direct.mean() - mm.mean()).norm() < 1e-12);
        assert!((direct.cov() - mm.cov()).norm() < 1e-12);
    }

    #[test]
    fn naive_matches_grid_product_density() {
        use crate::gaussian::Density;
        use crate::grid::GridDensity;

        // Naive fusion is the normalized pointwise product of the inputs;
        // check its moments against a tabulated product density.
        struct Product<'a>(&'a GaussianEstimate, &'a GaussianEstimate);
        impl Density for Product<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn pdf(&self, x: &DVector<f64>) -> f64 {
                self.0.pdf(x) * self.1.pdf(x)
            }
            fn envelope(&self) -> Vec<(f64, f64)> {
                GridDensity::joint_envelope(&[self.0, self.1])
            }
        }

        let (e1, e2) = reference_pair();
        let f = naive(&e1, &e2).unwrap();
        let grid = GridDensity::evaluate_auto(&Product(&e1, &e2), 801).unwrap();
        let (mean, cov) = grid.moments();
        assert!((f.estimate.mean() - &mean).norm() < 1e-4);
        assert!((f.estimate.cov() - &cov).norm() < 1e-4);
    }

    #[test]
    fn optimized_scalar_ci_degenerates_to_tighter_input() {
        let e1 = scalar(0.0, 2.0);
        let e2 = scalar(1.0, 1.0);
        let w = optimize_weight(&e1, &e2, FusionMethod::Ci, WeightObjective::Trace).unwrap();
        assert_eq!(w.omega, 0.0);
        let f = ci(&e1, &e2, w).unwrap();
        assert_eq!(f.estimate.mean()[0], 1.0);
    }

    #[test]
    fn optimized_scalar_ici_degenerates_to_tighter_input() {
        let e1 = scalar(0.0, 2.0);
        let e2 = scalar(1.0, 1.0);
        let w = optimize_weight(&e1, &e2, FusionMethod::Ici, WeightObjective::Trace).unwrap();
        assert_eq!(w.omega, 1.0);
        let f = ici(&e1, &e2, w).unwrap();
        assert_relative_eq!(f.estimate.mean()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(f.estimate.cov()[(0, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn optimize_weight_flat_objective_ties_to_half() {
        let (e1, _) = reference_pair();
        let w = optimize_weight(&e1, &e1, FusionMethod::Ci, WeightObjective::Trace).unwrap();
        assert_eq!(w.omega, 0.5);
    }

    #[test]
    fn optimized_scalar_hmd_matches_closed_form() {
        // For scalars the mutual-maximizing weight is
        // clamp(0.5 + (G2 - G1) / (2 d^2), 0, 1).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let e1 = scalar(rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0));
            let e2 = scalar(rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0));
            let d = e1.mean()[0] - e2.mean()[0];
            if d.abs() < 0.05 {
                continue;
            }
            let expect = (0.5 + (e2.cov()[(0, 0)] - e1.cov()[(0, 0)]) / (2.0 * d * d))
                .clamp(0.0, 1.0);
            let w = optimize_weight(&e1, &e2, FusionMethod::HmdGa, WeightObjective::Trace)
                .unwrap()
                .omega;
            assert!(
                (w - expect).abs() < 2e-4,
                "golden-section {w} vs closed form {expect}"
            );
        }
    }

    #[test]
    fn permutation_symmetry_with_complementary_weight() {
        let (e1, e2) = reference_pair();
        for &w in &[0.2, 0.5, 0.8] {
            let fw = FusionWeight::fixed(w).unwrap();
            let cw = FusionWeight::fixed(1.0 - w).unwrap();
            for f in [ci, ici, hmd_ga] {
                let a = f(&e1, &e2, fw).unwrap();
                let b = f(&e2, &e1, cw).unwrap();
                assert!((a.estimate.mean() - b.estimate.mean()).norm() < 1e-10);
                assert!((a.estimate.cov() - b.estimate.cov()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn conservatism_ordering_pointwise_in_weight() {
        // With mixture bases aligned (complementary weights), the fused
        // covariances order as naive <= HMD <= ICI <= CI for every weight:
        // each step drops a PSD term from the fused information.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let (e1, e2) = random_pair(2, &mut rng);
            let tn = naive(&e1, &e2).unwrap().estimate.cov().trace();
            for k in 0..=10 {
                let w = k as f64 / 10.0;
                let fw = FusionWeight::fixed(w).unwrap();
                let cw = FusionWeight::fixed(1.0 - w).unwrap();
                let th = hmd_ga(&e1, &e2, fw).unwrap().estimate.cov().trace();
                let ti = ici(&e1, &e2, cw).unwrap().estimate.cov().trace();
                let tc = ci(&e1, &e2, fw).unwrap().estimate.cov().trace();
                assert!(tn <= th * (1.0 + 1e-9), "naive {tn} > hmd {th} at w={w}");
                assert!(th <= ti * (1.0 + 1e-9), "hmd {th} > ici {ti} at w={w}");
                assert!(ti <= tc * (1.0 + 1e-9), "ici {ti} > ci {tc} at w={w}");
            }
        }
    }

    #[test]
    fn reference_pair_traces_at_half_weight() {
        let (e1, e2) = reference_pair();
        let w = FusionWeight::fixed(0.5).unwrap();
        let tn = naive(&e1, &e2).unwrap().estimate.cov().trace();
        let th = hmd_ga(&e1, &e2, w).unwrap().estimate.cov().trace();
        let ti = ici(&e1, &e2, w).unwrap().estimate.cov().trace();
        let tc = ci(&e1, &e2, w).unwrap().estimate.cov().trace();
        assert_relative_eq!(tn, 1.3759, epsilon = 1e-3);
        assert_relative_eq!(th, 1.9355, epsilon = 1e-3);
        assert_relative_eq!(ti, 2.0536, epsilon = 1e-3);
        assert_relative_eq!(tc, 2.7518, epsilon = 1e-3);
        let f = hmd_ga(&e1, &e2, w).unwrap();
        assert_relative_eq!(f.estimate.mean()[0], 1.8200, epsilon = 1e-3);
        assert_relative_eq!(f.estimate.mean()[1], 0.5003, epsilon = 1e-3);
    }

    #[test]
    fn known_prior_none_reduces_to_naive() {
        let (e1, e2) = reference_pair();
        let a = known_prior_fusion(&e1, &e2, None).unwrap();
        let b = naive(&e1, &e2).unwrap();
        assert!((a.estimate.mean() - b.estimate.mean()).norm() < 1e-12);
    }

    #[test]
    fn known_prior_of_identical_inputs_and_mutual_is_identity() {
        let (e1, _) = reference_pair();
        let f = known_prior_fusion(&e1, &e1, Some(&e1)).unwrap();
        assert!((f.estimate.mean() - e1.mean()).norm() < 1e-9);
        assert!((f.estimate.cov() - e1.cov()).norm() < 1e-9);
    }

    #[test]
    fn known_prior_fusion_is_mse_consistent() {
        // Draw correlated pairs with a known mutual component, fuse exactly,
        // and check the sample covariance of the fused error against the
        // reported covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let structure = CorrelatedStructure::new(
            DMatrix::identity(2, 2) * 0.8,
            DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.9]),
            Some(DMatrix::identity(2, 2) * 2.0),
        )
        .unwrap();
        let truth = DVector::from_row_slice(&[1.0, -2.0]);
        let runs = 10_000;
        let mut sum = DVector::<f64>::zeros(2);
        let mut sq = DMatrix::<f64>::zeros(2, 2);
        let mut reported = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..runs {
            let s = structure.sample(&truth, &mut rng).unwrap();
            let f = known_prior_fusion(&s.est1, &s.est2, s.mutual.as_ref()).unwrap();
            let e = f.estimate.mean() - &truth;
            sum += &e;
            sq += &e * e.transpose();
            reported = f.estimate.cov().clone();
        }
        let sample_cov = sq / runs as f64;
        assert!(
            (sample_cov.trace() - reported.trace()).abs() / reported.trace() < 0.05,
            "sample {} vs reported {}",
            sample_cov.trace(),
            reported.trace()
        );
        // Unbiasedness: mean error within 3 standard errors.
        let se = (reported.trace() / runs as f64).sqrt();
        assert!(sum.norm() / runs as f64 <= 3.0 * se);
    }

    #[test]
    fn centralized_no_measurements_is_identity() {
        let (e1, _) = reference_pair();
        let f = centralized(&e1, &[]).unwrap();
        assert!((f.mean() - e1.mean()).norm() < 1e-12);
    }

    #[test]
    fn centralized_huge_noise_is_near_identity() {
        let (e1, _) = reference_pair();
        let m = LinearMeasurement {
            z: DVector::from_row_slice(&[100.0, -50.0]),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 1e12,
        };
        let f = centralized(&e1, &[m]).unwrap();
        assert!((f.mean() - e1.mean()).norm() < 1e-3);
    }

    #[test]
    fn centralized_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e1, _) = random_pair(2, &mut rng);
        let ms: Vec<LinearMeasurement> = (0..4)
            .map(|_| LinearMeasurement {
                z: DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)),
                h: DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)),
                r: random_pd(2, &mut rng),
            })
            .collect();
        let fwd = centralized(&e1, &ms).unwrap();
        let rev: Vec<LinearMeasurement> = ms.iter().rev().cloned().collect();
        let bwd = centralized(&e1, &rev).unwrap();
        assert!((fwd.mean() - bwd.mean()).norm() < 1e-8);
        assert!((fwd.cov() - bwd.cov()).norm() < 1e-8);
    }

    #[test]
    fn consistency_residual_zero_for_independent_pair() {
        let (e1, e2) = reference_pair();
        let pair = CorrelatedPair::new(e1, e2, DMatrix::zeros(2, 2)).unwrap();
        let r = consistency_residual_hmd(&pair, FusionWeight::fixed(0.3).unwrap()).unwrap();
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn consistency_residual_perfect_scalar_correlation() {
        // G1 = G2 = G12 = 1 with equal means: the mutual covariance is 1 for
        // any weight, so the residual collapses to (1-w) + w - 1 = 0.
        let e = scalar(0.0, 1.0);
        let pair = CorrelatedPair::new(e.clone(), e, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let r = consistency_residual_hmd(&pair, FusionWeight::fixed(0.5).unwrap()).unwrap();
        assert!(r.norm() < 1e-9);
    }

    #[test]
    fn correlated_structure_scalar_hand_values() {
        // ind1 = ind2 = mutual = 1: locals 0.5, cross 0.25.
        let s = CorrelatedStructure::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            Some(DMatrix::from_element(1, 1, 1.0)),
        )
        .unwrap();
        assert_relative_eq!(s.local_cov1()[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.cross()[(0, 0)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn correlated_structure_no_mutual_is_independent() {
        let s = CorrelatedStructure::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 2.0,
            None,
        )
        .unwrap();
        assert_eq!(s.cross().norm(), 0.0);
    }

    #[test]
    fn correlated_structure_empirical_cross_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let s = CorrelatedStructure::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
            DMatrix::from_row_slice(2, 2, &[0.6, -0.1, -0.1, 1.3]),
            Some(DMatrix::identity(2, 2) * 1.5),
        )
        .unwrap();
        let truth = DVector::zeros(2);
        let runs = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..runs {
            let draw = s.sample(&truth, &mut rng).unwrap();
            let d1 = draw.est1.mean() - &truth;
            let d2 = draw.est2.mean() - &truth;
            acc += d1 * d2.transpose();
        }
        acc /= runs as f64;
        let rel = (&acc - s.cross()).norm() / s.cross().norm();
        assert!(rel < 0.03, "empirical cross off by {rel}");
    }

    #[test]
    fn ici_structure_identical_inputs_all_equalities() {
        let (e1, _) = reference_pair();
        let r = ici_structure_check(&e1, &e1, FusionWeight::fixed(0.4).unwrap()).unwrap();
        assert!(r.dominates_first() && r.dominates_second() && r.upper_bound_holds());
        assert!(r.min_eig_vs_1.abs() < 1e-9);
    }

    #[test]
    fn ici_structure_contradiction_example() {
        // G1 = I, G2 = 4I, w = 0.5: mutual 2.5 I cannot dominate G2.
        let e1 = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let e2 = GaussianEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2) * 4.0).unwrap();
        let r = ici_structure_check(&e1, &e2, FusionWeight::fixed(0.5).unwrap()).unwrap();
        assert!(r.dominates_first());
        assert!(!r.dominates_second());
        assert_relative_eq!(r.min_eig_vs_2, -1.5, epsilon = 1e-9);
        assert!(r.upper_bound_holds());
        assert!(r.min_eig_upper.abs() < 1e-9);
    }

    #[test]
    fn eigen_compare_identical_inputs() {
        let (e1, _) = reference_pair();
        let c = hmd_vs_ici_eigen_compare(&e1, &e1, FusionWeight::fixed(0.5).unwrap()).unwrap();
        for (a, b) in c.hmd.iter().zip(c.ici.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert!(c.interlaces(1e-9));
    }

    #[test]
    fn eigen_compare_interlaces_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.random_range(2..=5);
            let (e1, e2) = random_pair(n, &mut rng);
            for &w in &[0.3, 0.5, 0.7] {
                let c =
                    hmd_vs_ici_eigen_compare(&e1, &e2, FusionWeight::fixed(w).unwrap()).unwrap();
                assert!(c.interlaces(1e-9), "violation at n={n} w={w}");
            }
        }
    }

    #[test]
    fn recursive_hmd_of_identical_triple_is_identity() {
        let (e1, _) = reference_pair();
        let w = FusionWeight::fixed(0.5).unwrap();
        let f12 = hmd_ga(&e1, &e1, w).unwrap();
        let f = hmd_ga(&f12.estimate, &e1, w).unwrap();
        assert!((f.estimate.mean() - e1.mean()).norm() < 1e-8);
        assert!((f.estimate.cov() - e1.cov()).norm() < 1e-8);
    }

    #[test]
    fn hmd_recursion_bounded_by_worst_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let (e1, e2) = random_pair(2, &mut rng);
            let (e3, _) = random_pair(2, &mut rng);
            let f12 = fuse_optimized(&e1, &e2, FusionMethod::HmdGa).unwrap();
            let f = fuse_optimized(&f12.estimate, &e3, FusionMethod::HmdGa).unwrap();
            let worst = e1
                .cov()
                .trace()
                .max(e2.cov().trace())
                .max(e3.cov().trace());
            assert!(f.estimate.cov().trace() <= worst * (1.0 + 1e-9));
        }
    }

    #[test]
    fn fusers_are_unbiased_on_correlated_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let s = CorrelatedStructure::new(
            DMatrix::identity(2, 2) * 0.9,
            DMatrix::identity(2, 2) * 1.4,
            Some(DMatrix::identity(2, 2) * 2.0),
        )
        .unwrap();
        let truth = DVector::from_row_slice(&[0.5, -0.5]);
        let runs = 10_000;
        let mut sums = vec![DVector::<f64>::zeros(2); 4];
        let mut traces = [0.0_f64; 4];
        for _ in 0..runs {
            let draw = s.sample(&truth, &mut rng).unwrap();
            for (k, method) in [
                FusionMethod::Naive,
                FusionMethod::Ci,
                FusionMethod::Ici,
                FusionMethod::HmdGa,
            ]
            .into_iter()
            .enumerate()
            {
                let f = fuse_optimized(&draw.est1, &draw.est2, method).unwrap();
                sums[k] += f.estimate.mean() - &truth;
                traces[k] = f.estimate.cov().trace();
            }
        }
        for (k, sum) in sums.iter().enumerate() {
            let mean_err = sum.norm() / runs as f64;
            let se = (traces[k] / runs as f64).sqrt();
            assert!(mean_err <= 3.0 * se, "fuser {k} mean error {mean_err} > 3 SE {se}");
        }
    }
}
