//! Local-node tracking: linear Kalman filtering, range-bearing EKF updates,
//! probabilistic data association (PDA) against Poisson clutter, and the
//! track lifecycle automaton with two-point initialization.
//!
//! State convention for planar tracking is `[x, y, vx, vy]` in ENU meters;
//! bearings are measured from the east axis, counterclockwise, and every
//! bearing innovation is wrapped into `(-pi, pi]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{spd_inverse, GaussianEstimate};

/// Linear motion model `x_{k+1} = F x_k + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct MotionModel {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub dt: f64,
}

impl MotionModel {
    pub fn from_parts(f: DMatrix<f64>, q: DMatrix<f64>, dt: f64) -> Result<Self> {
        if f.nrows() != f.ncols() || q.nrows() != q.ncols() || f.nrows() != q.nrows() {
            return Err(Error::DimensionMismatch {
                context: "MotionModel::from_parts",
                left: f.nrows(),
                right: q.nrows(),
            });
        }
        Ok(Self { f, q, dt })
    }

    /// Nearly-constant-velocity model for `[x, y, vx, vy]` with
    /// continuous-time acceleration intensity `q_tilde` (m^2/s^3).
    pub fn ncv(dt: f64, q_tilde: f64) -> Self {
        let mut f = DMatrix::identity(4, 4);
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
        let mut q = DMatrix::zeros(4, 4);
        q[(0, 0)] = a;
        q[(1, 1)] = a;
        q[(0, 2)] = b;
        q[(2, 0)] = b;
        q[(1, 3)] = b;
        q[(3, 1)] = b;
        q[(2, 2)] = c;
        q[(3, 3)] = c;
        Self {
            f,
            q: q * q_tilde,
            dt,
        }
    }
}

/// Kalman time update: `m -> F m`, `P -> F P F^T + Q`.
pub fn kf_predict(est: &GaussianEstimate, model: &MotionModel) -> Result<GaussianEstimate> {
    GaussianEstimate::new(
        &model.f * est.mean(),
        &model.f * est.cov() * model.f.transpose() + &model.q,
    )
}

/// Kalman measurement update in Joseph form, which keeps the covariance
/// symmetric PD under roundoff.
pub fn kf_update(
    est: &GaussianEstimate,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianEstimate> {
    let innovation = z - h * est.mean();
    joseph_update(est, &innovation, h, r)
}

fn joseph_update(
    est: &GaussianEstimate,
    innovation: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianEstimate> {
    let p = est.cov();
    let s = h * p * h.transpose() + r;
    let s_inv = spd_inverse(&s).map_err(|_| Error::NotPositiveDefinite {
        context: "innovation covariance",
        min_eig: f64::NAN,
    })?;
    let k = p * h.transpose() * s_inv;
    let n = est.dim();
    let ikh = DMatrix::identity(n, n) - &k * h;
    let cov = &ikh * p * ikh.transpose() + &k * r * k.transpose();
    GaussianEstimate::new(est.mean() + k * innovation, cov)
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Minimum predicted range for a well-conditioned bearing Jacobian.
const MIN_RANGE: f64 = 1.0;

/// A 2-D range-bearing sensor at a fixed ENU position.
#[derive(Debug, Clone)]
pub struct RangeBearingSensor {
    pub position: DVector<f64>,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub coverage: f64,
    pub p_detect: f64,
    /// Expected clutter per unit measurement volume (1 / (m * rad)).
    pub clutter_density: f64,
}

impl RangeBearingSensor {
    pub fn new(
        position: DVector<f64>,
        sigma_r: f64,
        sigma_theta: f64,
        coverage: f64,
        p_detect: f64,
        clutter_density: f64,
    ) -> Result<Self> {
        if sigma_r <= 0.0 || sigma_theta <= 0.0 {
            return Err(Error::InvalidArgument(
                "sensor noise standard deviations must be positive".into(),
            ));
        }
        if !(p_detect > 0.0 && p_detect <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "detection probability {p_detect} outside (0, 1]"
            )));
        }
        if coverage <= 0.0 || clutter_density < 0.0 {
            return Err(Error::InvalidArgument(
                "coverage must be positive and clutter density nonnegative".into(),
            ));
        }
        if position.len() != 2 {
            return Err(Error::UnsupportedDimension(position.len()));
        }
        Ok(Self {
            position,
            sigma_r,
            sigma_theta,
            coverage,
            p_detect,
            clutter_density,
        })
    }

    /// Noise-free measurement `[range, bearing]` of a position (first two
    /// state components).
    pub fn measure(&self, state: &DVector<f64>) -> DVector<f64> {
        let dx = state[0] - self.position[0];
        let dy = state[1] - self.position[1];
        DVector::from_row_slice(&[(dx * dx + dy * dy).sqrt(), dy.atan2(dx)])
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(&[
            self.sigma_r * self.sigma_r,
            self.sigma_theta * self.sigma_theta,
        ]))
    }

    /// Analytic measurement Jacobian at `state` (2 x state-dim; zero past
    /// the position block).
    pub fn jacobian(&self, state: &DVector<f64>) -> Result<DMatrix<f64>> {
        let dx = state[0] - self.position[0];
        let dy = state[1] - self.position[1];
        let r2 = dx * dx + dy * dy;
        let r = r2.sqrt();
        if r < MIN_RANGE {
            return Err(Error::SingularGeometry {
                range: r,
                min: MIN_RANGE,
            });
        }
        let mut h = DMatrix::zeros(2, state.len());
        h[(0, 0)] = dx / r;
        h[(0, 1)] = dy / r;
        h[(1, 0)] = -dy / r2;
        h[(1, 1)] = dx / r2;
        Ok(h)
    }

    pub fn in_coverage(&self, state: &DVector<f64>) -> bool {
        self.measure(state)[0] <= self.coverage
    }

    /// Expected clutter measurements per scan over the full polar field of
    /// view (`density * coverage * 2 pi`).
    pub fn clutter_mean(&self) -> f64 {
        self.clutter_density * self.coverage * 2.0 * std::f64::consts::PI
    }

    /// One scan: each in-coverage truth is detected with `p_detect` and
    /// corrupted by measurement noise; Poisson clutter is appended uniformly
    /// over the polar field of view.
    pub fn generate_scan<R: Rng + ?Sized>(
        &self,
        truths: &[DVector<f64>],
        rng: &mut R,
    ) -> Vec<DVector<f64>> {
        let mut scan = Vec::new();
        for truth in truths {
            if !self.in_coverage(truth) {
                continue;
            }
            if rng.random::<f64>() > self.p_detect {
                continue;
            }
            let z = self.measure(truth);
            let nr: f64 = rng.sample(StandardNormal);
            let nt: f64 = rng.sample(StandardNormal);
            scan.push(DVector::from_row_slice(&[
                z[0] + self.sigma_r * nr,
                wrap_angle(z[1] + self.sigma_theta * nt),
            ]));
        }
        let mean = self.clutter_mean();
        if mean > 0.0 {
            let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            for _ in 0..count {
                scan.push(DVector::from_row_slice(&[
                    rng.random_range(0.0..self.coverage),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                ]));
            }
        }
        scan
    }

    /// Convert a polar measurement to an ENU position with its linearized
    /// Cartesian covariance.
    pub fn to_cartesian(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (r, theta) = (z[0], z[1]);
        let (st, ct) = theta.sin_cos();
        let pos = DVector::from_row_slice(&[
            self.position[0] + r * ct,
            self.position[1] + r * st,
        ]);
        let jac = DMatrix::from_row_slice(2, 2, &[ct, -r * st, st, r * ct]);
        let cov = &jac * self.noise_cov() * jac.transpose();
        (pos, cov)
    }
}

/// EKF update against one range-bearing measurement, with the Jacobian
/// linearized at the predicted mean and the bearing innovation wrapped.
pub fn ekf_update_range_bearing(
    est: &GaussianEstimate,
    z: &DVector<f64>,
    sensor: &RangeBearingSensor,
) -> Result<GaussianEstimate> {
    let h = sensor.jacobian(est.mean())?;
    let predicted = sensor.measure(est.mean());
    let innovation = DVector::from_row_slice(&[
        z[0] - predicted[0],
        wrap_angle(z[1] - predicted[1]),
    ]);
    joseph_update(est, &innovation, &h, &sensor.noise_cov())
}

/// Outcome of one PDA scan against a predicted estimate.
#[derive(Debug, Clone)]
pub struct PdaOutcome {
    pub estimate: GaussianEstimate,
    /// Indices (into the scan) of measurements inside the gate.
    pub gated: Vec<usize>,
    /// Probability that none of the gated measurements originated from the
    /// target; 1 when the gate is empty.
    pub missed_probability: f64,
}

/// Probabilistic data association update for a range-bearing sensor.
///
/// Measurements are gated on the innovation Mahalanobis distance at the
/// chi-square quantile of mass `gate_mass` (2 degrees of freedom). The
/// association probabilities use a Poisson clutter model with the sensor's
/// clutter density; the update blends all gated innovations and adds the
/// spread-of-innovations term to the covariance.
pub fn pda_update(
    est: &GaussianEstimate,
    scan: &[DVector<f64>],
    sensor: &RangeBearingSensor,
    gate_mass: f64,
) -> Result<PdaOutcome> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    if !(gate_mass > 0.0 && gate_mass < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gate mass {gate_mass} outside (0, 1)"
        )));
    }
    let h = sensor.jacobian(est.mean())?;
    let r = sensor.noise_cov();
    let predicted = sensor.measure(est.mean());
    let p = est.cov();
    let s = &h * p * h.transpose() + &r;
    let s_inv = spd_inverse(&s)?;
    let gate = ChiSquared::new(2.0).expect("valid dof").inverse_cdf(gate_mass);

    let mut gated = Vec::new();
    let mut innovations = Vec::new();
    for (idx, z) in scan.iter().enumerate() {
        let nu = DVector::from_row_slice(&[
            z[0] - predicted[0],
            wrap_angle(z[1] - predicted[1]),
        ]);
        let d2 = (nu.transpose() * &s_inv * &nu)[(0, 0)];
        if d2 <= gate {
            gated.push(idx);
            innovations.push(nu);
        }
    }
    if innovations.is_empty() {
        return Ok(PdaOutcome {
            estimate: est.clone(),
            gated,
            missed_probability: 1.0,
        });
    }

    // Likelihood ratios against the clutter density; the no-detection event
    // keeps mass (1 - Pd * Pg).
    let det_s = s
        .clone()
        .cholesky()
        .map(|c| c.determinant())
        .ok_or(Error::NotPositiveDefinite {
            context: "pda innovation covariance",
            min_eig: f64::NAN,
        })?;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det_s.sqrt());
    let lambda = sensor.clutter_density.max(1e-30);
    let pd = sensor.p_detect;
    let pg = gate_mass;
    let mut likelihoods = Vec::with_capacity(innovations.len());
    for nu in &innovations {
        let d2 = (nu.transpose() * &s_inv * nu)[(0, 0)];
        likelihoods.push(pd * norm * (-0.5 * d2).exp() / lambda);
    }
    let miss_mass = 1.0 - pd * pg;
    let total = miss_mass + likelihoods.iter().sum::<f64>();
    let beta0 = miss_mass / total;
    let betas: Vec<f64> = likelihoods.iter().map(|l| l / total).collect();

    let mut combined = DVector::zeros(2);
    for (beta, nu) in betas.iter().zip(&innovations) {
        combined += nu * *beta;
    }
    let k = p * h.transpose() * &s_inv;
    let mean = est.mean() + &k * &combined;

    let updated = joseph_update(est, &combined, &h, &r)?;
    let mut spread = DMatrix::zeros(2, 2);
    for (beta, nu) in betas.iter().zip(&innovations) {
        spread += nu * nu.transpose() * *beta;
    }
    spread -= &combined * combined.transpose();
    let cov = p * beta0 + updated.cov() * (1.0 - beta0) + &k * spread * k.transpose();

    Ok(PdaOutcome {
        estimate: GaussianEstimate::new(mean, cov)?,
        gated,
        missed_probability: beta0,
    })
}

/// Consecutive misses after which a confirmed track is deleted.
pub const CONFIRMED_DELETE_MISSES: u32 = 6;
/// Consecutive misses after which a tentative track is deleted.
pub const TENTATIVE_DELETE_MISSES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// One local track with its lifecycle state.
///
/// Tracks are born tentative from two paired detections in consecutive
/// scans (so they start with two hits); the first associated detection
/// after birth confirms them, while two consecutive post-birth misses
/// delete them. Confirmed tracks are deleted after six consecutive misses.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub estimate: GaussianEstimate,
    pub status: TrackStatus,
    pub miss_count: u32,
    pub last_update: f64,
}

impl Track {
    pub fn tentative(id: u64, estimate: GaussianEstimate, time: f64) -> Self {
        Self {
            id,
            estimate,
            status: TrackStatus::Tentative,
            miss_count: 0,
            last_update: time,
        }
    }

    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Deleted
    }

    /// Advance the lifecycle automaton after a scan.
    pub fn register_scan(&mut self, had_hit: bool, time: f64) {
        if self.status == TrackStatus::Deleted {
            return;
        }
        if had_hit {
            self.miss_count = 0;
            self.last_update = time;
            if self.status == TrackStatus::Tentative {
                self.status = TrackStatus::Confirmed;
            }
        } else {
            self.miss_count += 1;
            let limit = match self.status {
                TrackStatus::Tentative => TENTATIVE_DELETE_MISSES,
                _ => CONFIRMED_DELETE_MISSES,
            };
            if self.miss_count >= limit {
                self.status = TrackStatus::Deleted;
            }
        }
    }
}

/// Two-point initialization from paired Cartesian detections at consecutive
/// scans: position from the newer detection, velocity from the displacement.
///
/// The covariance carries the exact blocks of the linear combination:
/// `cov(p, v) = R2 / dt` and `cov(v) = (R1 + R2) / dt^2`.
pub fn two_point_init(
    p1: &DVector<f64>,
    r1: &DMatrix<f64>,
    p2: &DVector<f64>,
    r2: &DMatrix<f64>,
    dt: f64,
) -> Result<GaussianEstimate> {
    if dt <= 0.0 {
        return Err(Error::InvalidArgument("two-point init needs dt > 0".into()));
    }
    let v = (p2 - p1) / dt;
    let mean = DVector::from_fn(4, |i, _| if i < 2 { p2[i] } else { v[i - 2] });
    let mut cov = DMatrix::zeros(4, 4);
    cov.view_mut((0, 0), (2, 2)).copy_from(r2);
    let cross = r2 / dt;
    cov.view_mut((0, 2), (2, 2)).copy_from(&cross);
    cov.view_mut((2, 0), (2, 2)).copy_from(&cross.transpose());
    cov.view_mut((2, 2), (2, 2)).copy_from(&((r1 + r2) / (dt * dt)));
    GaussianEstimate::new(mean, cov)
}

/// A leftover detection retained one scan for pairing into a new track.
#[derive(Debug, Clone)]
struct InitCandidate {
    pos: DVector<f64>,
    cov: DMatrix<f64>,
    time: f64,
}

/// Per-sensor track manager: predict, PDA-update, lifecycle, and two-point
/// initiation from detections no live track gated.
#[derive(Debug)]
pub struct TrackManager {
    pub tracks: Vec<Track>,
    candidates: Vec<InitCandidate>,
    next_id: u64,
    gate_mass: f64,
    /// Maximum pairing speed for initiation, m/s.
    max_init_speed: f64,
}

impl TrackManager {
    pub fn new(gate_mass: f64, max_init_speed: f64) -> Self {
        Self {
            tracks: Vec::new(),
            candidates: Vec::new(),
            next_id: 0,
            gate_mass,
            max_init_speed,
        }
    }

    pub fn live_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_live())
    }

    pub fn confirmed_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
    }

    /// Process one scan: returns the number of live tracks afterwards.
    pub fn step(
        &mut self,
        time: f64,
        scan: &[DVector<f64>],
        sensor: &RangeBearingSensor,
        model: &MotionModel,
    ) -> Result<usize> {
        let mut used = vec![false; scan.len()];
        for track in self.tracks.iter_mut().filter(|t| t.is_live()) {
            let predicted = kf_predict(&track.estimate, model)?;
            let outcome = pda_update(&predicted, scan, sensor, self.gate_mass)?;
            for &idx in &outcome.gated {
                used[idx] = true;
            }
            track.estimate = outcome.estimate;
            track.register_scan(!outcome.gated.is_empty(), time);
        }

        // Pair leftover detections with last scan's leftovers.
        let mut fresh = Vec::new();
        for (idx, z) in scan.iter().enumerate() {
            if used[idx] {
                continue;
            }
            let (pos, cov) = sensor.to_cartesian(z);
            fresh.push(InitCandidate { pos, cov, time });
        }
        let mut consumed = vec![false; fresh.len()];
        for old in &self.candidates {
            let dt = time - old.time;
            if dt <= 0.0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, new) in fresh.iter().enumerate() {
                if consumed[j] {
                    continue;
                }
                // Noise-aware pairing gate: the displacement of a real pair
                // is at most max_speed * dt plus the measurement scatter of
                // the two detections (3 sigma of the displacement spread).
                let spread = 3.0 * (old.cov.trace() + new.cov.trace()).sqrt();
                let speed = ((&new.pos - &old.pos).norm() - spread).max(0.0) / dt;
                if speed <= self.max_init_speed
                    && best.is_none_or(|(_, s)| speed < s)
                {
                    best = Some((j, speed));
                }
            }
            if let Some((j, _)) = best {
                consumed[j] = true;
                let new = &fresh[j];
                let est = two_point_init(&old.pos, &old.cov, &new.pos, &new.cov, dt)?;
                self.tracks.push(Track::tentative(self.next_id, est, time));
                self.next_id += 1;
            }
        }
        self.candidates = fresh
            .into_iter()
            .zip(consumed)
            .filter(|(_, c)| !c)
            .map(|(f, _)| f)
            .collect();
        Ok(self.tracks.iter().filter(|t| t.is_live()).count())
    }
}
