//! Geodetic coordinates and local east-north-up (ENU) frames on the WGS84
//! ellipsoid.
//!
//! Conversions go geodetic -> earth-centered earth-fixed (ECEF) -> ENU; the
//! inverse iterates the geodetic latitude until it is fixed to machine
//! precision, which keeps round trips below a micrometer well past the
//! 300 km sensor ranges used here.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// WGS84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

fn e2() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

/// A point on or above the WGS84 ellipsoid; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl Geodetic {
    pub fn from_degrees(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self> {
        if !lat_deg.is_finite() || lat_deg.abs() >= 90.0 {
            return Err(Error::InvalidArgument(format!(
                "latitude {lat_deg} deg at or beyond a pole"
            )));
        }
        Ok(Self {
            lat: lat_deg.to_radians(),
            lon: lon_deg.to_radians(),
            alt: alt_m,
        })
    }

    pub fn lat_degrees(&self) -> f64 {
        self.lat.to_degrees()
    }

    pub fn lon_degrees(&self) -> f64 {
        self.lon.to_degrees()
    }
}

/// Prime-vertical radius of curvature at latitude `lat`.
fn prime_vertical(lat: f64) -> f64 {
    WGS84_A / (1.0 - e2() * lat.sin().powi(2)).sqrt()
}

/// Ellipsoid height from cylindrical components at a candidate latitude:
/// `h = rho cos(lat) + z sin(lat) - a sqrt(1 - e^2 sin^2(lat))`, which stays
/// well conditioned at every latitude.
fn altitude_at(rho: f64, z: f64, lat: f64) -> f64 {
    rho * lat.cos() + z * lat.sin() - WGS84_A * (1.0 - e2() * lat.sin().powi(2)).sqrt()
}

pub fn geodetic_to_ecef(g: &Geodetic) -> Vector3<f64> {
    let n = prime_vertical(g.lat);
    let (slat, clat) = g.lat.sin_cos();
    let (slon, clon) = g.lon.sin_cos();
    Vector3::new(
        (n + g.alt) * clat * clon,
        (n + g.alt) * clat * slon,
        (n * (1.0 - e2()) + g.alt) * slat,
    )
}

pub fn ecef_to_geodetic(p: &Vector3<f64>) -> Geodetic {
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    // Fixed-point iteration on latitude; quadratic convergence from the
    // spherical initial guess, a handful of rounds reach f64 precision.
    let mut lat = p.z.atan2(rho * (1.0 - e2()));
    for _ in 0..20 {
        let n = prime_vertical(lat);
        let alt = altitude_at(rho, p.z, lat);
        let next = (p.z / rho).atan2(1.0 - e2() * n / (n + alt));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    Geodetic {
        lat,
        lon,
        alt: altitude_at(rho, p.z, lat),
    }
}

/// A local tangent frame: east-north-up axes anchored at a geodetic origin.
#[derive(Debug, Clone)]
pub struct EnuFrame {
    origin: Geodetic,
    origin_ecef: Vector3<f64>,
    /// Rows are the east, north, and up unit vectors in ECEF.
    rot: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(origin: Geodetic) -> Self {
        let (slat, clat) = origin.lat.sin_cos();
        let (slon, clon) = origin.lon.sin_cos();
        let rot = Matrix3::new(
            -slon,
            clon,
            0.0,
            -slat * clon,
            -slat * slon,
            clat,
            clat * clon,
            clat * slon,
            slat,
        );
        Self {
            origin_ecef: geodetic_to_ecef(&origin),
            origin,
            rot,
        }
    }

    pub fn origin(&self) -> &Geodetic {
        &self.origin
    }

    pub fn ecef_to_enu(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * (p - self.origin_ecef)
    }

    pub fn enu_to_ecef(&self, enu: &Vector3<f64>) -> Vector3<f64> {
        self.origin_ecef + self.rot.transpose() * enu
    }

    pub fn geodetic_to_enu(&self, g: &Geodetic) -> Vector3<f64> {
        self.ecef_to_enu(&geodetic_to_ecef(g))
    }

    pub fn enu_to_geodetic(&self, enu: &Vector3<f64>) -> Geodetic {
        ecef_to_geodetic(&self.enu_to_ecef(enu))
    }
}

/// Constant-altitude great-circle interpolation between two ECEF points:
/// spherical linear interpolation of the directions with the radius blended
/// linearly. `t = 0` returns `a`, `t = 1` returns `b`.
pub fn ecef_slerp(a: &Vector3<f64>, b: &Vector3<f64>, t: f64) -> Vector3<f64> {
    let ra = a.norm();
    let rb = b.norm();
    let ua = a / ra;
    let ub = b / rb;
    let cos_angle = ua.dot(&ub).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    let radius = (1.0 - t) * ra + t * rb;
    if angle < 1e-12 {
        return (ua * (1.0 - t) + ub * t).normalize() * radius;
    }
    let dir = (ua * ((1.0 - t) * angle).sin() + ub * (t * angle).sin()) / angle.sin();
    dir * radius
}
