//! Track-to-track fusion under unknown correlation.
//!
//! The crate provides closed-form conservative fusers (covariance
//! intersection, inverse covariance intersection, harmonic-mean fusion with a
//! Gaussian-approximated mixture), their sampling-based counterparts for
//! Gaussians and Gaussian mixtures, a dense-grid density oracle, local-node
//! trackers (KF / range-bearing EKF / PDA), track-to-track association, and a
//! Monte-Carlo scenario harness with RMSE/NEES/covariance-ellipse reporting.

pub mod assoc;
pub mod error;
pub mod fusion;
pub mod gaussian;
pub mod geo;
pub mod grid;
pub mod metrics;
pub mod scenario;
pub mod sampling;
pub mod track;

pub use error::{Error, Result};
pub use gaussian::{Density, GaussianEstimate, GaussianMixture};
