//! Dense-grid density oracle for 1-D and 2-D problems.
//!
//! Trapezoid quadrature over a regular grid; used to compute exact (to
//! quadrature accuracy) harmonic-mean and geometric-mean fused densities,
//! their normalization constants, moments, and divergence integrals, against
//! which the closed-form and sampling fusers are verified.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::Density;

/// Default number of grid points per axis.
pub const DEFAULT_RESOLUTION: usize = 401;

/// A nonnegative density tabulated on a regular 1-D or 2-D grid.
#[derive(Debug, Clone)]
pub struct GridDensity {
    bounds: Vec<(f64, f64)>,
    resolution: usize,
    values: Vec<f64>,
}

impl GridDensity {
    /// Tabulate `density` on the box `bounds` with `resolution` points per axis.
    pub fn evaluate<D: Density>(
        density: &D,
        bounds: &[(f64, f64)],
        resolution: usize,
    ) -> Result<Self> {
        let dim = density.dim();
        if dim > 2 || dim == 0 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if bounds.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "GridDensity::evaluate",
                left: bounds.len(),
                right: dim,
            });
        }
        if resolution < 2 {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 2".into(),
            ));
        }
        for &(lo, hi) in bounds {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::InvalidArgument(format!(
                    "grid bounds ({lo}, {hi}) are not increasing"
                )));
            }
        }
        let mut values = Vec::with_capacity(resolution.pow(dim as u32));
        match dim {
            1 => {
                let mut x = DVector::zeros(1);
                for i in 0..resolution {
                    x[0] = axis_point(bounds[0], resolution, i);
                    values.push(density.pdf(&x));
                }
            }
            _ => {
                let mut x = DVector::zeros(2);
                for i in 0..resolution {
                    x[0] = axis_point(bounds[0], resolution, i);
                    for j in 0..resolution {
                        x[1] = axis_point(bounds[1], resolution, j);
                        values.push(density.pdf(&x));
                    }
                }
            }
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            resolution,
            values,
        })
    }

    /// Tabulate `density` on its own mean +/- 6 sigma envelope.
    pub fn evaluate_auto<D: Density>(density: &D, resolution: usize) -> Result<Self> {
        let bounds = density.envelope();
        Self::evaluate(density, &bounds, resolution)
    }

    /// The smallest box covering every density's 6-sigma envelope.
    pub fn joint_envelope(densities: &[&dyn Density]) -> Vec<(f64, f64)> {
        let dim = densities[0].dim();
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for d in densities {
            for (axis, (lo, hi)) in d.envelope().into_iter().enumerate() {
                out[axis].0 = out[axis].0.min(lo);
                out[axis].1 = out[axis].1.max(hi);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn step(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.resolution - 1) as f64
    }

    /// Trapezoid weight of flat index `idx` (product of per-axis edge factors).
    fn quad_weight(&self, idx: usize) -> f64 {
        let n = self.resolution;
        let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        match self.dim() {
            1 => edge(idx) * self.step(0),
            _ => {
                let (i, j) = (idx / n, idx % n);
                edge(i) * edge(j) * self.step(0) * self.step(1)
            }
        }
    }

    /// Trapezoid integral of the tabulated values.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(idx, v)| v * self.quad_weight(idx))
            .sum()
    }

    /// Trapezoid integral of `f(x) * density(x)`.
    pub fn integral_of<F: Fn(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        let mut x = DVector::zeros(self.dim());
        for (idx, v) in self.values.iter().enumerate() {
            self.point_at(idx, &mut x);
            acc += f(&x) * v * self.quad_weight(idx);
        }
        acc
    }

    fn point_at(&self, idx: usize, x: &mut DVector<f64>) {
        match self.dim() {
            1 => x[0] = axis_point(self.bounds[0], self.resolution, idx),
            _ => {
                let n = self.resolution;
                x[0] = axis_point(self.bounds[0], self.resolution, idx / n);
                x[1] = axis_point(self.bounds[1], self.resolution, idx % n);
            }
        }
    }

    /// Divide by the integral so the grid integrates to 1; returns the
    /// normalization constant that was divided out.
    pub fn normalize(&mut self) -> f64 {
        let z = self.integral();
        if z > 0.0 {
            for v in &mut self.values {
                *v /= z;
            }
        }
        z
    }

    /// Mean and covariance of the (not necessarily normalized) density.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let z = self.integral();
        let mut mean = DVector::zeros(dim);
        let mut x = DVector::zeros(dim);
        for (idx, v) in self.values.iter().enumerate() {
            self.point_at(idx, &mut x);
            mean += &x * (v * self.quad_weight(idx));
        }
        mean /= z;
        let mut cov = DMatrix::zeros(dim, dim);
        for (idx, v) in self.values.iter().enumerate() {
            self.point_at(idx, &mut x);
            let d = &x - &mean;
            cov += &d * d.transpose() * (v * self.quad_weight(idx));
        }
        cov /= z;
        (mean, cov)
    }

    /// Replace the values with `f(value, index)`; internal helper for the
    /// fused-density constructors below.
    fn same_grid(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.bounds != other.bounds || self.resolution != other.resolution {
            return Err(Error::InvalidArgument(format!(
                "{context}: grids differ in bounds or resolution"
            )));
        }
        Ok(())
    }
}

fn axis_point((lo, hi): (f64, f64), resolution: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (resolution - 1) as f64
}

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidArgument(format!(
            "fusion weight {omega} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Normalized harmonic-mean fused density on the grid.
///
/// Pointwise `p1 * p2 / ((1-w) p1 + w p2)`, then normalized; the returned
/// scalar is the normalization constant, which is at most 1.
pub fn grid_hmd(p1: &GridDensity, p2: &GridDensity, omega: f64) -> Result<(GridDensity, f64)> {
    check_omega(omega)?;
    p1.same_grid(p2, "grid_hmd")?;
    let mut out = p1.clone();
    for (v, (&a, &b)) in out
        .values
        .iter_mut()
        .zip(p1.values.iter().zip(p2.values.iter()))
    {
        let denom = (1.0 - omega) * a + omega * b;
        *v = if denom > 0.0 { a * b / denom } else { 0.0 };
    }
    let zeta = out.normalize();
    Ok((out, zeta))
}

/// Normalized geometric-mean fused density on the grid.
///
/// Pointwise `p1 * p2 / (p1^(1-w) * p2^w) = p1^w * p2^(1-w)`, normalized.
pub fn grid_gmd(p1: &GridDensity, p2: &GridDensity, omega: f64) -> Result<(GridDensity, f64)> {
    check_omega(omega)?;
    p1.same_grid(p2, "grid_gmd")?;
    let mut out = p1.clone();
    for (v, (&a, &b)) in out
        .values
        .iter_mut()
        .zip(p1.values.iter().zip(p2.values.iter()))
    {
        *v = if a > 0.0 && b > 0.0 {
            a.powf(omega) * b.powf(1.0 - omega)
        } else {
            0.0
        };
    }
    let zeta = out.normalize();
    Ok((out, zeta))
}

/// Weighted average Pearson chi-squared divergence of `q` from the pair
/// `(p1, p2)`: `w/2 * int (q-p1)^2/p1 + (1-w)/2 * int (q-p2)^2/p2`.
///
/// The divergence weight on `p1` is the complement of its mixture weight:
/// minimizing this average over all densities yields exactly the
/// harmonic-mean fusion with denominator `(1-w) p1 + w p2`. The property test
/// perturbs the fused grid and checks the value never drops.
pub fn avg_pearson_divergence(
    q: &GridDensity,
    p1: &GridDensity,
    p2: &GridDensity,
    omega: f64,
) -> Result<f64> {
    check_omega(omega)?;
    q.same_grid(p1, "avg_pearson_divergence")?;
    q.same_grid(p2, "avg_pearson_divergence")?;
    let mut acc = 0.0;
    for idx in 0..q.values.len() {
        let w = q.quad_weight(idx);
        let qq = q.values[idx];
        for (pv, div_w) in [(p1.values[idx], omega), (p2.values[idx], 1.0 - omega)] {
            if pv > 1e-300 {
                let d = qq - pv;
                acc += 0.5 * div_w * d * d / pv * w;
            }
        }
    }
    Ok(acc)
}

/// Add `eps * g` to `q` where `g` has zero integral, clamping at zero; the
/// perturbed density is re-normalized. Used by the divergence property test.
pub fn perturb(q: &GridDensity, g: &[f64], eps: f64) -> Result<GridDensity> {
    if g.len() != q.values.len() {
        return Err(Error::DimensionMismatch {
            context: "perturb",
            left: g.len(),
            right: q.values.len(),
        });
    }
    let mut out = q.clone();
    for (v, &gv) in out.values.iter_mut().zip(g.iter()) {
        *v = (*v + eps * gv).max(0.0);
    }
    out.normalize();
    Ok(out)
}
