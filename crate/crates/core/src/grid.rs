//! Discretized L2 on an interval: grids, curves, and the quadrature inner
//! products every estimator is built on.
//!
//! A [`Grid`] holds `m` equispaced interior points of `(a, b)`; the endpoints
//! are never evaluation points. All integrals are equal-weight Riemann sums
//! with weight `dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty;

/// Tolerance used when checking that a supplied basis is orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Equispaced interior evaluation points `t_1 < ... < t_m` of `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    m: usize,
    dt: f64,
}

impl Grid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidArgument(format!(
                "grid needs finite a < b, got a={a}, b={b}"
            )));
        }
        if m < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 points, got {m}"
            )));
        }
        Ok(Self {
            a,
            b,
            m,
            dt: (b - a) / (m as f64 + 1.0),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The `i`-th interior point (zero based), `a + (i + 1) dt`.
    pub fn point(&self, i: usize) -> f64 {
        self.a + (i as f64 + 1.0) * self.dt
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.point(i)).collect()
    }

    /// Evaluates `f` at every grid point.
    pub fn curve<F: Fn(f64) -> f64>(&self, f: F) -> Curve {
        Curve {
            grid: *self,
            values: (0..self.m).map(|i| f(self.point(i))).collect(),
        }
    }

    pub fn zero_curve(&self) -> Curve {
        Curve {
            grid: *self,
            values: vec![0.0; self.m],
        }
    }
}

/// Shorthand for [`Grid::new`].
pub fn make_grid(a: f64, b: f64, m: usize) -> Result<Grid> {
    Grid::new(a, b, m)
}

/// A function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "curve has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "curve value at index {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Builds a curve without validation; the caller guarantees the length.
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, s: f64) -> Curve {
        Curve::from_parts(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    pub fn neg(&self) -> Curve {
        self.scaled(-1.0)
    }

    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        same_grid(self, other)?;
        Ok(Curve::from_parts(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x - y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Curve) -> Result<Curve> {
        same_grid(self, other)?;
        Ok(Curve::from_parts(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + y)
                .collect(),
        ))
    }
}

/// `n >= 1` curves sharing one grid.
///
/// The estimators require `n >= 2`; single-curve samples are still allowed
/// so that centering and I/O can handle them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    grid: Grid,
    curves: Vec<Curve>,
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: Vec<Curve>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        if curves.iter().any(|c| c.grid != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, curves })
    }

    /// Builds a sample from raw rows of grid values.
    pub fn from_rows(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let curves = rows
            .into_iter()
            .map(|r| Curve::new(grid, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, curves)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.curves.iter().map(|c| c.values()).collect()
    }

    /// Subsample by index, preserving the order of `idx`.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.grid, idx.iter().map(|&i| self.curves[i].clone()).collect())
    }

    /// Subtracts `center` from every curve.
    pub fn centered(&self, center: &Curve) -> Result<Self> {
        let curves = self
            .curves
            .iter()
            .map(|c| c.sub(center))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.grid, curves)
    }
}

pub(crate) fn same_grid(f: &Curve, g: &Curve) -> Result<()> {
    if f.grid == g.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub(crate) fn dot(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(x, y)| x * y).sum()
}

/// `dt * sum_i f(t_i) g(t_i)`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    same_grid(f, g)?;
    Ok(f.grid.dt * dot(&f.values, &g.values))
}

pub fn norm(f: &Curve) -> f64 {
    (f.grid.dt * dot(&f.values, &f.values)).sqrt()
}

/// Inner-product geometry on raw coordinate vectors.
///
/// `Euclidean` is the plain dot product used on sieve coefficient vectors;
/// `L2` and `Penalized` are the grid quadrature products `<.,.>` and
/// `<.,.>_tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Euclidean,
    L2 { dt: f64 },
    Penalized { dt: f64, tau: f64 },
}

impl Metric {
    /// Metric for curves on `grid` with roughness weight `tau` (0 gives `L2`).
    pub fn for_grid(grid: &Grid, tau: f64) -> Self {
        if tau == 0.0 {
            Metric::L2 { dt: grid.dt() }
        } else {
            Metric::Penalized { dt: grid.dt(), tau }
        }
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        match *self {
            Metric::Euclidean => dot(f, g),
            Metric::L2 { dt } => dt * dot(f, g),
            Metric::Penalized { dt, tau } => {
                dt * dot(f, g) + tau * penalty::roughness_form(f, g, dt)
            }
        }
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    /// Projects `f` off the span of `basis` (orthonormal in this metric).
    pub(crate) fn residual_in_place(&self, f: &mut [f64], basis: &[&[f64]]) {
        let coefs: Vec<f64> = basis.iter().map(|b| self.inner(f, b)).collect();
        for (b, c) in basis.iter().zip(coefs) {
            for (x, y) in f.iter_mut().zip(b.iter()) {
                *x -= c * y;
            }
        }
    }

    /// Largest deviation of the Gram matrix of `basis` from the identity.
    pub fn gram_deviation(&self, basis: &[&[f64]]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(u, v) - target).abs());
            }
        }
        worst
    }
}

/// Returns `f` minus its projection onto `span(basis)` under `metric`.
///
/// `basis` must be orthonormal under `metric` to within [`ORTHONORMAL_TOL`].
pub fn orthogonal_residual(f: &Curve, basis: &[Curve], metric: Metric) -> Result<Curve> {
    for b in basis {
        same_grid(f, b)?;
    }
    let refs: Vec<&[f64]> = basis.iter().map(|b| b.values()).collect();
    let dev = metric.gram_deviation(&refs);
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NonOrthonormalBasis { max_deviation: dev });
    }
    let mut out = f.values.clone();
    metric.residual_in_place(&mut out, &refs);
    Ok(Curve::from_parts(f.grid, out))
}
