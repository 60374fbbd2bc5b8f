//! Roughness penalty `Psi(f) = int (f'')^2` and the penalized inner product
//! `<f, g>_tau = <f, g> + tau [f, g]`.
//!
//! Second derivatives are central differences at the interior points
//! `t_2 .. t_{m-1}` only; the two boundary points contribute no rows. The
//! `m - 2` rows share the interval length equally, so each carries weight
//! `(b - a) / (m - 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{same_grid, Curve};

/// Smoothing weights: `tau` penalizes the norm, `rho` penalizes the scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub tau: f64,
    pub rho: f64,
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.rho >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "penalty weights must be nonnegative (tau={}, rho={})",
                self.tau, self.rho
            )));
        }
        if self.tau > 0.0 && self.rho > 0.0 {
            return Err(Error::InvalidArgument(
                "at most one of tau and rho may be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Central second differences of raw grid values with spacing `dt`.
pub(crate) fn second_difference_slice(f: &[f64], dt: f64) -> Vec<f64> {
    let h2 = dt * dt;
    f.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / h2)
        .collect()
}

/// Quadrature weight of one second-difference row on a grid of `m` points.
pub(crate) fn row_weight(m: usize, dt: f64) -> f64 {
    dt * (m as f64 + 1.0) / (m as f64 - 2.0)
}

/// `[f, g] = w * sum_i d_i(f) d_i(g)` on raw values, `w` from [`row_weight`].
pub(crate) fn roughness_form(f: &[f64], g: &[f64], dt: f64) -> f64 {
    let h2 = dt * dt;
    let s: f64 = f
        .windows(3)
        .zip(g.windows(3))
        .map(|(u, v)| ((u[2] - 2.0 * u[1] + u[0]) / h2) * ((v[2] - 2.0 * v[1] + v[0]) / h2))
        .sum();
    row_weight(f.len(), dt) * s
}

/// Second differences `d_2 .. d_{m-1}`; the result has length `m - 2`.
pub fn second_difference(f: &Curve) -> Vec<f64> {
    second_difference_slice(f.values(), f.grid().dt())
}

/// `Psi(f) = (b - a) / (m - 2) * sum_i d_i(f)^2`.
pub fn roughness(f: &Curve) -> f64 {
    roughness_form(f.values(), f.values(), f.grid().dt())
}

/// `<f, g>_tau`; with `tau == 0` this is exactly [`crate::grid::inner_product`].
pub fn tau_inner(f: &Curve, g: &Curve, tau: f64) -> Result<f64> {
    same_grid(f, g)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let dt = f.grid().dt();
    let plain = dt * crate::grid::dot(f.values(), g.values());
    if tau == 0.0 {
        return Ok(plain);
    }
    Ok(plain + tau * roughness_form(f.values(), g.values(), dt))
}

pub fn tau_norm(f: &Curve, tau: f64) -> Result<f64> {
    Ok(tau_inner(f, f, tau)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, make_grid, norm};
    use std::f64::consts::PI;

    #[test]
    fn second_difference_examples() {
        let g = make_grid(-1.0, 1.0, 17).unwrap();
        let d = second_difference(&g.curve(|t| 0.5 - 3.0 * t));
        assert_eq!(d.len(), 15);
        assert!(d.iter().all(|v| v.abs() < 1e-9));

        let d = second_difference(&g.curve(|_| 4.2));
        assert!(d.iter().all(|&v| v == 0.0));

        // Exact for quadratics up to rounding of t^2 on the grid.
        for m in [5, 50, 200] {
            let g = make_grid(-1.0, 1.0, m).unwrap();
            let d = second_difference(&g.curve(|t| t * t));
            assert!(d.iter().all(|v| (v - 2.0).abs() < 1e-6), "m={m}");
        }
        let g = make_grid(0.0, 8.0, 7).unwrap();
        let d = second_difference(&g.curve(|t| t * t));
        assert!(d.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn roughness_examples() {
        let g = make_grid(-1.0, 1.0, 200).unwrap();
        assert!(roughness(&g.curve(|t| 1.0 + 2.0 * t)) < 1e-12);
        let psi = roughness(&g.curve(|t| t * t));
        assert!((psi - 8.0).abs() / 8.0 < 0.01, "psi={psi}");

        let g = make_grid(-1.0, 1.0, 400).unwrap();
        let psi = roughness(&g.curve(|t| (4.0 * PI * t).sin()));
        let exact = (4.0 * PI).powi(4);
        assert!((psi - exact).abs() / exact < 0.02, "psi={psi}");
    }

    #[test]
    fn roughness_is_quadratic() {
        let g = make_grid(-1.0, 1.0, 60).unwrap();
        let f = g.curve(|t| (3.0 * t).sin() + t.powi(3));
        let a = -2.5;
        let lhs = roughness(&f.scaled(a));
        let rhs = a * a * roughness(&f);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn tau_inner_examples() {
        let g = make_grid(-1.0, 1.0, 200).unwrap();
        let f = g.curve(|t| (2.0 * t).cos());
        let h = g.curve(|t| t.exp());
        assert_eq!(
            tau_inner(&f, &h, 0.0).unwrap().to_bits(),
            inner_product(&f, &h).unwrap().to_bits()
        );

        let aff = g.curve(|t| 3.0 - t);
        let a = tau_inner(&aff, &aff, 5.0).unwrap();
        assert!((a - inner_product(&aff, &aff).unwrap()).abs() < 1e-9);

        let q = g.curve(|t| t * t);
        let v = tau_inner(&q, &q, 0.1).unwrap();
        let pen = v - inner_product(&q, &q).unwrap();
        assert!((pen - 0.8).abs() / 0.8 < 0.01);
    }

    #[test]
    fn tau_norm_decomposition_and_monotonicity() {
        let g = make_grid(-1.0, 1.0, 80).unwrap();
        let f = g.curve(|t| (5.0 * t).sin() * t);
        for tau in [0.0, 1e-6, 0.3, 10.0] {
            let lhs = tau_inner(&f, &f, tau).unwrap();
            let rhs = norm(&f).powi(2) + tau * roughness(&f);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
        let mut last = 0.0;
        for tau in [0.0, 1e-3, 1e-2, 1.0] {
            let v = tau_norm(&f, tau).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn penalty_spec_validation() {
        assert!(PenaltySpec { tau: 0.0, rho: 0.0 }.validate().is_ok());
        assert!(PenaltySpec { tau: 1.0, rho: 1.0 }.validate().is_err());
        assert!(PenaltySpec { tau: -1.0, rho: 0.0 }.validate().is_err());
    }
}
