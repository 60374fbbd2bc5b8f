//! Univariate scale statistics used as projection indices: the standard
//! deviation, the MAD, and an M-scale with the Beaton-Tukey score.
//!
//! The M-scale solves `(1/n) sum chi((y_i - mu) / sigma) = delta` by the
//! re-weighting iteration
//! `sigma_{k+1}^2 = (1 / (n delta)) sum w(r_i / sigma_k) r_i^2`,
//! started at the MAD of the residuals. Convergence is declared on the
//! residual of the estimating equation itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 / Phi^{-1}(0.75)`: makes the MAD consistent for the normal SD.
pub const MAD_CONSTANT: f64 = 1.4826;
/// Beaton-Tukey tuning constant giving Fisher-consistency at the normal with `delta = 1/2`.
pub const MSCALE_C: f64 = 1.56;
pub const MSCALE_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    Sd,
    Mad,
    #[serde(rename = "mscale")]
    MScale,
}

impl ScaleKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScaleKind::Sd => "sd",
            ScaleKind::Mad => "mad",
            ScaleKind::MScale => "mscale",
        }
    }
}

/// Where residuals are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    /// The sample's own center: the mean for SD, the median for MAD and M-scale.
    Median,
    Zero,
    Supplied(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub kind: ScaleKind,
    /// MAD normalization or Beaton-Tukey tuning constant.
    pub c: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub location: Location,
}

impl ScaleSpec {
    pub fn sd() -> Self {
        Self {
            kind: ScaleKind::Sd,
            c: 1.0,
            delta: MSCALE_DELTA,
            max_iter: 100,
            tol: 1e-9,
            location: Location::Median,
        }
    }

    pub fn mad() -> Self {
        Self {
            kind: ScaleKind::Mad,
            c: MAD_CONSTANT,
            ..Self::sd()
        }
    }

    pub fn mscale() -> Self {
        Self {
            kind: ScaleKind::MScale,
            c: MSCALE_C,
            ..Self::sd()
        }
    }

    pub fn of_kind(kind: ScaleKind) -> Self {
        match kind {
            ScaleKind::Sd => Self::sd(),
            ScaleKind::Mad => Self::mad(),
            ScaleKind::MScale => Self::mscale(),
        }
    }

    pub fn with_location(mut self, location: Location) -> Self {
        self.location = location;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("c must be > 0, got {}", self.c)));
        }
        if self.kind == ScaleKind::MScale && !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }

    /// Scale of `sample` with full diagnostics; never fails on non-convergence.
    pub fn estimate(&self, sample: &[f64]) -> Result<ScaleEstimate> {
        self.validate()?;
        let needed = if self.location == Location::Median { 2 } else { 1 };
        if sample.len() < needed {
            return Err(Error::TooFewPoints {
                needed,
                got: sample.len(),
            });
        }
        match self.kind {
            ScaleKind::Sd => {
                let mu = match self.location {
                    Location::Median => mean(sample),
                    Location::Zero => 0.0,
                    Location::Supplied(x) => x,
                };
                let ss: f64 = sample.iter().map(|y| (y - mu) * (y - mu)).sum();
                Ok(ScaleEstimate::exact((ss / sample.len() as f64).sqrt()))
            }
            ScaleKind::Mad => {
                let mu = self.center(sample);
                let dev: Vec<f64> = sample.iter().map(|y| (y - mu).abs()).collect();
                Ok(ScaleEstimate::exact(self.c * median(&dev)))
            }
            ScaleKind::MScale => {
                let mu = self.center(sample);
                let resid: Vec<f64> = sample.iter().map(|y| y - mu).collect();
                Ok(m_scale_residuals(&resid, self))
            }
        }
    }

    /// Scale value only; failures and non-convergence become errors.
    pub fn value(&self, sample: &[f64]) -> Result<f64> {
        let est = self.estimate(sample)?;
        if !est.converged {
            return Err(Error::NoConvergence {
                iterations: est.iterations,
                last: est.value,
                residual: est.residual,
            });
        }
        Ok(est.value)
    }

    fn center(&self, sample: &[f64]) -> f64 {
        match self.location {
            Location::Median => median(sample),
            Location::Zero => 0.0,
            Location::Supplied(x) => x,
        }
    }
}

/// Result of a scale computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the estimating equation has no positive solution and 0 is returned.
    pub degenerate: bool,
    /// `|(1/n) sum chi(r_i / sigma) - delta|` at return (0 for closed forms).
    pub residual: f64,
}

impl ScaleEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            iterations: 0,
            converged: true,
            degenerate: false,
            residual: 0.0,
        }
    }
}

/// Beaton-Tukey score `min(3u^2 - 3u^4 + u^6, 1)` with `u = y / c`.
pub fn chi_beaton_tukey(y: f64, c: f64) -> f64 {
    let u = y / c;
    if u.abs() >= 1.0 {
        return 1.0;
    }
    let u2 = u * u;
    u2 * (3.0 + u2 * (-3.0 + u2))
}

/// Derivative of [`chi_beaton_tukey`] in `y`.
pub fn chi_beaton_tukey_derivative(y: f64, c: f64) -> f64 {
    let u = y / c;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let v = 1.0 - u * u;
    6.0 * u * v * v / c
}

/// IRLS weight `chi(y) / y^2`, with `w(0) = chi''(0) = 6 / c^2`.
///
/// Note the limit of `chi(y) / y^2` as `y -> 0` is `3 / c^2`; the value at
/// exactly zero never enters the iteration since it multiplies `r = 0`.
pub fn weight_chi(y: f64, c: f64) -> f64 {
    if y == 0.0 {
        return 6.0 / (c * c);
    }
    let u = y / c;
    if u.abs() >= 1.0 {
        return 1.0 / (y * y);
    }
    let u2 = u * u;
    (3.0 + u2 * (-3.0 + u2)) / (c * c)
}

pub(crate) fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Median; even lengths average the two middle order statistics.
pub fn median(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty(), "median of an empty sample");
    let mut v = sample.to_vec();
    median_in_place(&mut v)
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let k = n / 2;
    let (lower, mid, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    let upper = *mid;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Standard deviation with divisor `n`.
pub fn sd(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: sample.len(),
        });
    }
    ScaleSpec::sd().value(sample)
}

/// `c * median(|y - median(y)|)`.
pub fn mad(sample: &[f64], c: f64) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: sample.len(),
        });
    }
    ScaleSpec { c, ..ScaleSpec::mad() }.value(sample)
}

/// M-scale of `sample` about `spec.location`; non-convergence is an error.
pub fn m_scale(sample: &[f64], spec: &ScaleSpec) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: sample.len(),
        });
    }
    ScaleSpec {
        kind: ScaleKind::MScale,
        ..*spec
    }
    .value(sample)
}

/// Scale about zero: `sqrt(mean z^2)` for SD, `c * median|z|` for MAD, and
/// the M-scale with `mu = 0`.
pub fn scale_about_zero(sample: &[f64], spec: &ScaleSpec) -> Result<f64> {
    spec.with_location(Location::Zero).value(sample)
}

fn mean_chi(resid: &[f64], sigma: f64, c: f64) -> f64 {
    resid
        .iter()
        .map(|r| chi_beaton_tukey(r / sigma, c))
        .sum::<f64>()
        / resid.len() as f64
}

fn m_scale_residuals(resid: &[f64], spec: &ScaleSpec) -> ScaleEstimate {
    let n = resid.len() as f64;
    let (c, delta) = (spec.c, spec.delta);
    let nonzero = resid.iter().filter(|r| **r != 0.0).count();
    // chi is bounded by 1, so the equation has a positive root only when
    // the nonzero fraction exceeds delta.
    if (nonzero as f64) <= delta * n {
        return ScaleEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            degenerate: true,
            residual: 0.0,
        };
    }

    let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    let mut sigma = MAD_CONSTANT * median_in_place(&mut abs);
    if sigma == 0.0 {
        sigma = resid.iter().map(|r| r.abs()).sum::<f64>() / n;
    }
    if sigma == 0.0 {
        return ScaleEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            degenerate: true,
            residual: 0.0,
        };
    }

    let target = spec.tol * delta;
    let mut residual = (mean_chi(resid, sigma, c) - delta).abs();
    let mut iterations = 0;
    while residual > target && iterations < spec.max_iter {
        let s2: f64 = resid
            .iter()
            .map(|r| weight_chi(r / sigma, c) * r * r)
            .sum::<f64>()
            / (n * delta);
        sigma = s2.sqrt();
        iterations += 1;
        residual = (mean_chi(resid, sigma, c) - delta).abs();
    }
    ScaleEstimate {
        value: sigma,
        iterations,
        converged: residual <= target,
        degenerate: false,
        residual,
    }
}
