//! Projection-pursuit principal directions by exhaustive candidate scan.
//!
//! At step `k` every nonzero deflated residual, normalized in the mode's
//! inner product, is a candidate direction. The candidate maximizing the
//! projection index over the centered sample becomes `v_k`; residuals are
//! then deflated along `v_k` in the same inner product.
//!
//! | mode            | candidate norm / deflation | index                     |
//! |-----------------|----------------------------|---------------------------|
//! | `Raw`           | `<.,.>`                    | `s_n(a)`                  |
//! | `PenalizeScale` | `<.,.>`                    | `s_n(a)^2 - rho Psi(a)`   |
//! | `PenalizeNorm`  | `<.,.>_tau`                | `s_n(a)`                  |
//! | `Sieve`         | coefficient dot product    | `s_n(a)` on inner scores  |
//!
//! Projections entering `s_n` always use the plain `<.,.>`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::center::Centering;
use crate::error::{Error, Result};
use crate::grid::{dot, Curve, FunctionalSample, Grid, Metric};
use crate::penalty::roughness_form;
use crate::scale::ScaleSpec;
use crate::sieve::{self, BasisKind};

/// Residuals with norm below this fraction of the largest centered norm are
/// not used as candidates.
pub const DEGENERATE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mode {
    Raw,
    PenalizeScale { rho: f64 },
    PenalizeNorm { tau: f64 },
    Sieve { basis: BasisKind },
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Raw => "raw",
            Mode::PenalizeScale { .. } => "pen-scale",
            Mode::PenalizeNorm { .. } => "pen-norm",
            Mode::Sieve { .. } => "sieve",
        }
    }

    /// The smoothing parameter (`rho` or `tau`), 0 for the others.
    pub fn param(&self) -> f64 {
        match *self {
            Mode::PenalizeScale { rho } => rho,
            Mode::PenalizeNorm { tau } => tau,
            _ => 0.0,
        }
    }

    /// Same mode with its smoothing parameter replaced.
    pub fn with_param(self, p: f64) -> Self {
        match self {
            Mode::PenalizeScale { .. } => Mode::PenalizeScale { rho: p },
            Mode::PenalizeNorm { .. } => Mode::PenalizeNorm { tau: p },
            other => other,
        }
    }

    fn tau(&self) -> f64 {
        match *self {
            Mode::PenalizeNorm { tau } => tau,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignConvention {
    /// The largest-magnitude grid value of each direction is positive.
    #[default]
    LargestCoordinatePositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PPConfig {
    pub scale: ScaleSpec,
    pub mode: Mode,
    pub q: usize,
    pub centering: Centering,
    #[serde(default)]
    pub sign_convention: SignConvention,
}

impl PPConfig {
    pub fn new(scale: ScaleSpec, mode: Mode, q: usize, centering: Centering) -> Self {
        Self {
            scale,
            mode,
            q,
            centering,
            sign_convention: SignConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        if self.q == 0 {
            return Err(Error::InvalidArgument("q must be >= 1".into()));
        }
        let p = self.mode.param();
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "smoothing parameter must be finite and >= 0, got {p}"
            )));
        }
        Ok(())
    }
}

/// Bookkeeping for one component of the candidate scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Sample index of the residual behind each candidate.
    pub candidate_sources: Vec<usize>,
    /// Index value attained by each candidate.
    pub candidate_indices: Vec<f64>,
    /// Position of the winner in the candidate list.
    pub chosen: usize,
    /// The maximal index value.
    pub index: f64,
    /// Candidates whose scale iteration hit `max_iter`.
    pub scale_nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCFit {
    pub grid: Grid,
    pub directions: Vec<Curve>,
    /// Principal values `s_n^2(direction_k)`.
    pub values: Vec<f64>,
    pub center: Curve,
    pub config: PPConfig,
    pub steps: Vec<StepRecord>,
    /// The scan stopped before `q` components because all residuals vanished.
    /// Sieve fits then complete the directions orthonormally in the basis;
    /// other fits return fewer than `q` directions.
    pub truncated: bool,
    /// Basis coefficients of each direction (sieve fits only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<Vec<f64>>>,
}

impl PCFit {
    pub fn q(&self) -> usize {
        self.directions.len()
    }

    /// Inner product in which the directions are orthonormal.
    pub fn metric(&self) -> Metric {
        Metric::for_grid(&self.grid, self.config.mode.tau())
    }
}

/// The scan itself, independent of what the coordinates mean.
pub(crate) struct CandidateScan<'a> {
    /// Normalizes candidates and deflates residuals.
    pub geometry: Metric,
    /// Computes the projections fed to the scale.
    pub projection: Metric,
    pub scale: &'a ScaleSpec,
    /// `(rho, dt)` when the index subtracts `rho * Psi`.
    pub scale_penalty: Option<(f64, f64)>,
}

pub(crate) struct ScanOutput {
    pub directions: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    pub truncated: bool,
}

impl CandidateScan<'_> {
    fn index(&self, a: &[f64], data: &[&[f64]]) -> Result<(f64, bool)> {
        let proj: Vec<f64> = data.iter().map(|y| self.projection.inner(a, y)).collect();
        let est = self.scale.estimate(&proj)?;
        let v = match self.scale_penalty {
            Some((rho, dt)) => est.value * est.value - rho * roughness_form(a, a, dt),
            None => est.value,
        };
        Ok((v, est.converged))
    }

    fn value(&self, a: &[f64], data: &[&[f64]]) -> Result<f64> {
        let proj: Vec<f64> = data.iter().map(|y| self.projection.inner(a, y)).collect();
        let s = self.scale.estimate(&proj)?.value;
        Ok(s * s)
    }

    pub fn run(&self, centered: &[Vec<f64>], q: usize) -> Result<ScanOutput> {
        let data: Vec<&[f64]> = centered.iter().map(|r| r.as_slice()).collect();
        let mut residuals: Vec<Vec<f64>> = centered.to_vec();
        let max_norm = residuals
            .iter()
            .map(|r| self.geometry.norm(r))
            .fold(0.0, f64::max);
        let floor = DEGENERATE_REL_TOL * max_norm;

        let mut directions = Vec::with_capacity(q);
        let mut steps = Vec::with_capacity(q);
        let mut truncated = false;
        for step in 1..=q {
            let mut sources = Vec::new();
            let mut candidates = Vec::new();
            if max_norm > 0.0 {
                for (i, r) in residuals.iter().enumerate() {
                    let nu = self.geometry.norm(r);
                    if nu > floor && nu > 0.0 {
                        sources.push(i);
                        candidates.push(r.iter().map(|v| v / nu).collect::<Vec<f64>>());
                    }
                }
            }
            if candidates.is_empty() {
                if step == 1 {
                    return Err(Error::AllDegenerate { step });
                }
                truncated = true;
                break;
            }

            let scored = candidates
                .par_iter()
                .map(|a| self.index(a, &data))
                .collect::<Vec<Result<(f64, bool)>>>();
            let mut indices = Vec::with_capacity(scored.len());
            let mut nonconverged = 0;
            for s in scored {
                let (v, ok) = s?;
                if !ok {
                    nonconverged += 1;
                }
                indices.push(v);
            }
            let chosen = argmax_first(&indices);
            let mut v = candidates.swap_remove(chosen);
            apply_sign_convention(&mut v);

            for r in residuals.iter_mut() {
                self.geometry.residual_in_place(r, &[&v]);
            }
            steps.push(StepRecord {
                candidate_sources: sources,
                index: indices[chosen],
                candidate_indices: indices,
                chosen,
                scale_nonconverged: nonconverged,
            });
            directions.push(v);
        }
        Ok(ScanOutput {
            directions,
            steps,
            truncated,
        })
    }
}

/// Position of the maximum; the earliest wins ties and NaN never wins.
fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] || (v[best].is_nan() && !x.is_nan()) {
            best = i;
        }
    }
    best
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn apply_sign_convention(v: &mut [f64]) -> bool {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[k].abs() {
            k = i;
        }
    }
    if v.get(k).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

fn scan_for<'a>(config: &'a PPConfig, grid: &Grid) -> CandidateScan<'a> {
    let dt = grid.dt();
    CandidateScan {
        geometry: Metric::for_grid(grid, config.mode.tau()),
        projection: Metric::L2 { dt },
        scale: &config.scale,
        scale_penalty: match config.mode {
            Mode::PenalizeScale { rho } => Some((rho, dt)),
            _ => None,
        },
    }
}

/// Unit-normalizes each nonzero residual in the given inner product.
pub fn candidate_set(residuals: &FunctionalSample, metric: Metric) -> Result<Vec<Curve>> {
    let grid = *residuals.grid();
    let norms: Vec<f64> = residuals
        .curves()
        .iter()
        .map(|c| metric.norm(c.values()))
        .collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let floor = DEGENERATE_REL_TOL * max_norm;
    let out: Vec<Curve> = residuals
        .curves()
        .iter()
        .zip(&norms)
        .filter(|(_, &nu)| nu > floor && nu > 0.0)
        .map(|(c, &nu)| Curve::from_parts(grid, c.values().iter().map(|v| v / nu).collect()))
        .collect();
    if out.is_empty() {
        return Err(Error::AllDegenerate { step: 1 });
    }
    Ok(out)
}

/// Projection index of direction `a` over `data` under `config`'s mode.
///
/// `data` is used as given; pass the centered sample to replay a fit.
pub fn pp_index(a: &Curve, data: &FunctionalSample, config: &PPConfig) -> Result<f64> {
    if a.grid() != data.grid() {
        return Err(Error::GridMismatch);
    }
    let rows = data.rows();
    let scan = scan_for(config, data.grid());
    Ok(scan.index(a.values(), &rows)?.0)
}

/// Fits `config.q` robust principal directions.
pub fn fit(data: &FunctionalSample, config: &PPConfig) -> Result<PCFit> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: data.len(),
        });
    }
    if let Mode::Sieve { basis } = config.mode {
        return sieve::fit_sieve(
            data,
            &sieve::BasisSpec::new(basis, *data.grid()),
            &config.scale,
            config.q,
            config.centering,
        );
    }
    if config.q > data.len() - 1 {
        return Err(Error::InvalidArgument(format!(
            "q = {} exceeds n - 1 = {}",
            config.q,
            data.len() - 1
        )));
    }
    let grid = *data.grid();
    let center = config.centering.center(data)?;
    let centered = data.centered(&center)?;
    let rows: Vec<Vec<f64>> = centered.curves().iter().map(|c| c.values().to_vec()).collect();

    let scan = scan_for(config, &grid);
    let out = scan.run(&rows, config.q)?;
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let values = out
        .directions
        .iter()
        .map(|v| scan.value(v, &refs))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PCFit {
        grid,
        directions: out
            .directions
            .into_iter()
            .map(|v| Curve::from_parts(grid, v))
            .collect(),
        values,
        center,
        config: *config,
        steps: out.steps,
        truncated: out.truncated,
        coefficients: None,
    })
}

/// `n x q` matrix of `<direction_k, X_i - center>`.
pub fn scores(data: &FunctionalSample, fit: &PCFit) -> Result<Vec<Vec<f64>>> {
    if *data.grid() != fit.grid {
        return Err(Error::GridMismatch);
    }
    let dt = fit.grid.dt();
    let centered = data.centered(&fit.center)?;
    Ok(centered
        .curves()
        .iter()
        .map(|x| {
            fit.directions
                .iter()
                .map(|d| dt * dot(d.values(), x.values()))
                .collect()
        })
        .collect())
}
