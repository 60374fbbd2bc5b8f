//! Robust cross-validation of the smoothing parameter.
//!
//! The sample is centered once with a robust location. For each candidate
//! parameter, the first `ell` directions are refitted without the held-out
//! curves, and each held-out curve is scored by the L2 norm of its residual
//! off the span of those directions. The criterion is the squared scale,
//! about zero, of the held-out residual norms; K-fold sums it over folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::center::Centering;
use crate::error::{Error, Result};
use crate::grid::{norm, orthogonal_residual, Curve, FunctionalSample, Metric};
use crate::projpursuit::{fit, Mode, PPConfig, DEGENERATE_REL_TOL};
use crate::scale::{Location, ScaleSpec};
use crate::sieve::gram_schmidt;

/// Which smoothing parameter the grid ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CVTarget {
    /// `tau` of the penalized-norm estimator.
    Tau,
    /// `rho` of the penalized-scale estimator.
    Rho,
}

impl CVTarget {
    pub fn mode(&self, param: f64) -> Mode {
        match self {
            CVTarget::Tau => Mode::PenalizeNorm { tau: param },
            CVTarget::Rho => Mode::PenalizeScale { rho: param },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVConfig {
    pub ell: usize,
    /// Number of folds; unused by leave-one-out.
    pub folds: usize,
    pub param_grid: Vec<f64>,
    pub scale_about_zero: ScaleSpec,
    pub seed: u64,
    pub target: CVTarget,
    /// Location removed before any refit; a robust one whatever the estimator.
    pub centering: Centering,
}

impl CVConfig {
    pub fn new(target: CVTarget, param_grid: Vec<f64>) -> Self {
        Self {
            ell: 1,
            folds: 4,
            param_grid,
            scale_about_zero: ScaleSpec::mscale().with_location(Location::Zero),
            seed: 0,
            target,
            centering: Centering::SpatialMedian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::InvalidArgument("ell must be >= 1".into()));
        }
        if self.param_grid.is_empty() {
            return Err(Error::InvalidArgument("parameter grid is empty".into()));
        }
        if let Some(p) = self.param_grid.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "grid values must be finite and >= 0, got {p}"
            )));
        }
        if self.scale_about_zero.location != Location::Zero {
            return Err(Error::InvalidArgument(
                "the criterion scale must be taken about zero".into(),
            ));
        }
        self.scale_about_zero.validate()
    }
}

/// `a * n^(-alpha)` for every `alpha` in `alphas` and `a` in `coefs`, in that order.
pub fn power_grid(coefs: &[f64], alphas: &[f64], n: usize) -> Vec<f64> {
    let n = n as f64;
    alphas
        .iter()
        .flat_map(|&al| coefs.iter().map(move |&a| a * n.powf(-al)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVRow {
    pub param: f64,
    /// `None` when every fit for this parameter failed.
    pub criterion: Option<f64>,
    /// Held-out units (curves or folds) whose fit failed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub selected: f64,
    pub table: Vec<CVRow>,
    /// Held-out index sets, in the order they were scored.
    pub folds: Vec<Vec<usize>>,
}

/// L2 norm of `x` minus its projection onto `span(directions)`.
///
/// The directions are re-orthonormalized in L2 first, so penalized-norm
/// fits can be passed as they are.
pub fn residual_norm(x: &Curve, directions: &[Curve]) -> Result<f64> {
    if directions.is_empty() {
        return Ok(norm(x));
    }
    let onb = gram_schmidt(directions)?;
    residual_norm_orthonormal(x, &onb)
}

fn residual_norm_orthonormal(x: &Curve, onb: &[Curve]) -> Result<f64> {
    let r = orthogonal_residual(x, onb, Metric::L2 { dt: x.grid().dt() })?;
    Ok(norm(&r).min(norm(x)))
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    out
}

/// Leave-one-out criterion `sigma^2(|X_1^perp|, ..., |X_n^perp|)`.
pub fn rcv_loo(data: &FunctionalSample, config: &CVConfig, template: &PPConfig) -> Result<CVResult> {
    if data.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: data.len(),
        });
    }
    let folds: Vec<Vec<usize>> = (0..data.len()).map(|i| vec![i]).collect();
    run(data, config, template, folds, Pooling::Pooled)
}

/// K-fold criterion `sum_j sigma^2(residual norms of fold j)`.
pub fn rcv_kfold(data: &FunctionalSample, config: &CVConfig, template: &PPConfig) -> Result<CVResult> {
    if config.folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "K-fold needs K >= 2, got {}",
            config.folds
        )));
    }
    if data.len() < 2 * config.folds {
        return Err(Error::TooFewPoints {
            needed: 2 * config.folds,
            got: data.len(),
        });
    }
    let folds = partition(data.len(), config.folds, config.seed);
    run(data, config, template, folds, Pooling::PerFold)
}

/// K-fold criterion over caller-supplied folds (no size precondition).
pub fn rcv_with_folds(
    data: &FunctionalSample,
    config: &CVConfig,
    template: &PPConfig,
    folds: Vec<Vec<usize>>,
) -> Result<CVResult> {
    let mut seen = vec![false; data.len()];
    for &i in folds.iter().flatten() {
        if i >= data.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!(
                "folds must be disjoint indices below {}",
                data.len()
            )));
        }
    }
    if folds.iter().any(|f| f.is_empty() || f.len() == data.len()) {
        return Err(Error::InvalidArgument("every fold needs a nonempty complement".into()));
    }
    let folds = folds
        .into_iter()
        .map(|mut f| {
            f.sort_unstable();
            f
        })
        .collect();
    run(data, config, template, folds, Pooling::PerFold)
}

#[derive(Clone, Copy)]
enum Pooling {
    /// One scale over all held-out norms.
    Pooled,
    /// One scale per fold, summed.
    PerFold,
}

fn run(
    data: &FunctionalSample,
    config: &CVConfig,
    template: &PPConfig,
    folds: Vec<Vec<usize>>,
    pooling: Pooling,
) -> Result<CVResult> {
    config.validate()?;
    let center = config.centering.center(data)?;
    let centered = data.centered(&center)?;
    let n = data.len();
    // Residual norms at rounding level relative to the data count as exact
    // zeros, so exactly spanned samples tie across the grid.
    let floor = DEGENERATE_REL_TOL * centered.curves().iter().map(norm).fold(0.0, f64::max);

    let complements: Vec<Vec<usize>> = folds
        .iter()
        .map(|f| (0..n).filter(|i| f.binary_search(i).is_err()).collect())
        .collect();
    // Sorted folds make the binary search above valid.
    debug_assert!(folds.iter().all(|f| f.windows(2).all(|w| w[0] < w[1])));

    let jobs: Vec<(usize, usize)> = (0..config.param_grid.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let norms: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            held_out_norms(
                &centered,
                &complements[f],
                &folds[f],
                config,
                template,
                config.param_grid[p],
            )
            .map(|v| v.into_iter().map(|r| if r <= floor { 0.0 } else { r }).collect())
            .ok()
        })
        .collect();

    let mut table = Vec::with_capacity(config.param_grid.len());
    for (p, &param) in config.param_grid.iter().enumerate() {
        let per_fold = &norms[p * folds.len()..(p + 1) * folds.len()];
        let failures = per_fold.iter().filter(|r| r.is_none()).count();
        let ok: Vec<&Vec<f64>> = per_fold.iter().flatten().collect();
        let criterion = if ok.is_empty() {
            None
        } else {
            Some(match pooling {
                Pooling::Pooled => {
                    let all: Vec<f64> = ok.iter().flat_map(|v| v.iter().copied()).collect();
                    squared_scale(&all, &config.scale_about_zero)
                }
                Pooling::PerFold => ok
                    .iter()
                    .map(|v| squared_scale(v, &config.scale_about_zero))
                    .sum(),
            })
        };
        table.push(CVRow {
            param,
            criterion,
            failures,
        });
    }

    let selected = select(&table).ok_or(Error::AllDegenerate { step: 0 })?;
    Ok(CVResult {
        selected,
        table,
        folds,
    })
}

fn held_out_norms(
    centered: &FunctionalSample,
    train: &[usize],
    test: &[usize],
    config: &CVConfig,
    template: &PPConfig,
    param: f64,
) -> Result<Vec<f64>> {
    let mut pp = *template;
    pp.mode = config.target.mode(param);
    pp.q = config.ell;
    let fitted = fit(&centered.select(train)?, &pp)?;
    let onb = gram_schmidt(&fitted.directions)?;
    test.iter()
        .map(|&i| residual_norm_orthonormal(&centered.curves()[i], &onb))
        .collect()
}

fn squared_scale(norms: &[f64], spec: &ScaleSpec) -> f64 {
    // Non-convergence is not an error here: the last iterate still ranks
    // the parameters.
    match spec.estimate(norms) {
        Ok(est) => est.value * est.value,
        Err(_) => f64::NAN,
    }
}

/// Minimizing parameter; ties go to the smaller parameter.
fn select(table: &[CVRow]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for row in table {
        let Some(c) = row.criterion.filter(|c| !c.is_nan()) else {
            continue;
        };
        best = match best {
            Some((bp, bc)) if bc < c || (bc == c && bp <= row.param) => Some((bp, bc)),
            _ => Some((row.param, c)),
        };
    }
    best.map(|(p, _)| p)
}
