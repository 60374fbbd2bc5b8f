//! Karhunen-Loeve curve generator with contaminated score laws, the
//! direction error `D_j`, and a seeded Monte Carlo driver.
//!
//! Samples are `X_i = Z_i1 phi_1 + Z_i2 phi_2 + Z_i3 phi_3` on `(-1, 1)` with
//! `phi_1 = sin(4 pi x)`, `phi_2 = cos(7 pi x)`, `phi_3 = cos(15 pi x)`.
//! Contaminated columns are two-point mixtures `(1 - e) N(0, s^2) + e N(mu, 0.01)`.
//!
//! Every replication draws from its own ChaCha8 stream keyed by
//! `(seed, model, replication)`, so results do not depend on scheduling or on
//! which other models are in the run.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::center::Centering;
use crate::crossval::{power_grid, rcv_kfold, CVConfig, CVTarget};
use crate::error::{Error, Result};
use crate::grid::{dot, Curve, FunctionalSample, Grid};
use crate::projpursuit::{fit, Mode, PPConfig};
use crate::scale::{Location, ScaleKind, ScaleSpec};
use crate::sieve::BasisKind;

/// Standard deviation of the point-mass-like contaminating normal, `sqrt(0.01)`.
const OUTLIER_SD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    C0,
    C2,
    C3a,
    C3b,
    C23,
    Cauchy,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::C0,
        ModelKind::C2,
        ModelKind::C3a,
        ModelKind::C3b,
        ModelKind::C23,
        ModelKind::Cauchy,
    ];

    /// `(fraction, mean)` of the contaminating component for each score column.
    fn contamination(&self) -> [Option<(f64, f64)>; 3] {
        match self {
            ModelKind::C0 | ModelKind::Cauchy => [None; 3],
            ModelKind::C2 => [None, Some((0.2, 10.0)), None],
            ModelKind::C3a => [None, None, Some((0.2, 15.0))],
            ModelKind::C3b => [None, None, Some((0.2, 6.0))],
            ModelKind::C23 => [None, Some((0.1, 15.0)), Some((0.1, 20.0))],
        }
    }

    fn ordinal(&self) -> u64 {
        ModelKind::ALL.iter().position(|k| k == self).unwrap() as u64
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::C0 => "C0",
            ModelKind::C2 => "C2",
            ModelKind::C3a => "C3a",
            ModelKind::C3b => "C3b",
            ModelKind::C23 => "C23",
            ModelKind::Cauchy => "Cauchy",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown model '{s}' (expected C0, C2, C3a, C3b, C23 or Cauchy)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub kind: ModelKind,
    pub sigmas: [f64; 3],
    pub n: usize,
    pub grid: Grid,
    pub seed: u64,
}

impl SimModel {
    /// `n = 100` curves on 50 points of `(-1, 1)`, `sigmas = (4, 2, 1)`.
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            sigmas: [4.0, 2.0, 1.0],
            n: 100,
            grid: Grid::new(-1.0, 1.0, 50).expect("valid default grid"),
            seed: 0,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: self.n });
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "score standard deviations must be positive, got {:?}",
                self.sigmas
            )));
        }
        Ok(())
    }
}

/// `phi_1, phi_2, phi_3` evaluated on `grid` and scaled to unit grid norm.
pub fn true_directions(grid: &Grid) -> [Curve; 3] {
    use std::f64::consts::PI;
    let raw = [
        grid.curve(|t| (4.0 * PI * t).sin()),
        grid.curve(|t| (7.0 * PI * t).cos()),
        grid.curve(|t| (15.0 * PI * t).cos()),
    ];
    raw.map(|c| {
        let nrm = crate::grid::norm(&c);
        c.scaled(1.0 / nrm)
    })
}

/// `n x 3` score matrix drawn from the model's own seed.
pub fn gen_scores(model: &SimModel) -> Result<Vec<[f64; 3]>> {
    model.validate()?;
    Ok(draw_scores(model, &mut ChaCha8Rng::seed_from_u64(model.seed)))
}

fn draw_scores<R: Rng>(model: &SimModel, rng: &mut R) -> Vec<[f64; 3]> {
    let mix = model.kind.contamination();
    (0..model.n)
        .map(|_| {
            if model.kind == ModelKind::Cauchy {
                let u: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let w: f64 = rng.sample(StandardNormal);
                return std::array::from_fn(|j| model.sigmas[j] * u[j] / w.abs());
            }
            std::array::from_fn(|j| {
                let z: f64 = rng.sample(StandardNormal);
                match mix[j] {
                    Some((eps, mu)) if rng.random::<f64>() < eps => mu + OUTLIER_SD * z,
                    _ => model.sigmas[j] * z,
                }
            })
        })
        .collect()
}

/// Curves `sum_j scores[i][j] phi_j` on `grid`.
pub fn sample_from_scores(grid: &Grid, scores: &[[f64; 3]]) -> Result<FunctionalSample> {
    let phi = true_directions(grid);
    let rows = scores
        .iter()
        .map(|z| {
            (0..grid.len())
                .map(|k| z[0] * phi[0].values()[k] + z[1] * phi[1].values()[k] + z[2] * phi[2].values()[k])
                .collect()
        })
        .collect();
    FunctionalSample::from_rows(*grid, rows)
}

pub fn gen_sample(model: &SimModel) -> Result<FunctionalSample> {
    sample_from_scores(&model.grid, &gen_scores(model)?)
}

/// `min_s |s est / |est| - truth|^2 = 2 - 2 |<est / |est|, truth>|`.
pub fn direction_error(estimate: &Curve, truth: &Curve) -> Result<f64> {
    if estimate.grid() != truth.grid() {
        return Err(Error::GridMismatch);
    }
    let dt = truth.grid().dt();
    let en = (dt * dot(estimate.values(), estimate.values())).sqrt();
    if !(en > 0.0) {
        return Err(Error::ZeroEstimate);
    }
    let c = dt * dot(estimate.values(), truth.values()) / en;
    Ok((2.0 - 2.0 * c.abs()).max(0.0))
}

/// How an estimator's smoothing parameter is chosen in each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ParamChoice {
    /// Use the mode's parameter as given.
    Fixed,
    /// Robust K-fold over `a n^(-alpha)` for all `a` in `coefs`, `alpha` in `alphas`.
    KFold {
        coefs: Vec<f64>,
        alphas: Vec<f64>,
        folds: usize,
        ell: usize,
    },
}

impl ParamChoice {
    /// K-fold over `a in {0.05, 0.1, 0.25, 0.5, 0.75, 1, 1.5, 2}`, `alpha in {3, 4}`.
    pub fn default_kfold(folds: usize, ell: usize) -> Self {
        ParamChoice::KFold {
            coefs: vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            alphas: vec![3.0, 4.0],
            folds,
            ell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub scale: ScaleSpec,
    pub mode: Mode,
    pub centering: Centering,
    pub param: ParamChoice,
}

impl Estimator {
    /// Mean centering for the SD, spatial median for the robust scales.
    pub fn new(scale: ScaleKind, mode: Mode, param: ParamChoice) -> Self {
        let centering = match scale {
            ScaleKind::Sd => Centering::Mean,
            _ => Centering::SpatialMedian,
        };
        Self {
            scale: ScaleSpec::of_kind(scale),
            mode,
            centering,
            param,
        }
    }

    pub fn label(&self) -> String {
        let sel = match self.param {
            ParamChoice::Fixed => "fixed",
            ParamChoice::KFold { .. } => "kfold",
        };
        let mode = match self.mode {
            Mode::Sieve {
                basis: BasisKind::Fourier { qn },
            } => format!("sieve-fourier{qn}"),
            Mode::Sieve {
                basis: BasisKind::BSpline { pn },
            } => format!("sieve-bspline{pn}"),
            m => m.label().to_string(),
        };
        format!("{}/{}/{}", self.scale.kind.label(), mode, sel)
    }

    /// Fits three directions to `data`, selecting the parameter first if asked.
    /// Returns the directions and the parameter used.
    pub fn fit_directions(&self, data: &FunctionalSample, cv_seed: u64) -> Result<(Vec<Curve>, f64)> {
        let mut mode = self.mode;
        if let ParamChoice::KFold {
            coefs,
            alphas,
            folds,
            ell,
        } = &self.param
        {
            let target = match self.mode {
                Mode::PenalizeScale { .. } => CVTarget::Rho,
                Mode::PenalizeNorm { .. } => CVTarget::Tau,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "mode {} has no smoothing parameter to select",
                        self.mode.label()
                    )))
                }
            };
            let cfg = CVConfig {
                ell: *ell,
                folds: *folds,
                seed: cv_seed,
                // Classical estimators get the classical criterion, robust ones the robust one.
                scale_about_zero: ScaleSpec::of_kind(self.scale.kind).with_location(Location::Zero),
                centering: self.centering,
                ..CVConfig::new(target, power_grid(coefs, alphas, data.len()))
            };
            let template = PPConfig::new(self.scale, self.mode, *ell, self.centering);
            mode = mode.with_param(rcv_kfold(data, &cfg, &template)?.selected);
        }
        let pc = fit(data, &PPConfig::new(self.scale, mode, 3, self.centering))?;
        if pc.directions.len() < 3 {
            return Err(Error::AllDegenerate { step: pc.directions.len() + 1 });
        }
        Ok((pc.directions, mode.param()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub model: ModelKind,
    pub estimator: usize,
    pub replication: usize,
    /// `D_1, D_2, D_3`, or `None` when the fit failed.
    pub errors: Option<[f64; 3]>,
    pub param: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: ModelKind,
    pub estimator: String,
    pub scale: String,
    pub mode: String,
    /// The fixed parameter, or the mean selected one under K-fold.
    pub param: f64,
    pub j: usize,
    pub mean_dj: f64,
    pub nr: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub seed: u64,
    pub rows: Vec<SummaryRow>,
    pub replications: Vec<ReplicationRecord>,
}

impl MCSummary {
    /// Mean `D_j` (1-based `j`) for a model and estimator label.
    pub fn mean(&self, model: ModelKind, estimator: &str, j: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.estimator == estimator && r.j == j)
            .map(|r| r.mean_dj)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        out.write_record(["model", "estimator", "scale", "mode", "param", "j", "mean_Dj", "NR", "failures"])
            .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.model.to_string(),
                r.estimator.clone(),
                r.scale.clone(),
                r.mode.clone(),
                format!("{:.16e}", r.param),
                r.j.to_string(),
                format!("{:.16e}", r.mean_dj),
                r.nr.to_string(),
                r.failures.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::InvalidArgument(format!("csv write failed: {e}")))
    }
}

/// Runs `nr` replications of every model against every estimator.
///
/// All estimators see the same sample within a replication. Failed fits are
/// counted and left out of the means.
pub fn run_monte_carlo(
    models: &[SimModel],
    estimators: &[Estimator],
    nr: usize,
    seed: u64,
) -> Result<MCSummary> {
    if nr == 0 {
        return Err(Error::InvalidArgument("NR must be >= 1".into()));
    }
    for m in models {
        m.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..nr).map(move |r| (m, r)))
        .collect();
    let per_job: Vec<Vec<ReplicationRecord>> = jobs
        .par_iter()
        .map(|&(mi, rep)| replicate(&models[mi], estimators, rep, seed))
        .collect::<Result<_>>()?;
    let replications: Vec<ReplicationRecord> = per_job.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for model in models {
        for (ei, est) in estimators.iter().enumerate() {
            let recs: Vec<&ReplicationRecord> = replications
                .iter()
                .filter(|r| r.model == model.kind && r.estimator == ei)
                .collect();
            let ok: Vec<&ReplicationRecord> = recs.iter().copied().filter(|r| r.errors.is_some()).collect();
            let failures = recs.len() - ok.len();
            let param = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.param.unwrap_or(0.0)).sum::<f64>() / ok.len() as f64
            };
            for j in 0..3 {
                let mean_dj = if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.errors.unwrap()[j]).sum::<f64>() / ok.len() as f64
                };
                rows.push(SummaryRow {
                    model: model.kind,
                    estimator: est.label(),
                    scale: est.scale.kind.label().to_string(),
                    mode: est.mode.label().to_string(),
                    param,
                    j: j + 1,
                    mean_dj,
                    nr: ok.len(),
                    failures,
                });
            }
        }
    }
    Ok(MCSummary {
        seed,
        rows,
        replications,
    })
}

/// Generator for replication `rep` of `model` under the run seed.
pub fn replication_rng(model: &SimModel, seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ model.seed);
    rng.set_stream((model.kind.ordinal() << 32) | rep as u64);
    rng
}

fn replicate(
    model: &SimModel,
    estimators: &[Estimator],
    rep: usize,
    seed: u64,
) -> Result<Vec<ReplicationRecord>> {
    let mut rng = replication_rng(model, seed, rep);
    let data = sample_from_scores(&model.grid, &draw_scores(model, &mut rng))?;
    let truth = true_directions(&model.grid);
    let cv_seed = rng.next_u64();
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(ei, est)| {
            let outcome = est.fit_directions(&data, cv_seed).and_then(|(dirs, param)| {
                let mut e = [0.0; 3];
                for j in 0..3 {
                    e[j] = direction_error(&dirs[j], &truth[j])?;
                }
                Ok((e, param))
            });
            let (errors, param) = match outcome {
                Ok((e, p)) => (Some(e), Some(p)),
                Err(_) => (None, None),
            };
            ReplicationRecord {
                model: model.kind,
                estimator: ei,
                replication: rep,
                errors,
                param,
            }
        })
        .collect())
}
