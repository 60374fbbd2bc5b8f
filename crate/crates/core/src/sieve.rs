//! Sieve estimators: the candidate scan run on coordinates in an
//! orthonormalized Fourier or cubic B-spline basis, mapped back to curves.

use serde::{Deserialize, Serialize};

use crate::center::Centering;
use crate::error::{Error, Result};
use crate::grid::{dot, Curve, FunctionalSample, Grid, Metric};
use crate::projpursuit::{apply_sign_convention, CandidateScan, Mode, PCFit, PPConfig};
use crate::scale::ScaleSpec;

const RANK_TOL: f64 = 1e-10;
const SCORE_ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum BasisKind {
    /// `{1, cos(pi x), sin(pi x), ..., cos(qn pi x), sin(qn pi x)}`, `2 qn + 1` functions.
    Fourier { qn: usize },
    /// `pn` clamped cubic B-splines on equispaced knots.
    BSpline { pn: usize },
}

impl BasisKind {
    pub fn dimension(&self) -> usize {
        match *self {
            BasisKind::Fourier { qn } => 2 * qn + 1,
            BasisKind::BSpline { pn } => pn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub grid: Grid,
    /// Compute inner scores on a coarser equispaced grid with this many points.
    #[serde(default)]
    pub score_points: Option<usize>,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, grid: Grid) -> Self {
        Self {
            kind,
            grid,
            score_points: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.kind.dimension();
        let m = self.grid.len();
        match self.kind {
            BasisKind::Fourier { qn } if qn == 0 => {
                return Err(Error::InvalidDimension("Fourier basis needs qn >= 1".into()))
            }
            BasisKind::BSpline { pn } if pn < 4 => {
                return Err(Error::InvalidDimension(format!(
                    "cubic B-spline basis needs pn >= 4, got {pn}"
                )))
            }
            _ => {}
        }
        if p > m {
            return Err(Error::InvalidDimension(format!(
                "basis dimension {p} exceeds the {m} grid points"
            )));
        }
        if let Some(k) = self.score_points {
            if k < p || k < 3 {
                return Err(Error::InvalidDimension(format!(
                    "score grid of {k} points cannot carry {p} basis functions"
                )));
            }
        }
        Ok(())
    }
}

fn unit_interval(grid: &Grid, t: f64) -> f64 {
    -1.0 + 2.0 * (t - grid.a()) / (grid.b() - grid.a())
}

fn evaluate_basis(kind: BasisKind, grid: &Grid) -> Vec<Vec<f64>> {
    let pts = grid.points();
    match kind {
        BasisKind::Fourier { qn } => {
            let mut out = vec![vec![1.0; pts.len()]];
            for k in 1..=qn {
                let w = k as f64 * std::f64::consts::PI;
                out.push(pts.iter().map(|&t| (w * unit_interval(grid, t)).cos()).collect());
                out.push(pts.iter().map(|&t| (w * unit_interval(grid, t)).sin()).collect());
            }
            out
        }
        BasisKind::BSpline { pn } => {
            let knots = clamped_knots(grid.a(), grid.b(), pn);
            (0..pn)
                .map(|j| pts.iter().map(|&t| cox_de_boor(&knots, j, 3, t)).collect())
                .collect()
        }
    }
}

/// Knot vector with four-fold end knots and `pn - 3` equal intervals.
fn clamped_knots(a: f64, b: f64, pn: usize) -> Vec<f64> {
    let intervals = pn - 3;
    let mut k = vec![a; 3];
    for i in 0..=intervals {
        k.push(a + (b - a) * i as f64 / intervals as f64);
    }
    k.extend([b; 3]);
    k
}

/// `B_{j,p}(t)` by the Cox-de Boor recursion (0/0 taken as 0).
fn cox_de_boor(knots: &[f64], j: usize, p: usize, t: f64) -> f64 {
    if p == 0 {
        return if knots[j] <= t && t < knots[j + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[j + p] - knots[j];
    if d1 > 0.0 {
        v += (t - knots[j]) / d1 * cox_de_boor(knots, j, p - 1, t);
    }
    let d2 = knots[j + p + 1] - knots[j + 1];
    if d2 > 0.0 {
        v += (knots[j + p + 1] - t) / d2 * cox_de_boor(knots, j + 1, p - 1, t);
    }
    v
}

/// Basis functions evaluated on `spec.grid`.
pub fn build_basis(spec: &BasisSpec) -> Result<Vec<Curve>> {
    spec.validate()?;
    Ok(evaluate_basis(spec.kind, &spec.grid)
        .into_iter()
        .map(|v| Curve::from_parts(spec.grid, v))
        .collect())
}

/// Modified Gram-Schmidt, two passes. Returns the orthonormal vectors and
/// the coefficients expressing each in terms of the inputs.
fn mgs(vectors: &[Vec<f64>], metric: Metric) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = vectors.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut coefs: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (j, v) in vectors.iter().enumerate() {
        let original = metric.norm(v);
        let mut w = v.clone();
        let mut c = vec![0.0; p];
        c[j] = 1.0;
        for _ in 0..2 {
            for (u, cu) in out.iter().zip(&coefs) {
                let r = metric.inner(&w, u);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= r * y);
                c.iter_mut().zip(cu).for_each(|(x, y)| *x -= r * y);
            }
        }
        let nrm = metric.norm(&w);
        if !(original > 0.0) || nrm <= RANK_TOL * original {
            return Err(Error::RankDeficientBasis { index: j });
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        c.iter_mut().for_each(|x| *x /= nrm);
        out.push(w);
        coefs.push(c);
    }
    Ok((out, coefs))
}

/// Orthonormalizes `basis` in the grid inner product.
pub fn gram_schmidt(basis: &[Curve]) -> Result<Vec<Curve>> {
    let Some(first) = basis.first() else {
        return Ok(Vec::new());
    };
    let grid = *first.grid();
    if basis.iter().any(|b| *b.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let raw: Vec<Vec<f64>> = basis.iter().map(|b| b.values().to_vec()).collect();
    let (onb, _) = mgs(&raw, Metric::L2 { dt: grid.dt() })?;
    Ok(onb.into_iter().map(|v| Curve::from_parts(grid, v)).collect())
}

/// `n x p` matrix of `<X_i, onb_j>`.
pub fn inner_scores(data: &FunctionalSample, onb: &[Curve]) -> Result<Vec<Vec<f64>>> {
    let grid = *data.grid();
    if onb.iter().any(|b| *b.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let metric = Metric::L2 { dt: grid.dt() };
    let refs: Vec<&[f64]> = onb.iter().map(|b| b.values()).collect();
    let dev = metric.gram_deviation(&refs);
    if dev > SCORE_ORTHONORMAL_TOL {
        return Err(Error::NonOrthonormalBasis { max_deviation: dev });
    }
    Ok(data
        .curves()
        .iter()
        .map(|x| refs.iter().map(|b| metric.inner(x.values(), b)).collect())
        .collect())
}

/// Maps a coefficient vector to `sum_j v_j onb_j`.
pub fn coefficients_to_curve(coefs: &[f64], onb: &[Curve]) -> Result<Curve> {
    let Some(first) = onb.first() else {
        return Err(Error::InvalidDimension("empty basis".into()));
    };
    if coefs.len() != onb.len() {
        return Err(Error::InvalidDimension(format!(
            "{} coefficients for {} basis functions",
            coefs.len(),
            onb.len()
        )));
    }
    let mut v = vec![0.0; first.grid().len()];
    for (c, b) in coefs.iter().zip(onb) {
        v.iter_mut().zip(b.values()).for_each(|(x, y)| *x += c * y);
    }
    Ok(Curve::from_parts(*first.grid(), v))
}

/// Linear interpolation of `values` (on `from`) at the points of `to`.
fn interpolate(values: &[f64], from: &Grid, to: &Grid) -> Vec<f64> {
    let m = values.len();
    to.points()
        .iter()
        .map(|&s| {
            let pos = ((s - from.point(0)) / from.dt()).clamp(0.0, (m - 1) as f64);
            let i = (pos.floor() as usize).min(m - 2);
            let w = pos - i as f64;
            (1.0 - w) * values[i] + w * values[i + 1]
        })
        .collect()
}

/// Orthonormal basis on the data grid plus the inner scores of `centered`.
fn coordinates(
    spec: &BasisSpec,
    centered: &FunctionalSample,
) -> Result<(Vec<Curve>, Vec<Vec<f64>>)> {
    let grid = spec.grid;
    let fine = evaluate_basis(spec.kind, &grid);
    match spec.score_points {
        Some(k) if k < grid.len() => {
            let coarse_grid = Grid::new(grid.a(), grid.b(), k)?;
            let coarse = evaluate_basis(spec.kind, &coarse_grid);
            let metric = Metric::L2 { dt: coarse_grid.dt() };
            let (onb_coarse, coefs) = mgs(&coarse, metric)?;
            let onb_fine = coefs
                .iter()
                .map(|c| {
                    let mut v = vec![0.0; grid.len()];
                    for (w, f) in c.iter().zip(&fine) {
                        v.iter_mut().zip(f).for_each(|(x, y)| *x += w * y);
                    }
                    Curve::from_parts(grid, v)
                })
                .collect();
            let scores = centered
                .curves()
                .iter()
                .map(|x| {
                    let xc = interpolate(x.values(), &grid, &coarse_grid);
                    onb_coarse.iter().map(|b| metric.inner(&xc, b)).collect()
                })
                .collect();
            Ok((onb_fine, scores))
        }
        _ => {
            let (onb, _) = mgs(&fine, Metric::L2 { dt: grid.dt() })?;
            let onb: Vec<Curve> = onb.into_iter().map(|v| Curve::from_parts(grid, v)).collect();
            let scores = inner_scores(centered, &onb)?;
            Ok((onb, scores))
        }
    }
}

/// Index of a coefficient vector over inner-score rows (Euclidean projections).
pub fn coefficient_index(coefs: &[f64], scores: &[Vec<f64>], scale: &ScaleSpec) -> Result<f64> {
    let proj: Vec<f64> = scores.iter().map(|y| dot(coefs, y)).collect();
    Ok(scale.estimate(&proj)?.value)
}

/// Centered inner scores used by a sieve fit, for replaying its indices.
pub fn fit_coordinates(data: &FunctionalSample, fit: &PCFit) -> Result<(Vec<Curve>, Vec<Vec<f64>>)> {
    let Mode::Sieve { basis } = fit.config.mode else {
        return Err(Error::InvalidArgument("not a sieve fit".into()));
    };
    let centered = data.centered(&fit.center)?;
    coordinates(&BasisSpec::new(basis, *data.grid()), &centered)
}

/// Sieve fit: the candidate scan on the inner scores of the centered data.
pub fn fit_sieve(
    data: &FunctionalSample,
    spec: &BasisSpec,
    scale: &ScaleSpec,
    q: usize,
    centering: Centering,
) -> Result<PCFit> {
    spec.validate()?;
    scale.validate()?;
    if *data.grid() != spec.grid {
        return Err(Error::GridMismatch);
    }
    if data.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: data.len(),
        });
    }
    let p = spec.kind.dimension();
    if q == 0 || q > p {
        return Err(Error::InvalidArgument(format!(
            "q = {q} must lie in 1..={p} for this basis"
        )));
    }
    let center = centering.center(data)?;
    let centered = data.centered(&center)?;
    let (onb, scores) = coordinates(spec, &centered)?;

    let scan = CandidateScan {
        geometry: Metric::Euclidean,
        projection: Metric::Euclidean,
        scale,
        scale_penalty: None,
    };
    let out = scan.run(&scores, q)?;
    let mut found = out.directions;
    if out.truncated {
        complete_orthonormal(&mut found, p, q);
    }
    let mut directions = Vec::with_capacity(q);
    let mut coefficients = Vec::with_capacity(q);
    let mut values = Vec::with_capacity(q);
    for mut v in found {
        let mut curve = coefficients_to_curve(&v, &onb)?.into_values();
        if apply_sign_convention(&mut curve) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = coefficient_index(&v, &scores, scale)?;
        values.push(s * s);
        directions.push(Curve::from_parts(spec.grid, curve));
        coefficients.push(v);
    }
    Ok(PCFit {
        grid: spec.grid,
        directions,
        values,
        center,
        config: PPConfig::new(*scale, Mode::Sieve { basis: spec.kind }, q, centering),
        steps: out.steps,
        truncated: out.truncated,
        coefficients: Some(coefficients),
    })
}

/// Extends orthonormal coefficient vectors to `q` by Gram-Schmidt on the
/// standard basis, in order. Once the scores are exhausted every unit vector
/// in the remaining span attains the (zero) index, so any completion is a
/// maximizer.
fn complete_orthonormal(vs: &mut Vec<Vec<f64>>, p: usize, q: usize) {
    for i in 0..p {
        if vs.len() >= q {
            break;
        }
        let mut w = vec![0.0; p];
        w[i] = 1.0;
        for _ in 0..2 {
            for v in vs.iter() {
                let r = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= r * y);
            }
        }
        let nrm = dot(&w, &w).sqrt();
        if nrm > 1e-8 {
            w.iter_mut().for_each(|x| *x /= nrm);
            vs.push(w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_product, make_grid, norm};
    use std::f64::consts::PI;

    #[test]
    fn fourier_basis_definition() {
        let g = make_grid(-1.0, 1.0, 30).unwrap();
        let b = build_basis(&BasisSpec::new(BasisKind::Fourier { qn: 1 }, g)).unwrap();
        assert_eq!(b.len(), 3);
        for (i, t) in g.points().iter().enumerate() {
            assert_eq!(b[0].values()[i], 1.0);
            assert!((b[1].values()[i] - (PI * t).cos()).abs() < 1e-14);
            assert!((b[2].values()[i] - (PI * t).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn bspline_basis_properties() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let b = build_basis(&BasisSpec::new(BasisKind::BSpline { pn: 10 }, g)).unwrap();
        assert_eq!(b.len(), 10);
        for c in &b {
            assert!(c.values().iter().all(|&v| v >= 0.0));
            // Local support: a cubic B-spline spans at most 4 of the 7 intervals.
            let nz = c.values().iter().filter(|v| **v > 0.0).count();
            assert!(nz > 0 && nz <= 4 * 50 / 7 + 2, "nz={nz}");
        }
        // Partition of unity on the interior.
        for i in 0..g.len() {
            let s: f64 = b.iter().map(|c| c.values()[i]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_fifteen_spans_cos_fifteen() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let spec = BasisSpec::new(BasisKind::Fourier { qn: 15 }, g);
        let onb = gram_schmidt(&build_basis(&spec).unwrap()).unwrap();
        assert_eq!(onb.len(), 31);
        let f = g.curve(|t| (15.0 * PI * t).cos());
        let r = crate::grid::orthogonal_residual(&f, &onb, Metric::L2 { dt: g.dt() }).unwrap();
        assert!(norm(&r) < 1e-8 * norm(&f));
    }

    #[test]
    fn basis_dimension_checks() {
        let g = make_grid(-1.0, 1.0, 20).unwrap();
        assert!(build_basis(&BasisSpec::new(BasisKind::Fourier { qn: 10 }, g)).is_err());
        assert!(build_basis(&BasisSpec::new(BasisKind::BSpline { pn: 3 }, g)).is_err());
        assert!(build_basis(&BasisSpec::new(BasisKind::BSpline { pn: 21 }, g)).is_err());
    }

    #[test]
    fn gram_schmidt_examples() {
        let g = make_grid(-1.0, 1.0, 40).unwrap();
        let one = g.curve(|_| 1.0);
        let t = g.curve(|t| t);
        let onb = gram_schmidt(&[one.clone(), t.clone()]).unwrap();
        assert!(norm(&onb[0].sub(&one.scaled(1.0 / norm(&one))).unwrap()) < 1e-12);
        assert!(norm(&onb[1].sub(&t.scaled(1.0 / norm(&t))).unwrap()) < 1e-12);

        let again = gram_schmidt(&onb).unwrap();
        for (a, b) in again.iter().zip(&onb) {
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-10));
        }

        let onb = gram_schmidt(&[one.clone(), g.curve(|t| 1.0 + t)]).unwrap();
        assert!(inner_product(&onb[1], &one).unwrap().abs() < 1e-10);

        let err = gram_schmidt(&[one.clone(), one.scaled(2.0)]);
        assert_eq!(err, Err(Error::RankDeficientBasis { index: 1 }));
    }

    #[test]
    fn built_bases_orthonormalize() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        for kind in [
            BasisKind::Fourier { qn: 5 },
            BasisKind::Fourier { qn: 15 },
            BasisKind::BSpline { pn: 10 },
            BasisKind::BSpline { pn: 20 },
            BasisKind::BSpline { pn: 40 },
        ] {
            let onb = gram_schmidt(&build_basis(&BasisSpec::new(kind, g)).unwrap()).unwrap();
            let refs: Vec<&[f64]> = onb.iter().map(|b| b.values()).collect();
            assert!(Metric::L2 { dt: g.dt() }.gram_deviation(&refs) < 1e-8, "{kind:?}");
        }
        // Clamped cubic splines with as many functions as grid points are not
        // identifiable: the end splines see too few points.
        let full = build_basis(&BasisSpec::new(BasisKind::BSpline { pn: 50 }, g)).unwrap();
        assert!(matches!(gram_schmidt(&full), Err(Error::RankDeficientBasis { .. })));
    }

    #[test]
    fn inner_scores_examples() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let onb = gram_schmidt(&build_basis(&BasisSpec::new(BasisKind::Fourier { qn: 3 }, g)).unwrap())
            .unwrap();
        let data = FunctionalSample::new(g, vec![onb[2].clone(), g.curve(|t| (11.0 * PI * t).sin())])
            .unwrap();
        let s = inner_scores(&data, &onb).unwrap();
        for (j, v) in s[0].iter().enumerate() {
            let e = if j == 2 { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-8);
        }
        assert!(s[1].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn coefficient_round_trip() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let onb = gram_schmidt(&build_basis(&BasisSpec::new(BasisKind::BSpline { pn: 12 }, g)).unwrap())
            .unwrap();
        let coefs: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).sin()).collect();
        let curve = coefficients_to_curve(&coefs, &onb).unwrap();
        let data = FunctionalSample::new(g, vec![curve]).unwrap();
        let back = inner_scores(&data, &onb).unwrap();
        for (a, b) in back[0].iter().zip(&coefs) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn sieve_fit_rank_one() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let spec = BasisSpec::new(BasisKind::Fourier { qn: 4 }, g);
        let onb = gram_schmidt(&build_basis(&spec).unwrap()).unwrap();
        let data = FunctionalSample::new(
            g,
            [-1.0, 2.0, 0.5, 3.0, -2.5].iter().map(|c| onb[0].scaled(*c)).collect(),
        )
        .unwrap();
        let fit = fit_sieve(&data, &spec, &ScaleSpec::sd(), 1, Centering::Mean).unwrap();
        let c = inner_product(&fit.directions[0], &onb[0]).unwrap();
        assert!((c.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exhausted_scores_are_completed_orthonormally() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let spec = BasisSpec::new(BasisKind::Fourier { qn: 4 }, g);
        let onb = gram_schmidt(&build_basis(&spec).unwrap()).unwrap();
        let data = FunctionalSample::new(
            g,
            [-1.0, 2.0, 0.5, 3.0, -2.5].iter().map(|c| onb[2].scaled(*c)).collect(),
        )
        .unwrap();
        let fit = fit_sieve(&data, &spec, &ScaleSpec::sd(), 4, Centering::Mean).unwrap();
        assert!(fit.truncated);
        assert_eq!(fit.directions.len(), 4);
        assert!((inner_product(&fit.directions[0], &onb[2]).unwrap().abs() - 1.0).abs() < 1e-10);
        for (i, a) in fit.directions.iter().enumerate() {
            for (k, b) in fit.directions.iter().enumerate() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((inner_product(a, b).unwrap() - want).abs() < 1e-8);
            }
        }
        assert!(fit.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sieve_directions_lie_in_span_with_unit_norm() {
        let g = make_grid(-1.0, 1.0, 50).unwrap();
        let data = FunctionalSample::new(
            g,
            (0..20)
                .map(|i| {
                    let a = (i as f64 * 1.3).sin() * 3.0;
                    let b = (i as f64 * 0.4).cos();
                    g.curve(|t| a * (4.0 * PI * t).sin() + b * t.powi(3) + 0.1 * (i as f64) * t)
                })
                .collect(),
        )
        .unwrap();
        for kind in [BasisKind::Fourier { qn: 6 }, BasisKind::BSpline { pn: 15 }] {
            let spec = BasisSpec::new(kind, g);
            let onb = gram_schmidt(&build_basis(&spec).unwrap()).unwrap();
            let fit = fit_sieve(&data, &spec, &ScaleSpec::mscale(), 3, Centering::SpatialMedian).unwrap();
            for d in &fit.directions {
                assert!((norm(d) - 1.0).abs() < 1e-6);
                let r = crate::grid::orthogonal_residual(d, &onb, Metric::L2 { dt: g.dt() }).unwrap();
                assert!(norm(&r) < 1e-8);
            }
        }
    }

    #[test]
    fn coarse_score_grid() {
        let g = make_grid(-1.0, 1.0, 120).unwrap();
        let mut spec = BasisSpec::new(BasisKind::Fourier { qn: 3 }, g);
        let data = FunctionalSample::new(
            g,
            (0..15)
                .map(|i| {
                    let a = 1.0 + i as f64;
                    g.curve(|t| a * (2.0 * PI * t).cos() + (i % 3) as f64 * (PI * t).sin())
                })
                .collect(),
        )
        .unwrap();
        let fine = fit_sieve(&data, &spec, &ScaleSpec::sd(), 1, Centering::Mean).unwrap();
        spec.score_points = Some(50);
        let coarse = fit_sieve(&data, &spec, &ScaleSpec::sd(), 1, Centering::Mean).unwrap();
        let c = inner_product(&fine.directions[0], &coarse.directions[0]).unwrap();
        assert!(c > 0.99, "cos={c}");
    }
}
