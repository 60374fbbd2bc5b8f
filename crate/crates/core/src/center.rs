//! Location estimates for curve samples: mean, pointwise median, and the
//! spatial (L2-geometric) median.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{dot, Curve, FunctionalSample};
use crate::scale::median_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    Mean,
    #[serde(rename = "pmedian")]
    PointwiseMedian,
    #[serde(rename = "smedian")]
    SpatialMedian,
}

impl Centering {
    pub fn label(&self) -> &'static str {
        match self {
            Centering::Mean => "mean",
            Centering::PointwiseMedian => "pmedian",
            Centering::SpatialMedian => "smedian",
        }
    }

    /// Computes the center of `data` with default spatial-median settings.
    pub fn center(&self, data: &FunctionalSample) -> Result<Curve> {
        Ok(match self {
            Centering::Mean => mean_curve(data),
            Centering::PointwiseMedian => pointwise_median(data),
            Centering::SpatialMedian => {
                spatial_median(data, SPATIAL_MEDIAN_TOL, SPATIAL_MEDIAN_MAX_ITER).center
            }
        })
    }
}

pub const SPATIAL_MEDIAN_TOL: f64 = 1e-8;
pub const SPATIAL_MEDIAN_MAX_ITER: usize = 500;

const COINCIDENCE_EPS: f64 = 1e-12;

pub fn mean_curve(data: &FunctionalSample) -> Curve {
    let grid = *data.grid();
    let n = data.len() as f64;
    let mut acc = vec![0.0; grid.len()];
    for c in data.curves() {
        for (a, v) in acc.iter_mut().zip(c.values()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    Curve::from_parts(grid, acc)
}

pub fn pointwise_median(data: &FunctionalSample) -> Curve {
    let grid = *data.grid();
    let mut column = vec![0.0; data.len()];
    let values = (0..grid.len())
        .map(|j| {
            for (slot, c) in column.iter_mut().zip(data.curves()) {
                *slot = c.values()[j];
            }
            median_in_place(&mut column)
        })
        .collect();
    Curve::from_parts(grid, values)
}

/// Output of the Weiszfeld iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMedian {
    pub center: Curve,
    pub iterations: usize,
    pub converged: bool,
    /// `sum_i ||X_i - theta||` at the returned center.
    pub objective: f64,
    /// Objective at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn distance(dt: f64, x: &[f64], y: &[f64]) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (dt * s).sqrt()
}

fn objective(dt: f64, rows: &[&[f64]], theta: &[f64]) -> f64 {
    rows.iter().map(|r| distance(dt, r, theta)).sum()
}

/// Whether data point `i` satisfies the subgradient optimality condition
/// `|| sum_{j != i} (X_j - X_i) / ||X_j - X_i|| || <= 1`.
fn data_point_is_optimal(dt: f64, rows: &[&[f64]], i: usize) -> bool {
    let m = rows[i].len();
    let mut g = vec![0.0; m];
    let mut ties = 0usize;
    for (j, r) in rows.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = distance(dt, r, rows[i]);
        if d < COINCIDENCE_EPS {
            ties += 1;
            continue;
        }
        for (gk, (a, b)) in g.iter_mut().zip(r.iter().zip(rows[i])) {
            *gk += (a - b) / d;
        }
    }
    // Coincident copies of X_i each absorb a unit of subgradient.
    (dt * dot(&g, &g)).sqrt() <= 1.0 + ties as f64
}

/// Weiszfeld iteration for `argmin_theta sum_i ||X_i - theta||`, started at
/// the pointwise median.
///
/// When the iterate lands on a data point, that point's term is dropped and
/// the point is returned if it satisfies the subgradient condition.
pub fn spatial_median(data: &FunctionalSample, tol: f64, max_iter: usize) -> SpatialMedian {
    let grid = *data.grid();
    let dt = grid.dt();
    let rows = data.rows();
    let mut theta = pointwise_median(data).into_values();
    let mut obj = objective(dt, &rows, &theta);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let mut num = vec![0.0; grid.len()];
        let mut den = 0.0;
        let mut hit = None;
        for (i, r) in rows.iter().enumerate() {
            let d = distance(dt, r, &theta);
            if d < COINCIDENCE_EPS {
                hit.get_or_insert(i);
                continue;
            }
            for (nk, v) in num.iter_mut().zip(r.iter()) {
                *nk += v / d;
            }
            den += 1.0 / d;
        }
        if let Some(i) = hit {
            if data_point_is_optimal(dt, &rows, i) {
                theta = rows[i].to_vec();
                converged = true;
                break;
            }
        }
        if den == 0.0 {
            converged = true;
            break;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let step = distance(dt, &next, &theta);
        let scale = (dt * dot(&theta, &theta)).sqrt().max(1.0);
        let next_obj = objective(dt, &rows, &next);
        iterations += 1;
        if hit.is_some() && next_obj > obj {
            // Dropping a coincident term can break monotone descent; keep the
            // better iterate.
            trace.push(obj);
            converged = step <= tol * scale;
            break;
        }
        theta = next;
        obj = next_obj;
        trace.push(obj);
        if step <= tol * scale {
            converged = true;
            break;
        }
    }

    // The minimizer may be a data point that the iteration only approaches.
    let mut best = obj;
    let mut best_idx = None;
    for (i, r) in rows.iter().enumerate() {
        let o = objective(dt, &rows, r);
        if o < best {
            best = o;
            best_idx = Some(i);
        }
    }
    if let Some(i) = best_idx {
        theta = rows[i].to_vec();
        obj = best;
    }

    SpatialMedian {
        center: Curve::from_parts(grid, theta),
        iterations,
        converged,
        objective: obj,
        objective_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, norm, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn constants(grid: Grid, vals: &[f64]) -> FunctionalSample {
        FunctionalSample::new(grid, vals.iter().map(|&v| grid.curve(|_| v)).collect()).unwrap()
    }

    fn random_sample(seed: u64, n: usize, m: usize) -> FunctionalSample {
        let grid = make_grid(-1.0, 1.0, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        FunctionalSample::from_rows(grid, rows).unwrap()
    }

    #[test]
    fn mean_examples() {
        let g = make_grid(-1.0, 1.0, 9).unwrap();
        let f = g.curve(|t| t.sin() + 2.0);
        let one = FunctionalSample::new(g, vec![f.clone()]).unwrap();
        assert_eq!(mean_curve(&one), f);
        let pm = FunctionalSample::new(g, vec![f.clone(), f.neg()]).unwrap();
        assert!(mean_curve(&pm).values().iter().all(|&v| v == 0.0));
        let m = mean_curve(&constants(g, &[1.0, 2.0, 6.0]));
        assert!(m.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn pointwise_median_examples() {
        let g = make_grid(-1.0, 1.0, 9).unwrap();
        let f = g.curve(|t| t.cos());
        let s = FunctionalSample::new(g, vec![f.clone(), f.neg(), g.zero_curve()]).unwrap();
        assert!(pointwise_median(&s).values().iter().all(|&v| v == 0.0));
        let m = pointwise_median(&constants(g, &[1.0, 2.0, 100.0]));
        assert!(m.values().iter().all(|&v| v == 2.0));
        let m = pointwise_median(&constants(g, &[1.0, 3.0]));
        assert!(m.values().iter().all(|&v| v == 2.0));
    }

    /// Golden-section minimization of sum |v_i - x| on [lo, hi].
    fn golden_1d(vals: &[f64], mut lo: f64, mut hi: f64) -> f64 {
        let f = |x: f64| vals.iter().map(|v| (v - x).abs()).sum::<f64>();
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if f(a) <= f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn spatial_median_examples() {
        let g = make_grid(-1.0, 1.0, 9).unwrap();
        let f = g.curve(|t| 1.0 + t);
        let s = FunctionalSample::new(g, vec![f.clone(), f.neg(), g.zero_curve()]).unwrap();
        let sm = spatial_median(&s, 1e-8, 500);
        assert!(norm(&sm.center) < 1e-8);

        let one = FunctionalSample::new(g, vec![f.clone()]).unwrap();
        assert_eq!(spatial_median(&one, 1e-8, 500).center, f);

        let vals = [0.0, 0.0, 0.0, 9.0];
        let oracle = golden_1d(&vals, -10.0, 10.0);
        assert!(oracle.abs() < 1e-6);
        let sm = spatial_median(&constants(g, &vals), 1e-8, 500);
        assert!(sm.center.values().iter().all(|v| (v - oracle).abs() < 1e-6));
    }

    #[test]
    fn spatial_median_beats_mean_and_data_points() {
        for seed in 0..10 {
            let s = random_sample(seed, 25, 7);
            let sm = spatial_median(&s, 1e-8, 500);
            let dt = s.grid().dt();
            let rows = s.rows();
            let at = |c: &[f64]| objective(dt, &rows, c);
            assert!(sm.objective <= at(mean_curve(&s).values()) + 1e-8);
            for r in &rows {
                assert!(sm.objective <= at(r) + 1e-8);
            }
            assert!(sm.converged);
        }
    }

    #[test]
    fn weiszfeld_descent_is_monotone() {
        for seed in 0..10 {
            let s = random_sample(100 + seed, 40, 12);
            let sm = spatial_median(&s, 1e-10, 500);
            for w in sm.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", w);
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let s = random_sample(7, 30, 10);
        let shift = s.grid().curve(|t| 3.0 * t - 1.5);
        let moved = FunctionalSample::new(
            *s.grid(),
            s.curves().iter().map(|c| c.add(&shift).unwrap()).collect(),
        )
        .unwrap();
        let a = spatial_median(&s, 1e-12, 2000).center;
        let b = spatial_median(&moved, 1e-12, 2000).center;
        let diff = b.sub(&a.add(&shift).unwrap()).unwrap();
        assert!(diff.values().iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn coordinate_permutation_equivariance() {
        let s = random_sample(9, 15, 6);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = s
            .rows()
            .iter()
            .map(|r| perm.iter().map(|&p| r[p]).collect())
            .collect();
        let permuted = FunctionalSample::from_rows(*s.grid(), rows).unwrap();
        let a = spatial_median(&s, 1e-8, 500).center;
        let b = spatial_median(&permuted, 1e-8, 500).center;
        // Summation order over coordinates changes, so equality is up to rounding.
        for (k, &p) in perm.iter().enumerate() {
            assert!((b.values()[k] - a.values()[p]).abs() < 1e-12);
        }
    }
}
