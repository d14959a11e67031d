//! Dimension estimators: box counting on point clouds, the pairwise
//! correlation sum, and the measure-weighted information dimension
//! statistic. All three report per-scale values plus slope summaries.

use rayon::prelude::*;
use std::collections::HashSet;

use crate::embed::{GridIndex, PointCloud};
use crate::linalg::ls_slope;
use crate::rng::SplitMix64;
use crate::systems::EmpiricalMeasure;
use crate::{Error, Result};

/// Per-scale statistics with slope summaries over the fit range.
#[derive(Clone, Debug)]
pub struct DimensionEstimate {
    /// (scale, statistic), scales strictly decreasing.
    pub per_scale: Vec<(f64, f64)>,
    /// Least-squares slope over the fit range (for box counting and the
    /// correlation sum: log statistic against -log scale). For the
    /// information dimension this is the statistic at the finest scale.
    pub slope: f64,
    /// Minimum of the incremental two-point slopes over the fit range
    /// (information dimension: minimum statistic over the finest half).
    pub lower_slope: f64,
    /// Maximum, symmetrically.
    pub upper_slope: f64,
    /// (scale_min, scale_max) actually used for the fit.
    pub fit_range: (f64, f64),
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InsufficientScales);
    }
    if grid.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("scales must be positive".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("scale grid must strictly decrease".into()));
    }
    Ok(())
}

/// Middle portion of the grid on the log axis: drops 20% of the log-span on
/// each side (at least two scales always survive).
fn default_fit_indices(grid: &[f64]) -> Vec<usize> {
    let lmax = grid[0].ln();
    let lmin = grid[grid.len() - 1].ln();
    let span = lmax - lmin;
    let keep: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let l = grid[i].ln();
            l <= lmax - 0.2 * span + 1e-12 && l >= lmin + 0.2 * span - 1e-12
        })
        .collect();
    if keep.len() >= 2 {
        keep
    } else {
        (0..grid.len()).collect()
    }
}

/// Slope of log statistic against x(delta), where x is -log delta for
/// counts that grow as scales shrink and log delta for statistics that
/// decay with the scale.
fn slopes_from_counts(
    grid: &[f64],
    stats: &[f64],
    fit: &[usize],
    against_neg_log: bool,
) -> (f64, f64, f64) {
    let x_of = |i: usize| {
        if against_neg_log {
            -grid[i].ln()
        } else {
            grid[i].ln()
        }
    };
    let xs: Vec<f64> = fit.iter().map(|&i| x_of(i)).collect();
    let ys: Vec<f64> = fit.iter().map(|&i| stats[i].max(1e-300).ln()).collect();
    let slope = ls_slope(&xs, &ys).unwrap_or(0.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in fit.windows(2) {
        let (i, j) = (w[0], w[1]);
        let dx = x_of(j) - x_of(i);
        if dx.abs() < 1e-300 {
            continue;
        }
        let s = (stats[j].max(1e-300).ln() - stats[i].max(1e-300).ln()) / dx;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if !lo.is_finite() {
        lo = slope;
        hi = slope;
    }
    (slope, lo, hi)
}

fn occupied_boxes(cloud: &PointCloud, delta: f64, shift: &[f64]) -> usize {
    let mut cells: HashSet<Vec<i64>> = HashSet::new();
    for i in 0..cloud.len() {
        let key: Vec<i64> = cloud
            .point(i)
            .iter()
            .enumerate()
            .map(|(d, &x)| ((x - shift[d]) / delta).floor() as i64)
            .collect();
        cells.insert(key);
    }
    cells.len()
}

/// Box-counting estimate: occupied axis-aligned boxes of side delta,
/// anchored at the origin. `shift_seed` switches on averaging the counts
/// over 4 random grid shifts.
pub fn box_counting_dim(
    cloud: &PointCloud,
    delta_grid: &[f64],
    shift_seed: Option<u64>,
) -> Result<DimensionEstimate> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty cloud".into()));
    }
    validate_grid(delta_grid)?;
    let dim = cloud.dim();
    let shifts: Vec<Vec<f64>> = match shift_seed {
        None => vec![vec![0.0; dim]],
        Some(seed) => {
            let mut rng = SplitMix64::new(seed);
            (0..4)
                .map(|_| (0..dim).map(|_| rng.next_f64()).collect())
                .collect()
        }
    };
    let stats: Vec<f64> = delta_grid
        .par_iter()
        .map(|&delta| {
            let total: usize = shifts
                .iter()
                .map(|s| {
                    let scaled: Vec<f64> = s.iter().map(|v| v * delta).collect();
                    occupied_boxes(cloud, delta, &scaled)
                })
                .sum();
            total as f64 / shifts.len() as f64
        })
        .collect();
    let fit = default_fit_indices(delta_grid);
    let (slope, lo, hi) = slopes_from_counts(delta_grid, &stats, &fit, true);
    Ok(DimensionEstimate {
        per_scale: delta_grid.iter().copied().zip(stats).collect(),
        slope,
        lower_slope: lo,
        upper_slope: hi,
        fit_range: (delta_grid[*fit.last().unwrap()], delta_grid[fit[0]]),
    })
}

/// Correlation-sum estimate: C(delta) = fraction of ordered pairs (i != j)
/// within distance delta, with the log-log slope over the fit range.
pub fn correlation_dim(cloud: &PointCloud, delta_grid: &[f64]) -> Result<DimensionEstimate> {
    if cloud.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    validate_grid(delta_grid)?;
    let n = cloud.len();
    let stats: Vec<f64> = delta_grid
        .iter()
        .map(|&delta| {
            let index = GridIndex::build(cloud, delta);
            let counts: Vec<u64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut c = 0u64;
                    index.for_each_in_ball(cloud.point(i), delta, |j, _| {
                        if j != i {
                            c += 1;
                        }
                    });
                    c
                })
                .collect();
            let pairs: u64 = counts.iter().sum();
            pairs as f64 / (n as f64 * (n - 1) as f64)
        })
        .collect();
    let fit = default_fit_indices(delta_grid);
    let (slope, lo, hi) = slopes_from_counts(delta_grid, &stats, &fit, false);
    Ok(DimensionEstimate {
        per_scale: delta_grid.iter().copied().zip(stats).collect(),
        slope,
        lower_slope: lo,
        upper_slope: hi,
        fit_range: (delta_grid[*fit.last().unwrap()], delta_grid[fit[0]]),
    })
}

/// Information-dimension statistic: at each scale eps,
/// sum_x mass(x) * log mu(B(x, eps)) / log eps over the atoms. The lower
/// and upper surrogates are the min and max of the statistic over the
/// finest half of the grid; `slope` is the finest-scale value.
pub fn information_dim(
    measure: &EmpiricalMeasure,
    eps_grid: &[f64],
) -> Result<DimensionEstimate> {
    if measure.is_empty() {
        return Err(Error::InvalidInput("empty measure".into()));
    }
    validate_grid(eps_grid)?;
    let n = measure.len();
    let flat: Vec<f64> = (0..n).flat_map(|i| measure.atom(i).to_vec()).collect();
    let cloud = PointCloud::new(measure.dim, flat)?;
    let stats: Vec<f64> = eps_grid
        .iter()
        .map(|&eps| {
            let index = GridIndex::build(&cloud, eps);
            let terms: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut ball_mass = 0.0;
                    index.for_each_in_ball(measure.atom(i), eps, |j, _| {
                        ball_mass += measure.mass(j);
                    });
                    measure.mass(i) * ball_mass.ln() / eps.ln()
                })
                .collect();
            terms.iter().sum()
        })
        .collect();
    let half_start = eps_grid.len() / 2;
    let fine = &stats[half_start..];
    let lo = fine.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = fine.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(DimensionEstimate {
        slope: *stats.last().unwrap(),
        per_scale: eps_grid.iter().copied().zip(stats).collect(),
        lower_slope: lo,
        upper_slope: hi,
        fit_range: (eps_grid[eps_grid.len() - 1], eps_grid[half_start]),
    })
}

/// Geometric grid from hi down to lo with the given number of points.
pub fn geometric_grid(hi: f64, lo: f64, points: usize) -> Vec<f64> {
    assert!(hi > lo && lo > 0.0 && points >= 2);
    let ratio = (lo / hi).powf(1.0 / (points - 1) as f64);
    let mut out = Vec::with_capacity(points);
    let mut v = hi;
    for _ in 0..points {
        out.push(v);
        v *= ratio;
    }
    out
}

/// Left endpoints of the level-n middle-thirds construction, scaled by 3^n
/// so every point is an exact integer in f64: 2^n points in [0, 3^n).
/// Pair with scale grids of exact powers of three.
pub fn cantor_left_endpoints(level: u32) -> Vec<f64> {
    let mut pts = vec![0i64];
    for _ in 0..level {
        let mut next = Vec::with_capacity(pts.len() * 2);
        for &p in &pts {
            next.push(3 * p);
            next.push(3 * p + 2);
        }
        pts = next;
    }
    pts.into_iter().map(|p| p as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::euclidean_dist;
    use crate::rng::SplitMix64;
    use crate::systems::{dyadic_atomic_measure, inverse_square_betas};

    fn cloud_from_scalars(vals: &[f64]) -> PointCloud {
        PointCloud::new(1, vals.to_vec()).unwrap()
    }

    #[test]
    fn interval_box_dimension_one() {
        let mut rng = SplitMix64::new(1);
        let vals: Vec<f64> = (0..100_000).map(|_| rng.next_f64()).collect();
        let cloud = cloud_from_scalars(&vals);
        let grid = geometric_grid(0.25, 1.0 / 1024.0, 11);
        let est = box_counting_dim(&cloud, &grid, None).unwrap();
        assert!((est.slope - 1.0).abs() < 0.05, "slope {}", est.slope);
    }

    #[test]
    fn single_point_dimension_zero() {
        let cloud = cloud_from_scalars(&[0.4; 50]);
        let grid = geometric_grid(0.5, 1e-3, 8);
        let est = box_counting_dim(&cloud, &grid, None).unwrap();
        assert_eq!(est.slope, 0.0);
        // cross-check with the correlation sum on two coincident atom groups
        let est_c = correlation_dim(&cloud, &grid).unwrap();
        assert_eq!(est_c.slope, 0.0);
    }

    #[test]
    fn cantor_box_dimension() {
        let pts = cantor_left_endpoints(12);
        assert_eq!(pts.len(), 1 << 12);
        let cloud = cloud_from_scalars(&pts);
        // exact power-of-three scales over the integer-scaled construction
        let grid: Vec<f64> = (2..=11).rev().map(|j| 3.0f64.powi(j)).collect();
        let est = box_counting_dim(&cloud, &grid, None).unwrap();
        let expect = 2.0f64.ln() / 3.0f64.ln();
        assert!((est.slope - expect).abs() < 0.03, "slope {}", est.slope);
        // Counts are exactly 2^j at scale 3^(12-j), so the incremental
        // slopes collapse onto the same value.
        assert!((est.lower_slope - expect).abs() < 1e-9, "lower {}", est.lower_slope);
        assert!((est.upper_slope - expect).abs() < 1e-9, "upper {}", est.upper_slope);
        for (idx, &(delta, n)) in est.per_scale.iter().enumerate() {
            let j = 12 - (11 - idx as i32);
            assert_eq!(n, 2.0f64.powi(j), "count at {delta}");
        }
    }

    #[test]
    fn shift_averaged_counts_agree_on_homogeneous_sets() {
        // Averaging over 4 random grid shifts must not move the slope of a
        // homogeneous sample, and counts stay within a box of the anchored
        // ones.
        let mut rng = SplitMix64::new(14);
        let vals: Vec<f64> = (0..30_000).map(|_| rng.next_f64()).collect();
        let cloud = cloud_from_scalars(&vals);
        let grid = geometric_grid(0.25, 1e-3, 9);
        let anchored = box_counting_dim(&cloud, &grid, None).unwrap();
        let shifted = box_counting_dim(&cloud, &grid, Some(99)).unwrap();
        assert!((anchored.slope - shifted.slope).abs() < 0.02);
        for (a, s) in anchored.per_scale.iter().zip(&shifted.per_scale) {
            assert!((a.1 - s.1).abs() <= 1.0 + 1e-9, "{} vs {}", a.1, s.1);
        }
    }

    #[test]
    fn box_counts_monotone_and_scale_invariant() {
        let mut rng = SplitMix64::new(2);
        let vals: Vec<f64> = (0..2000).map(|_| rng.next_f64()).collect();
        let cloud = cloud_from_scalars(&vals);
        let grid = geometric_grid(0.5, 1e-3, 9);
        let est = box_counting_dim(&cloud, &grid, None).unwrap();
        for w in est.per_scale.windows(2) {
            assert!(w[1].1 >= w[0].1, "counts must grow as boxes shrink");
        }
        let doubled: Vec<f64> = vals.iter().map(|v| v * 2.0).collect();
        let cloud2 = cloud_from_scalars(&doubled);
        let grid2: Vec<f64> = grid.iter().map(|d| d * 2.0).collect();
        let est2 = box_counting_dim(&cloud2, &grid2, None).unwrap();
        for (a, b) in est.per_scale.iter().zip(&est2.per_scale) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn correlation_interval_slope_one() {
        let mut rng = SplitMix64::new(3);
        let vals: Vec<f64> = (0..20_000).map(|_| rng.next_f64()).collect();
        let cloud = cloud_from_scalars(&vals);
        let grid = geometric_grid(0.1, 1e-3, 9);
        let est = correlation_dim(&cloud, &grid).unwrap();
        assert!((est.slope - 1.0).abs() < 0.05, "slope {}", est.slope);
    }

    #[test]
    fn correlation_two_atoms_slope_zero() {
        let mut vals = vec![0.0; 40];
        vals.extend(vec![1.0; 40]);
        let cloud = cloud_from_scalars(&vals);
        let grid = geometric_grid(0.3, 1e-3, 8);
        let est = correlation_dim(&cloud, &grid).unwrap();
        assert!(est.slope.abs() < 1e-9);
    }

    #[test]
    fn correlation_matches_brute_force_on_subsample() {
        // Independent oracle: all-pairs scan.
        let mut rng = SplitMix64::new(4);
        let n = 1500usize;
        let mut flat = Vec::with_capacity(2 * n);
        for _ in 0..n {
            flat.push(rng.next_f64());
            flat.push(rng.next_f64());
        }
        let cloud = PointCloud::new(2, flat.clone()).unwrap();
        let grid = geometric_grid(0.2, 0.02, 4);
        let est = correlation_dim(&cloud, &grid).unwrap();
        for (idx, &delta) in grid.iter().enumerate() {
            let mut pairs = 0u64;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    if euclidean_dist(&flat[2 * i..2 * i + 2], &flat[2 * j..2 * j + 2]) < delta {
                        pairs += 1;
                    }
                }
            }
            let brute = pairs as f64 / (n as f64 * (n - 1) as f64);
            assert!(
                (est.per_scale[idx].1 - brute).abs() < 1e-12,
                "delta {delta}: {} vs {brute}",
                est.per_scale[idx].1
            );
        }
    }

    #[test]
    fn correlation_henon_attractor() {
        // Slope near the accepted value, and the correlation sums agree
        // with an independent all-pairs scan on a contiguous subsample.
        let sys = crate::systems::MapSystem::Henon { a: 1.4, b: 0.3 };
        let orbit = crate::systems::iterate(&sys, &[0.1, 0.1], 100_000, 1000).unwrap();
        let flat: Vec<f64> = (0..orbit.len()).flat_map(|i| orbit.point(i).to_vec()).collect();
        let cloud = PointCloud::new(2, flat.clone()).unwrap();
        let grid = geometric_grid(0.1, 1e-3, 10);
        let est = correlation_dim(&cloud, &grid).unwrap();
        assert!((est.slope - 1.2).abs() < 0.1, "slope {}", est.slope);
        let sub = 10_000usize;
        let sub_cloud = PointCloud::new(2, flat[..2 * sub].to_vec()).unwrap();
        let sub_est = correlation_dim(&sub_cloud, &grid).unwrap();
        for (idx, &delta) in grid.iter().enumerate().take(4) {
            let mut pairs = 0u64;
            for i in 0..sub {
                for j in 0..sub {
                    if i != j
                        && euclidean_dist(&flat[2 * i..2 * i + 2], &flat[2 * j..2 * j + 2]) < delta
                    {
                        pairs += 1;
                    }
                }
            }
            let brute = pairs as f64 / (sub as f64 * (sub - 1) as f64);
            assert!(
                (sub_est.per_scale[idx].1 - brute).abs() <= 1e-12 * brute.max(1.0),
                "delta {delta}: {} vs brute {brute}",
                sub_est.per_scale[idx].1
            );
        }
    }

    #[test]
    fn correlation_below_box_on_shared_clouds() {
        let mut rng = SplitMix64::new(5);
        let vals: Vec<f64> = (0..20_000).map(|_| rng.next_f64()).collect();
        let cantor: Vec<f64> = cantor_left_endpoints(10)
            .into_iter()
            .map(|p| p / 3.0f64.powi(10))
            .collect();
        for cloud in [cloud_from_scalars(&vals), cloud_from_scalars(&cantor)] {
            let grid = geometric_grid(0.1, 2e-3, 8);
            let c = correlation_dim(&cloud, &grid).unwrap();
            let b = box_counting_dim(&cloud, &grid, None).unwrap();
            assert!(c.slope <= b.slope + 0.1, "corr {} box {}", c.slope, b.slope);
        }
    }

    #[test]
    fn information_single_atom_zero() {
        let m = EmpiricalMeasure::new(1, vec![0.3], vec![1.0]).unwrap();
        let grid = geometric_grid(0.5, 1e-4, 6);
        let est = information_dim(&m, &grid).unwrap();
        for (_, v) in &est.per_scale {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn information_uniform_interval_one() {
        // Oracle: mu(B(x, eps)) = min(x+eps, 1) - max(x-eps, 0) for the
        // uniform measure; the expected statistic is the quadrature of
        // log mu(B)/log eps over the interval.
        let mut rng = SplitMix64::new(6);
        let n = 200_000;
        let atoms: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let m = EmpiricalMeasure::new(1, atoms, vec![1.0 / n as f64; n]).unwrap();
        let grid = geometric_grid(0.005, 5e-5, 7);
        let est = information_dim(&m, &grid).unwrap();
        let oracle = |eps: f64| {
            let steps = 20_000;
            let mut acc = 0.0;
            for i in 0..steps {
                let x = (i as f64 + 0.5) / steps as f64;
                let mass = (x + eps).min(1.0) - (x - eps).max(0.0);
                acc += mass.ln() / eps.ln();
            }
            acc / steps as f64
        };
        for (idx, &(eps, stat)) in est.per_scale.iter().enumerate() {
            let expect = oracle(eps);
            assert!(
                (stat - expect).abs() < 0.02,
                "level {idx}: {stat} vs oracle {expect}"
            );
        }
        assert!((est.slope - 1.0).abs() < 0.1, "finest stat {}", est.slope);
    }

    #[test]
    fn information_dyadic_atomic_tends_to_zero() {
        // Purely atomic measure: ball mass stabilizes at the atom mass, so
        // the statistic decays toward zero as scales shrink.
        let d = dyadic_atomic_measure(&inverse_square_betas(12)).unwrap();
        let grid: Vec<f64> = (3..=40).map(|j| 2.0f64.powi(-j)).collect();
        let est = information_dim(&d.measure, &grid).unwrap();
        assert!(est.slope < 0.15, "finest stat {}", est.slope);
        assert!(est.lower_slope < 0.15);
        let coarse = est.per_scale[0].1;
        assert!(est.slope < coarse, "statistic must shrink with scale");
    }

    #[test]
    fn grid_validation() {
        let cloud = cloud_from_scalars(&[0.0, 1.0]);
        assert!(box_counting_dim(&cloud, &[0.1], None).is_err());
        assert!(box_counting_dim(&cloud, &[0.1, 0.2], None).is_err());
    }
}
