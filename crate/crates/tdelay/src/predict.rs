//! Local-constant prediction from delay clouds and its error statistics:
//! the neighbor-average predictor, the measure-weighted conditional mean
//! chi_eps and deviation sigma_eps, scale sweeps of sigma, exceedance
//! fractions, and a nearest-training-point prediction map.

use rayon::prelude::*;

use crate::embed::{radius_query, GridIndex, PointCloud};
use crate::linalg::euclidean_dist;
use crate::systems::{MapSystem, Observable};
use crate::{Error, Result};

/// Ball query against a cloud of delay vectors.
#[derive(Clone, Debug)]
pub struct PredictionQuery {
    pub y: Vec<f64>,
    pub eps: f64,
}

impl PredictionQuery {
    pub fn new(y: Vec<f64>, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("ball radius must be positive".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query point must be finite".into()));
        }
        Ok(PredictionQuery { y, eps })
    }
}

/// Exceedance measurement: the mass of points whose local prediction error
/// exceeds `delta` at scale `epsilon`.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub delta: f64,
    pub epsilon: f64,
    pub fraction: f64,
    pub sample_size: usize,
    /// Number of points in the exceedance set (unweighted).
    pub exceed_count: usize,
}

/// Mean of the successors of all in-ball cloud points (uniform count
/// weighting). Errors with `NoNeighbors` when the ball is empty.
pub fn fs_predict(cloud: &PointCloud, query: &PredictionQuery) -> Result<Vec<f64>> {
    let hits = radius_query(cloud, &query.y, query.eps)?;
    if hits.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let mut mean = vec![0.0; cloud.dim()];
    for &i in &hits {
        let s = cloud.successor(i).expect("radius_query returns linked points");
        for (m, v) in mean.iter_mut().zip(cloud.point(s)) {
            *m += v;
        }
    }
    let inv = 1.0 / hits.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Mean squared deviation of the successors from the predictor.
pub fn fs_variance(cloud: &PointCloud, query: &PredictionQuery) -> Result<f64> {
    let hits = radius_query(cloud, &query.y, query.eps)?;
    if hits.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let mean = fs_predict(cloud, query)?;
    let mut acc = 0.0;
    for &i in &hits {
        let s = cloud.successor(i).unwrap();
        let d = euclidean_dist(cloud.point(s), &mean);
        acc += d * d;
    }
    Ok(acc / hits.len() as f64)
}

fn weighted_ball_moments(
    cloud: &PointCloud,
    hits: &[usize],
) -> Option<(Vec<f64>, f64, f64)> {
    let total: f64 = hits.iter().map(|&i| cloud.weight(i)).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut chi = vec![0.0; cloud.dim()];
    for &i in hits {
        let w = cloud.weight(i);
        let s = cloud.successor(i).expect("linked");
        for (m, v) in chi.iter_mut().zip(cloud.point(s)) {
            *m += w * v;
        }
    }
    for m in &mut chi {
        *m /= total;
    }
    let mut second = 0.0;
    for &i in hits {
        let w = cloud.weight(i);
        let s = cloud.successor(i).unwrap();
        let d = euclidean_dist(cloud.point(s), &chi);
        second += w * d * d;
    }
    Some((chi, (second / total).max(0.0).sqrt(), total))
}

/// Weight-normalized average of the successor images over the ball.
pub fn chi_eps(cloud: &PointCloud, query: &PredictionQuery) -> Result<Vec<f64>> {
    let hits = radius_query(cloud, &query.y, query.eps)?;
    match weighted_ball_moments(cloud, &hits) {
        Some((chi, _, _)) => Ok(chi),
        None => Err(Error::NoMass),
    }
}

/// Square root of the weight-normalized second moment of the successor
/// images about chi_eps.
pub fn sigma_eps(cloud: &PointCloud, query: &PredictionQuery) -> Result<f64> {
    let hits = radius_query(cloud, &query.y, query.eps)?;
    match weighted_ball_moments(cloud, &hits) {
        Some((_, sigma, _)) => Ok(sigma),
        None => Err(Error::NoMass),
    }
}

/// sigma_eps along a decreasing radius grid. Reports the observed values and
/// the final-level value as the estimate; claims a trend, never convergence.
#[derive(Clone, Debug)]
pub struct SigmaTrend {
    pub per_eps: Vec<(f64, f64)>,
    pub estimate: f64,
    pub monotone_nonincreasing: bool,
    /// True when a ball on the grid was empty and the sweep stopped early.
    pub truncated: bool,
}

pub fn sigma_limit_estimate(
    cloud: &PointCloud,
    y: &[f64],
    eps_grid: &[f64],
) -> Result<SigmaTrend> {
    if eps_grid.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 grid levels".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("grid must strictly decrease".into()));
    }
    let mut per_eps = Vec::new();
    let mut truncated = false;
    for &eps in eps_grid {
        let query = PredictionQuery::new(y.to_vec(), eps)?;
        match sigma_eps(cloud, &query) {
            Ok(sigma) => per_eps.push((eps, sigma)),
            Err(Error::NoMass) | Err(Error::NoNeighbors) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if per_eps.is_empty() {
        return Err(Error::NoMass);
    }
    let monotone = per_eps.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    Ok(SigmaTrend {
        estimate: per_eps.last().unwrap().1,
        per_eps,
        monotone_nonincreasing: monotone,
        truncated,
    })
}

/// Mass of cloud points whose sigma_eps at their own location exceeds
/// `delta`. Points whose ball holds no linked atom contribute zero.
pub fn error_fraction(cloud: &PointCloud, delta: f64, eps: f64) -> Result<ErrorReport> {
    exceedance(cloud, delta, eps, false)
}

/// Same as [`error_fraction`] but counts sigma >= delta (closed comparison),
/// matching lower-bound style statements.
pub fn error_fraction_closed(cloud: &PointCloud, delta: f64, eps: f64) -> Result<ErrorReport> {
    exceedance(cloud, delta, eps, true)
}

fn exceedance(cloud: &PointCloud, delta: f64, eps: f64, closed: bool) -> Result<ErrorReport> {
    if !(delta > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidInput("delta and eps must be positive".into()));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty cloud".into()));
    }
    let index = GridIndex::build(cloud, eps);
    let n = cloud.len();
    let sigmas: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut hits = Vec::new();
            index.for_each_in_ball(cloud.point(i), eps, |j, _| {
                if cloud.successor(j).is_some() {
                    hits.push(j);
                }
            });
            hits.sort_unstable();
            weighted_ball_moments(cloud, &hits).map(|(_, s, _)| s)
        })
        .collect();
    let mut fraction = 0.0;
    let mut exceed_count = 0usize;
    for (i, s) in sigmas.iter().enumerate() {
        if let Some(sigma) = s {
            let exceeds = if closed { *sigma >= delta } else { *sigma > delta };
            if exceeds {
                fraction += cloud.weight(i);
                exceed_count += 1;
            }
        }
    }
    Ok(ErrorReport {
        delta,
        epsilon: eps,
        fraction,
        sample_size: n,
        exceed_count,
    })
}

/// A finite-scale predictability violation: two states whose delay vectors
/// nearly coincide while their one-step images do not.
#[derive(Clone, Debug)]
pub struct PredictabilityViolation {
    pub i: usize,
    pub j: usize,
    pub dist_in: f64,
    pub dist_out: f64,
}

/// Flags sample pairs with ||phi(x1) - phi(x2)|| <= tol_in whose images
/// satisfy ||phi(T x1) - phi(T x2)|| > tol_out.
pub fn deterministic_check(
    sample: &[Vec<f64>],
    system: &MapSystem,
    observable: &Observable,
    k: usize,
    tol_in: f64,
    tol_out: f64,
) -> Result<Vec<PredictabilityViolation>> {
    if !(tol_out > tol_in && tol_in > 0.0) {
        return Err(Error::InvalidInput("need tol_out > tol_in > 0".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let dim = system.state_dim();
    let n = sample.len();
    // phi(x) and phi(Tx) for each sample point, from k+1 readings.
    let mut phis = vec![0.0; n * k];
    let mut phi_imgs = vec![0.0; n * k];
    for (idx, x) in sample.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::InvalidInput(format!(
                "sample point {idx} has wrong dimension"
            )));
        }
        let orbit = crate::systems::iterate(system, x, k + 1, 0)?;
        for i in 0..k {
            phis[idx * k + i] = observable.eval(orbit.point(i));
            phi_imgs[idx * k + i] = observable.eval(orbit.point(i + 1));
        }
    }
    let mut violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d_in = euclidean_dist(&phis[i * k..(i + 1) * k], &phis[j * k..(j + 1) * k]);
            if d_in > tol_in {
                continue;
            }
            let d_out = euclidean_dist(
                &phi_imgs[i * k..(i + 1) * k],
                &phi_imgs[j * k..(j + 1) * k],
            );
            if d_out > tol_out {
                violations.push(PredictabilityViolation {
                    i,
                    j,
                    dist_in: d_in,
                    dist_out: d_out,
                });
            }
        }
    }
    Ok(violations)
}

/// Empirical prediction map: the successor of the nearest training point.
/// Nearest-neighbor ties break toward the lowest index.
pub struct PredictionMap<'a> {
    training: &'a PointCloud,
    usable: Vec<usize>,
}

pub fn build_prediction_map(training: &PointCloud) -> Result<PredictionMap<'_>> {
    let usable: Vec<usize> = (0..training.len())
        .filter(|&i| training.successor(i).is_some())
        .collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput(
            "training cloud has no linked points".into(),
        ));
    }
    Ok(PredictionMap { training, usable })
}

impl PredictionMap<'_> {
    pub fn predict(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.training.dim() {
            return Err(Error::InvalidInput("query dimension mismatch".into()));
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for &i in &self.usable {
            let d = euclidean_dist(self.training.point(i), y);
            if d < best.0 || (d == best.0 && i < best.1) {
                best = (d, i);
            }
        }
        let succ = self.training.successor(best.1).unwrap();
        Ok(self.training.point(succ).to_vec())
    }
}

/// Delay cloud of an observed measure: point i is
/// (h(a_i), h(T a_i), ..., h(T^{k-1} a_i)) with the measure's masses as
/// weights; `state_succ[i]` names the atom equal to T(a_i), so successor
/// links give phi(T a_i) in delay space.
pub fn phi_cloud(
    system: &MapSystem,
    observable: &Observable,
    k: usize,
    measure: &crate::systems::EmpiricalMeasure,
    state_succ: &[u32],
) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if state_succ.len() != measure.len() {
        return Err(Error::InvalidInput("state successor length mismatch".into()));
    }
    let n = measure.len();
    let mut flat = Vec::with_capacity(n * k);
    for i in 0..n {
        let orbit = crate::systems::iterate(system, measure.atom(i), k, 0)?;
        for t in 0..k {
            flat.push(observable.eval(orbit.point(t)));
        }
    }
    let weights: Vec<f64> = (0..n).map(|i| measure.mass(i)).collect();
    PointCloud::with_links(k, flat, Some(weights), state_succ.to_vec())
}
