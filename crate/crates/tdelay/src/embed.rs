//! Delay vectors, delay-coordinate point clouds, and exact fixed-radius
//! neighbor queries. The lag is fixed at 1: a delay vector collects k
//! consecutive readings.

use crate::linalg::euclidean_dist;
use crate::{Error, Result};

/// Ordered scalar readings of one observable.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    values: Vec<f64>,
    pub source_tag: String,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("time series must be nonempty".into()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {bad}"
            )));
        }
        Ok(TimeSeries {
            values,
            source_tag: source_tag.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }
}

/// Number of consecutive readings per delay vector.
#[derive(Clone, Copy, Debug)]
pub struct DelayParams {
    pub k: usize,
}

impl DelayParams {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("delay length k must be >= 1".into()));
        }
        Ok(DelayParams { k })
    }
}

pub const NO_SUCCESSOR: u32 = u32::MAX;

/// Finite set of points in R^k with optional probability weights and
/// optional successor links (index of the point one time step ahead).
/// Immutable after construction; queries are read-only.
#[derive(Clone, Debug)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>, // n * dim, row-major
    weights: Option<Vec<f64>>,
    succ: Option<Vec<u32>>, // NO_SUCCESSOR marks absent links
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        Self::build(dim, points, None, None)
    }

    /// Cloud whose successor links form the chain i -> i+1 (trajectory order).
    pub fn chain(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        let succ = (0..n)
            .map(|i| if i + 1 < n { (i + 1) as u32 } else { NO_SUCCESSOR })
            .collect();
        Self::build(dim, points, None, Some(succ))
    }

    pub fn with_links(
        dim: usize,
        points: Vec<f64>,
        weights: Option<Vec<f64>>,
        succ: Vec<u32>,
    ) -> Result<Self> {
        Self::build(dim, points, weights, Some(succ))
    }

    fn build(
        dim: usize,
        points: Vec<f64>,
        weights: Option<Vec<f64>>,
        succ: Option<Vec<u32>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("point dimension must be >= 1".into()));
        }
        if points.len() % dim != 0 {
            return Err(Error::InvalidInput(
                "flat point buffer length must be a multiple of dim".into(),
            ));
        }
        let n = points.len() / dim;
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate in point {}",
                bad / dim
            )));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(Error::InvalidInput("weights length mismatch".into()));
            }
            if w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidInput("weights must be nonnegative".into()));
            }
            let total = crate::linalg::kahan_sum(w.iter().copied());
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "weights must sum to 1 (got {total})"
                )));
            }
        }
        if let Some(s) = &succ {
            if s.len() != n {
                return Err(Error::InvalidInput("successor length mismatch".into()));
            }
            if let Some(bad) = s
                .iter()
                .position(|&j| j != NO_SUCCESSOR && j as usize >= n)
            {
                return Err(Error::InvalidInput(format!(
                    "successor of point {bad} out of range"
                )));
            }
        }
        Ok(PointCloud {
            dim,
            points,
            weights,
            succ,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn successor(&self, i: usize) -> Option<usize> {
        match &self.succ {
            Some(s) => {
                let j = s[i];
                (j != NO_SUCCESSOR).then_some(j as usize)
            }
            None => None,
        }
    }

    pub fn has_successors(&self) -> bool {
        self.succ.is_some()
    }
}

/// Windows `series` into delay vectors of length k with lag 1.
///
/// Point i is (values[i], ..., values[i+k-1]); successors chain i -> i+1.
pub fn delay_vectors(series: &TimeSeries, params: DelayParams) -> Result<PointCloud> {
    let k = params.k;
    let v = series.values();
    if v.len() < k {
        return Err(Error::InvalidInput(format!(
            "series length {} shorter than delay length {k}",
            v.len()
        )));
    }
    let n_points = v.len() - k + 1;
    let mut flat = Vec::with_capacity(n_points * k);
    for i in 0..n_points {
        flat.extend_from_slice(&v[i..i + k]);
    }
    PointCloud::chain(k, flat)
}

/// Indices i with ||z_i - y|| < eps (open Euclidean ball), restricted to
/// points that have a successor. Sorted ascending.
pub fn radius_query(cloud: &PointCloud, y: &[f64], eps: f64) -> Result<Vec<usize>> {
    if y.len() != cloud.dim() {
        return Err(Error::InvalidInput(format!(
            "query dimension {} does not match cloud dimension {}",
            y.len(),
            cloud.dim()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    let mut out = Vec::new();
    for i in 0..cloud.len() {
        if cloud.successor(i).is_none() {
            continue;
        }
        if euclidean_dist(cloud.point(i), y) < eps {
            out.push(i);
        }
    }
    Ok(out)
}

/// Uniform-cell spatial index for repeated fixed-radius queries. Exact: a
/// query visits all cells intersecting the ball's bounding box and filters
/// by true distance.
pub struct GridIndex<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    table: std::collections::HashMap<Vec<i64>, Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    pub fn build(cloud: &'a PointCloud, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut table: std::collections::HashMap<Vec<i64>, Vec<u32>> =
            std::collections::HashMap::new();
        for i in 0..cloud.len() {
            let key = Self::key_of(cloud.point(i), cell);
            table.entry(key).or_default().push(i as u32);
        }
        GridIndex { cloud, cell, table }
    }

    fn key_of(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|&x| (x / cell).floor() as i64).collect()
    }

    /// Calls `f(i, dist)` for every point with ||z_i - y|| < eps, in
    /// ascending index order within each visited cell; cell visit order is a
    /// fixed lexicographic walk, so the overall order is deterministic.
    pub fn for_each_in_ball(&self, y: &[f64], eps: f64, mut f: impl FnMut(usize, f64)) {
        assert!(eps <= self.cell * (1.0 + 1e-12), "radius exceeds cell size");
        let dim = self.cloud.dim();
        let base = Self::key_of(y, self.cell);
        let mut offsets = vec![-1i64; dim];
        loop {
            let key: Vec<i64> = base.iter().zip(&offsets).map(|(b, o)| b + o).collect();
            if let Some(bucket) = self.table.get(&key) {
                for &i in bucket {
                    let d = euclidean_dist(self.cloud.point(i as usize), y);
                    if d < eps {
                        f(i as usize, d);
                    }
                }
            }
            // advance mixed-radix counter over {-1,0,1}^dim
            let mut carry = true;
            for o in offsets.iter_mut() {
                if *o < 1 {
                    *o += 1;
                    carry = false;
                    break;
                }
                *o = -1;
            }
            if carry {
                break;
            }
        }
    }

    pub fn in_ball(&self, y: &[f64], eps: f64) -> Vec<usize> {
        let mut v = Vec::new();
        self.for_each_in_ball(y, eps, |i, _| v.push(i));
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::systems::{iterate, MapSystem};

    fn cloud_1d(vals: &[f64]) -> PointCloud {
        let series = TimeSeries::new(vals.to_vec(), "test").unwrap();
        delay_vectors(&series, DelayParams::new(1).unwrap()).unwrap()
    }

    #[test]
    fn windowing_basic() {
        let series = TimeSeries::new(vec![0.0, 1.0, 0.0, 1.0], "t").unwrap();
        let cloud = delay_vectors(&series, DelayParams::new(2).unwrap()).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.point(0), &[0.0, 1.0]);
        assert_eq!(cloud.point(1), &[1.0, 0.0]);
        assert_eq!(cloud.point(2), &[0.0, 1.0]);
        assert_eq!(cloud.successor(0), Some(1));
        assert_eq!(cloud.successor(2), None);
    }

    #[test]
    fn windowing_degenerate_single_value() {
        let series = TimeSeries::new(vec![5.0], "t").unwrap();
        let cloud = delay_vectors(&series, DelayParams::new(1).unwrap()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.point(0), &[5.0]);
        assert_eq!(cloud.successor(0), None);
    }

    #[test]
    fn windowing_too_short_errors() {
        let series = TimeSeries::new(vec![1.0, 2.0], "t").unwrap();
        assert!(delay_vectors(&series, DelayParams::new(3).unwrap()).is_err());
    }

    #[test]
    fn windowing_of_logistic_orbit_matches_direct_iteration() {
        // Oracle: recompute the orbit by direct iteration and compare the
        // first delay vector coordinate by coordinate.
        let sys = MapSystem::Logistic { r: 4.0 };
        let orbit = iterate(&sys, &[0.3], 11, 0).unwrap();
        let values: Vec<f64> = (0..11).map(|i| orbit.point(i)[0]).collect();
        let series = TimeSeries::new(values.clone(), "logistic").unwrap();
        let cloud = delay_vectors(&series, DelayParams::new(3).unwrap()).unwrap();
        assert_eq!(cloud.len(), 9);
        let mut x = 0.3;
        let mut direct = Vec::new();
        for _ in 0..3 {
            direct.push(x);
            x = 4.0 * x * (1.0 - x);
        }
        for j in 0..3 {
            assert_eq!(cloud.point(0)[j], direct[j]);
        }
        // Windowing consistency: first coordinates reproduce the series head.
        for i in 0..cloud.len() {
            assert_eq!(cloud.point(i)[0], values[i]);
        }
    }

    #[test]
    fn radius_query_hand_enumerated() {
        let cloud = cloud_1d(&[0.0, 1.0, 0.0, 1.0, 0.0]);
        let hits = radius_query(&cloud, &[0.0], 0.5).unwrap();
        assert_eq!(hits, vec![0, 2]); // index 4 has no successor
    }

    #[test]
    fn radius_query_covers_cloud_for_huge_radius() {
        let cloud = cloud_1d(&[0.0, 1.0, 0.0, 1.0, 0.0]);
        let hits = radius_query(&cloud, &[0.5], 100.0).unwrap();
        assert_eq!(hits, vec![0, 1, 2, 3]);
    }

    #[test]
    fn radius_query_far_query_empty() {
        let cloud = cloud_1d(&[0.0, 1.0, 0.0]);
        let hits = radius_query(&cloud, &[50.0], 0.5).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn radius_query_dimension_mismatch() {
        let cloud = cloud_1d(&[0.0, 1.0]);
        assert!(radius_query(&cloud, &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn radius_query_monotone_in_radius_and_order_free() {
        let mut rng = SplitMix64::new(11);
        let vals: Vec<f64> = (0..60).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let series = TimeSeries::new(vals.clone(), "t").unwrap();
        let cloud = delay_vectors(&series, DelayParams::new(2).unwrap()).unwrap();
        let y = [0.1, -0.2];
        let small = radius_query(&cloud, &y, 0.3).unwrap();
        let large = radius_query(&cloud, &y, 0.6).unwrap();
        for i in &small {
            assert!(large.contains(i));
        }
        // Permuting storage order leaves the hit set (as points) unchanged.
        let mut perm: Vec<usize> = (0..cloud.len()).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.below(i + 1);
            perm.swap(i, j);
        }
        let mut flat = Vec::new();
        let mut succ = vec![NO_SUCCESSOR; cloud.len()];
        let mut inv = vec![0usize; cloud.len()];
        for (new_i, &old_i) in perm.iter().enumerate() {
            inv[old_i] = new_i;
        }
        for &old_i in &perm {
            flat.extend_from_slice(cloud.point(old_i));
        }
        for (new_i, &old_i) in perm.iter().enumerate() {
            if let Some(s) = cloud.successor(old_i) {
                succ[new_i] = inv[s] as u32;
            }
        }
        let shuffled = PointCloud::with_links(2, flat, None, succ).unwrap();
        let hits_orig: std::collections::BTreeSet<Vec<u64>> = radius_query(&cloud, &y, 0.4)
            .unwrap()
            .iter()
            .map(|&i| cloud.point(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        let hits_perm: std::collections::BTreeSet<Vec<u64>> = radius_query(&shuffled, &y, 0.4)
            .unwrap()
            .iter()
            .map(|&i| shuffled.point(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(hits_orig, hits_perm);
    }

    #[test]
    fn grid_index_matches_linear_scan() {
        let mut rng = SplitMix64::new(5);
        for dim in 1..=3usize {
            let n = 300;
            let mut flat = Vec::with_capacity(n * dim);
            for _ in 0..n * dim {
                flat.push(rng.uniform(-2.0, 2.0));
            }
            let cloud = PointCloud::chain(dim, flat).unwrap();
            for _ in 0..20 {
                let y: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let eps = rng.uniform(0.05, 0.5);
                let index = GridIndex::build(&cloud, eps);
                let mut from_grid = index.in_ball(&y, eps);
                from_grid.retain(|&i| cloud.successor(i).is_some());
                let from_scan = radius_query(&cloud, &y, eps).unwrap();
                assert_eq!(from_grid, from_scan);
            }
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let res = PointCloud::with_links(
            1,
            vec![0.0, 1.0],
            Some(vec![0.5, 0.6]),
            vec![1, 0],
        );
        assert!(res.is_err());
    }
}
