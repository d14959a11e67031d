//! False-nearest-neighbor estimation of the minimal delay length: a
//! neighbor in R^k is false when the (k+1)-th reading diverges much faster
//! than the k-dimensional distance suggests.

use rayon::prelude::*;

use crate::embed::{delay_vectors, DelayParams, TimeSeries};
use crate::{Error, Result};

/// Static kd-tree over fixed-dimension points for exact nearest-neighbor
/// queries with an index-skip predicate. Splits on the widest dimension at
/// the median; ties in distance resolve toward the lowest point index.
pub struct KdTree<'a> {
    dim: usize,
    points: &'a [f64],
    nodes: Vec<Node>,
    root: usize,
}

struct Node {
    point: u32,
    split_dim: u16,
    left: u32,
    right: u32,
}

const NIL: u32 = u32::MAX;

impl<'a> KdTree<'a> {
    pub fn build(dim: usize, points: &'a [f64]) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(n);
        let root = Self::build_rec(dim, points, &mut order[..], &mut nodes);
        KdTree {
            dim,
            points,
            nodes,
            root,
        }
    }

    fn build_rec(dim: usize, points: &[f64], idx: &mut [u32], nodes: &mut Vec<Node>) -> usize {
        if idx.is_empty() {
            return NIL as usize;
        }
        // widest spread picks the split dimension
        let mut split_dim = 0usize;
        let mut best_spread = -1.0;
        for d in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in idx.iter() {
                let v = points[i as usize * dim + d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                split_dim = d;
            }
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            let va = points[a as usize * dim + split_dim];
            let vb = points[b as usize * dim + split_dim];
            va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
        });
        let point = idx[mid];
        let (left_slice, rest) = idx.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        let left = Self::build_rec(dim, points, left_slice, nodes);
        let right = Self::build_rec(dim, points, right_slice, nodes);
        nodes.push(Node {
            point,
            split_dim: split_dim as u16,
            left: left as u32,
            right: right as u32,
        });
        nodes.len() - 1
    }

    fn point(&self, i: u32) -> &[f64] {
        &self.points[i as usize * self.dim..(i as usize + 1) * self.dim]
    }

    /// Exact nearest neighbor among points not skipped. Returns
    /// (index, distance), or None when every point is skipped.
    pub fn nearest(&self, query: &[f64], skip: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut best: (f64, u32) = (f64::INFINITY, NIL);
        self.search(self.root, query, &skip, &mut best);
        (best.1 != NIL).then(|| (best.1 as usize, best.0.sqrt()))
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        skip: &impl Fn(usize) -> bool,
        best: &mut (f64, u32),
    ) {
        if node == NIL as usize {
            return;
        }
        let n = &self.nodes[node];
        let p = self.point(n.point);
        if !skip(n.point as usize) {
            let d2: f64 = p
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best.0 || (d2 == best.0 && n.point < best.1) {
                *best = (d2, n.point);
            }
        }
        let sd = n.split_dim as usize;
        let diff = query[sd] - p[sd];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near as usize, query, skip, best);
        if diff * diff <= best.0 {
            self.search(far as usize, query, skip, best);
        }
    }
}

/// Fraction of delay vectors whose nearest neighbor is false at ratio
/// threshold `r_tol`, plus a degeneracy flag for spread-free series.
#[derive(Clone, Debug)]
pub struct FnnFraction {
    pub fraction: f64,
    pub degenerate: bool,
    pub checked: usize,
}

/// For each k-delay vector with a defined (k+1)-th reading, find its nearest
/// neighbor in R^k (self and temporal neighbors within one step excluded)
/// and call it false when |next_i - next_j| > r_tol * ||z_i - z_j||.
pub fn fnn_fraction(series: &TimeSeries, k: usize, r_tol: f64) -> Result<FnnFraction> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if !(r_tol > 0.0) {
        return Err(Error::InvalidInput("r_tol must be positive".into()));
    }
    let v = series.values();
    if v.len() < k + 2 {
        return Err(Error::InvalidInput(format!(
            "series length {} too short for k = {k}",
            v.len()
        )));
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo == 0.0 {
        return Ok(FnnFraction {
            fraction: 0.0,
            degenerate: true,
            checked: 0,
        });
    }
    let cloud = delay_vectors(series, DelayParams::new(k)?)?;
    // vectors with a defined next reading: indices 0 .. len(v) - k - 1
    let m = v.len() - k;
    let flat: Vec<f64> = (0..m).flat_map(|i| cloud.point(i).to_vec()).collect();
    let tree = KdTree::build(k, &flat);
    let false_flags: Vec<bool> = (0..m)
        .into_par_iter()
        .map(|i| {
            let query = &flat[i * k..(i + 1) * k];
            let found = tree.nearest(query, |j| j == i || j.abs_diff(i) <= 1);
            match found {
                None => false,
                Some((j, dist)) => {
                    let next_gap = (v[i + k] - v[j + k]).abs();
                    next_gap > r_tol * dist
                }
            }
        })
        .collect();
    let false_count = false_flags.iter().filter(|&&b| b).count();
    Ok(FnnFraction {
        fraction: false_count as f64 / m as f64,
        degenerate: false,
        checked: m,
    })
}

/// Per-k false-neighbor fractions and the chosen delay length.
#[derive(Clone, Debug)]
pub struct FnnProfile {
    pub per_k: Vec<(usize, f64)>,
    pub r_tol: f64,
    pub rate: f64,
    /// Smallest k with fraction below the rate; None with `not_reached` set
    /// when every candidate stays at or above it.
    pub chosen_k: Option<usize>,
    pub not_reached: bool,
    pub degenerate: bool,
}

/// Sweeps k = 1..k_max and picks the smallest k whose false-neighbor
/// fraction drops below `rate`.
pub fn embedding_dimension(
    series: &TimeSeries,
    k_max: usize,
    r_tol: f64,
    rate: f64,
) -> Result<FnnProfile> {
    if k_max == 0 {
        return Err(Error::InvalidInput("k_max must be >= 1".into()));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidInput("rate must lie in (0, 1)".into()));
    }
    let mut per_k = Vec::with_capacity(k_max);
    let mut chosen = None;
    let mut degenerate = false;
    for k in 1..=k_max {
        let f = fnn_fraction(series, k, r_tol)?;
        degenerate |= f.degenerate;
        per_k.push((k, f.fraction));
        if chosen.is_none() && f.fraction < rate {
            chosen = Some(k);
        }
    }
    Ok(FnnProfile {
        per_k,
        r_tol,
        rate,
        chosen_k: chosen,
        not_reached: chosen.is_none(),
        degenerate,
    })
}
