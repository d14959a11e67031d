//! Experiment harnesses: prediction-error scaling against the dimension
//! bound, the dyadic-atomic exceedance floor on the two-interval system,
//! the two-cluster deviation bound, and probe-family rank certificates.

use std::ops::RangeInclusive;

use crate::dimension::{box_counting_dim, geometric_grid};
use crate::embed::PointCloud;
use crate::linalg::{ls_slope, singular_values};
use crate::predict::{error_fraction, error_fraction_closed, phi_cloud};
use crate::rng::SplitMix64;
use crate::systems::{
    dyadic_atomic_measure, inverse_square_betas, perturb_observable, polynomial_probe_family,
    sample_alpha, EmpiricalMeasure, MapSystem, Observable, ProbeFamily,
};
use crate::{Error, Result};

/// Minimum exceedance-set size for a level to enter a slope fit.
pub const SLOPE_COUNT_FLOOR: usize = 20;

/// Exceedance fractions across scales with a slope fit against the
/// dimension-based decay bound.
#[derive(Clone, Debug)]
pub struct ScalingResult {
    /// (epsilon, measured fraction), epsilon descending.
    pub rows: Vec<(f64, f64)>,
    pub exceed_counts: Vec<usize>,
    /// Log-log slope over the usable nonzero prefix; None when fewer than
    /// two levels survive the statistical floor.
    pub fitted_slope: Option<f64>,
    /// Box-counting estimate of the sampled support.
    pub d_estimate: f64,
    /// k - D_estimate - theta.
    pub theory_floor: f64,
    pub verdict: bool,
    /// True when every fraction vanished (zero-error regime).
    pub degenerate: bool,
    /// True when k fails to exceed the estimated support dimension.
    pub dim_warning: bool,
    pub alpha: Vec<f64>,
}

/// Runs the exceedance-decay experiment: perturbs the observable with a
/// sampled probe combination, measures the exceedance fraction per scale,
/// and fits the decay slope. The verdict passes when the slope reaches
/// k - D - theta - 0.2 or when every fraction is zero.
#[allow(clippy::too_many_arguments)]
pub fn scaling_experiment(
    system: &MapSystem,
    base_observable: &Observable,
    measure: &EmpiricalMeasure,
    state_succ: &[u32],
    k: usize,
    delta: f64,
    theta: f64,
    eps_grid: &[f64],
    alpha_radius: f64,
    seed: u64,
) -> Result<ScalingResult> {
    if eps_grid.len() < 2 {
        return Err(Error::InsufficientScales);
    }
    let family = polynomial_probe_family(system.state_dim(), 2 * k);
    let alpha = sample_alpha(seed, family.len(), alpha_radius);
    let observable = perturb_observable(base_observable, &family, &alpha)?;
    let cloud = phi_cloud(system, &observable, k, measure, state_succ)?;

    // support dimension from the state-space atoms
    let flat: Vec<f64> = (0..measure.len())
        .flat_map(|i| measure.atom(i).to_vec())
        .collect();
    let state_cloud = PointCloud::new(measure.dim, flat)?;
    let d_grid = geometric_grid(0.25, 1.0 / 512.0, 9);
    let d_estimate = box_counting_dim(&state_cloud, &d_grid, None)?.slope;
    let dim_warning = (k as f64) <= d_estimate;

    let mut rows = Vec::with_capacity(eps_grid.len());
    let mut counts = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let rep = error_fraction(&cloud, delta, eps)?;
        rows.push((eps, rep.fraction));
        counts.push(rep.exceed_count);
    }
    let degenerate = rows.iter().all(|&(_, f)| f == 0.0);
    // usable prefix: nonzero fractions with enough atoms behind them
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &(eps, frac)) in rows.iter().enumerate() {
        if frac > 0.0 && counts[i] >= SLOPE_COUNT_FLOOR {
            xs.push(eps.ln());
            ys.push(frac.ln());
        } else if frac == 0.0 {
            break;
        }
    }
    let fitted_slope = ls_slope(&xs, &ys);
    let theory_floor = k as f64 - d_estimate - theta;
    let verdict = degenerate || fitted_slope.is_some_and(|s| s >= theory_floor - 0.2);
    Ok(ScalingResult {
        rows,
        exceed_counts: counts,
        fitted_slope,
        d_estimate,
        theory_floor,
        verdict,
        degenerate,
        dim_warning,
        alpha,
    })
}

/// Equal-mass lattice atoms on both interval copies, with the successor
/// permutation induced by the branch-1 reflection. The lattice is closed
/// under the map, so every atom's image is again an atom.
pub fn stratified_interval_pair_measure(per_branch: usize) -> (EmpiricalMeasure, Vec<u32>) {
    assert!(per_branch >= 1);
    let m = per_branch;
    let mut atoms = Vec::with_capacity(4 * m);
    for b in [0.0, 1.0] {
        for i in 0..m {
            atoms.push(b);
            atoms.push((i as f64 + 0.5) / m as f64);
        }
    }
    let masses = vec![0.5 / m as f64; 2 * m];
    let measure = EmpiricalMeasure::new(2, atoms, masses).expect("valid lattice");
    let succ: Vec<u32> = (0..2 * m)
        .map(|i| {
            if i < m {
                i as u32
            } else {
                (m + (m - 1 - (i - m))) as u32
            }
        })
        .collect();
    (measure, succ)
}

/// Successor indices for the dyadic atom set under the two-interval map:
/// branch-0 atoms are fixed, branch-1 atoms reflect to their mirror atom.
pub fn dyadic_state_succ(measure: &EmpiricalMeasure) -> Vec<u32> {
    let mut key_to_idx = std::collections::HashMap::new();
    for i in 0..measure.len() {
        let a = measure.atom(i);
        key_to_idx.insert((a[0].to_bits(), a[1].to_bits()), i as u32);
    }
    (0..measure.len())
        .map(|i| {
            let img = MapSystem::IntervalPair.step_vec(measure.atom(i));
            *key_to_idx
                .get(&(img[0].to_bits(), img[1].to_bits()))
                .expect("dyadic atom set is closed under the reflection")
        })
        .collect()
}

/// One dyadic level of the exceedance-floor experiment.
#[derive(Clone, Debug)]
pub struct CounterexampleRow {
    pub n: usize,
    pub epsilon: f64,
    pub measured_fraction: f64,
    pub floor: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct CounterexampleResult {
    pub rows: Vec<CounterexampleRow>,
    pub delta_used: f64,
    /// Smallest observed gap between the two image clusters.
    pub gamma: f64,
    /// Smallest observed minority-cluster mass fraction.
    pub min_cluster_ratio: f64,
    /// (level, candidate count) for the interval families used.
    pub y_counts: Vec<(usize, usize)>,
    pub all_pass: bool,
}

const TARGET_INTERVAL: (f64, f64) = (0.125, 0.25);
const AVOID_LEVEL_OFFSET: usize = 8;

/// Odd numerators q at level n whose centered interval of half-width
/// 2^-(n+1) sits inside the target window and avoids the coarse dyadic
/// grid at level n - 8, both directly and through the branch-1 chart of
/// the observable.
pub fn good_level_set(observable: &Observable, n: usize) -> Result<Vec<u64>> {
    let (lo, hi) = TARGET_INTERVAL;
    let half = 0.5f64.powi(n as i32 + 1);
    let mut out = Vec::new();
    let mut q = 1u64;
    while q < (1u64 << n) {
        let center = q as f64 * 0.5f64.powi(n as i32);
        q += 2;
        let (a, b) = (center - half, center + half);
        if a <= lo || b >= hi {
            continue;
        }
        if hits_coarse_grid(a, b, n) {
            continue;
        }
        // the same window read through the branch-1 chart
        let (ua, ub) = branch1_pullback(observable, a, b)?;
        if hits_coarse_grid(ua, ub, n) {
            continue;
        }
        out.push(q - 2);
    }
    Ok(out)
}

fn hits_coarse_grid(a: f64, b: f64, n: usize) -> bool {
    // points l / 2^(n-8); for n <= 8 only 0 qualifies inside [0,1]
    if n <= AVOID_LEVEL_OFFSET {
        return a <= 0.0 && b >= 0.0;
    }
    let spacing = 0.5f64.powi((n - AVOID_LEVEL_OFFSET) as i32);
    let first = (a / spacing).ceil();
    first * spacing < b
}

/// Interval of branch-1 parameters t with h(1, t) inside the image
/// h({0} x (a, b)). Requires h strictly monotone on both branches.
fn branch1_pullback(observable: &Observable, a: f64, b: f64) -> Result<(f64, f64)> {
    let h0 = |y: f64| observable.eval(&[0.0, y]);
    let h1 = |y: f64| observable.eval(&[1.0, y]);
    let (va, vb) = (h0(a), h0(b));
    let (lo, hi) = if va <= vb { (va, vb) } else { (vb, va) };
    let ta = invert_monotone(&h1, lo)?;
    let tb = invert_monotone(&h1, hi)?;
    Ok(if ta <= tb { (ta, tb) } else { (tb, ta) })
}

fn invert_monotone(g: &impl Fn(f64) -> f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (glo, ghi) = (g(lo), g(hi));
    let increasing = ghi >= glo;
    let (mut flo, mut fhi) = if increasing { (glo, ghi) } else { (ghi, glo) };
    if !increasing {
        std::mem::swap(&mut lo, &mut hi);
    }
    if target < flo.min(fhi) - 1e-9 || target > flo.max(fhi) + 1e-9 {
        return Err(Error::Precondition(
            "target outside the branch-1 observable range".into(),
        ));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
            flo = g(mid);
        } else {
            hi = mid;
            fhi = g(mid);
        }
    }
    let _ = (flo, fhi);
    Ok(0.5 * (lo + hi))
}

/// Runs the dyadic exceedance-floor experiment at delay length one: builds
/// the truncated dyadic atomic measure, derives delta from the realized
/// two-cluster geometry (or takes it as given), and checks that the mass
/// with sigma at scale 2^-(n+1) at least delta stays above 2^-7 beta_n for
/// every level in the range.
pub fn counterexample_experiment(
    n_range: RangeInclusive<usize>,
    n_max_truncation: usize,
    observable: &Observable,
    delta_override: Option<f64>,
) -> Result<CounterexampleResult> {
    let n_lo = *n_range.start();
    let n_hi = *n_range.end();
    if n_lo < 1 || n_hi < n_lo {
        return Err(Error::InvalidInput("bad level range".into()));
    }
    if n_max_truncation < n_hi + 3 {
        return Err(Error::Precondition(format!(
            "truncation level {n_max_truncation} too shallow for levels up to {n_hi}"
        )));
    }
    let betas = inverse_square_betas(n_max_truncation);
    let dyadic = dyadic_atomic_measure(&betas)?;
    let measure = &dyadic.measure;
    let succ = dyadic_state_succ(measure);
    let cloud = phi_cloud(&MapSystem::IntervalPair, observable, 1, measure, &succ)?;

    // realized two-cluster geometry over the designated windows
    let mut gamma = f64::INFINITY;
    let mut min_ratio: f64 = 0.5;
    let mut y_counts = Vec::new();
    for n in n_lo..=n_hi {
        let good = good_level_set(observable, n)?;
        y_counts.push((n, good.len()));
        let eps = 0.5f64.powi(n as i32 + 1);
        for &q in &good {
            let center_state = q as f64 * 0.5f64.powi(n as i32);
            let y0 = observable.eval(&[0.0, center_state]);
            let (g, r) = two_cluster_stats(&cloud, measure, y0, eps)?;
            gamma = gamma.min(g);
            min_ratio = min_ratio.min(r);
        }
    }
    if !gamma.is_finite() {
        return Err(Error::Precondition(
            "no usable windows in the requested level range".into(),
        ));
    }
    let delta = match delta_override {
        Some(d) => d,
        None => min_ratio * gamma, // min{p gamma, (1-p) gamma} with p <= 1/2
    };

    let mut rows = Vec::with_capacity(n_hi - n_lo + 1);
    for n in n_lo..=n_hi {
        let eps = 0.5f64.powi(n as i32 + 1);
        let rep = error_fraction_closed(&cloud, delta, eps)?;
        let floor = 0.5f64.powi(7) * betas[n - 1];
        rows.push(CounterexampleRow {
            n,
            epsilon: eps,
            measured_fraction: rep.fraction,
            floor,
            pass: rep.fraction >= floor,
        });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(CounterexampleResult {
        rows,
        delta_used: delta,
        gamma,
        min_cluster_ratio: min_ratio,
        y_counts,
        all_pass,
    })
}

/// Gap and minority mass fraction of the two image clusters (by branch)
/// inside the ball B(y0, eps) of the 1-delay cloud.
fn two_cluster_stats(
    cloud: &PointCloud,
    measure: &EmpiricalMeasure,
    y0: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    let hits = crate::embed::radius_query(cloud, &[y0], eps)?;
    let mut w = [0.0f64; 2];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in &hits {
        let branch = if measure.atom(i)[0] < 0.5 { 0 } else { 1 };
        let img = cloud.point(cloud.successor(i).unwrap())[0];
        w[branch] += cloud.weight(i);
        lo[branch] = lo[branch].min(img);
        hi[branch] = hi[branch].max(img);
    }
    if !(w[0] > 0.0 && w[1] > 0.0) {
        return Err(Error::Precondition(
            "window does not see both branches".into(),
        ));
    }
    let gap = if lo[1] > hi[0] {
        lo[1] - hi[0]
    } else {
        lo[0] - hi[1]
    };
    if !(gap > 0.0) {
        return Err(Error::Precondition("image clusters overlap".into()));
    }
    let total = w[0] + w[1];
    Ok((gap, w[0].min(w[1]) / total))
}

/// Two-cluster deviation check: measured standard deviation against the
/// min{p gamma, (1-p) gamma} floor.
#[derive(Clone, Debug)]
pub struct DeviationCheck {
    pub std: f64,
    pub floor: f64,
    pub pass: bool,
    /// Hull-separation certificate along the cluster-mean direction.
    pub certified_gap: f64,
    pub mass_first: f64,
}

/// Verifies the cluster hypotheses (separation at least gamma, certified
/// along the direction between cluster means, and first-cluster mass inside
/// (p, 1-p)), then checks std >= min{p gamma, (1-p) gamma} - 1e-12.
pub fn deviation_bound_check(
    measure: &EmpiricalMeasure,
    in_first: &[bool],
    gamma: f64,
    p: f64,
) -> Result<DeviationCheck> {
    if in_first.len() != measure.len() {
        return Err(Error::InvalidInput("cluster mask length mismatch".into()));
    }
    if !(gamma > 0.0) || !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidInput("need gamma > 0 and p in (0, 1/2)".into()));
    }
    let dim = measure.dim;
    let mut mass = [0.0f64; 2];
    let mut mean = vec![vec![0.0f64; dim]; 2];
    for i in 0..measure.len() {
        let c = usize::from(!in_first[i]);
        mass[c] += measure.mass(i);
        for (m, v) in mean[c].iter_mut().zip(measure.atom(i)) {
            *m += measure.mass(i) * v;
        }
    }
    if mass[0] <= p || mass[0] >= 1.0 - p {
        return Err(Error::Precondition(format!(
            "first-cluster mass {} outside ({p}, {})",
            mass[0],
            1.0 - p
        )));
    }
    for c in 0..2 {
        for m in mean[c].iter_mut() {
            *m /= mass[c];
        }
    }
    // separating-direction certificate: a lower bound on the hull distance
    let dir: Vec<f64> = mean[1].iter().zip(&mean[0]).map(|(a, b)| a - b).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Precondition("cluster means coincide".into()));
    }
    let mut max_first = f64::NEG_INFINITY;
    let mut min_second = f64::INFINITY;
    for i in 0..measure.len() {
        let proj = measure
            .atom(i)
            .iter()
            .zip(&dir)
            .map(|(x, d)| x * d)
            .sum::<f64>()
            / norm;
        if in_first[i] {
            max_first = max_first.max(proj);
        } else {
            min_second = min_second.min(proj);
        }
    }
    let certified_gap = min_second - max_first;
    if certified_gap < gamma {
        return Err(Error::Precondition(format!(
            "certified cluster separation {certified_gap} below gamma {gamma}"
        )));
    }
    // standard deviation about the barycenter
    let mut center = vec![0.0f64; dim];
    for i in 0..measure.len() {
        for (c, v) in center.iter_mut().zip(measure.atom(i)) {
            *c += measure.mass(i) * v;
        }
    }
    let mut second = 0.0;
    for i in 0..measure.len() {
        let d = crate::linalg::euclidean_dist(measure.atom(i), &center);
        second += measure.mass(i) * d * d;
    }
    let std = second.sqrt();
    let floor = (p * gamma).min((1.0 - p) * gamma);
    Ok(DeviationCheck {
        std,
        floor,
        pass: std >= floor - 1e-12,
        certified_gap,
        mass_first: mass[0],
    })
}

/// Result of the maximal-rank certificate over random point subsets.
#[derive(Clone, Debug)]
pub struct CertificateResult {
    pub pass: bool,
    pub draws: usize,
    /// Worst observed sigma_min / sigma_max over the draws.
    pub worst_conditioning: f64,
}

/// Draws 200 random q-subsets of the sample and requires every q x m
/// evaluation matrix of the family to have smallest singular value above
/// 1e-9 times the largest. Subsets with duplicate points are redrawn.
pub fn interpolation_certificate(
    family: &ProbeFamily,
    sample: &[Vec<f64>],
    q: usize,
    seed: u64,
) -> Result<CertificateResult> {
    if sample.len() < q || q == 0 {
        return Err(Error::InvalidInput("sample smaller than subset size".into()));
    }
    let draws = 200;
    let mut rng = SplitMix64::new(seed);
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for _ in 0..draws {
        let subset = loop {
            let mut idx = Vec::with_capacity(q);
            while idx.len() < q {
                let i = rng.below(sample.len());
                if !idx.contains(&i) {
                    idx.push(i);
                }
            }
            let mut points: Vec<&[f64]> = idx.iter().map(|&i| sample[i].as_slice()).collect();
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if points.windows(2).all(|w| w[0] != w[1]) {
                break idx;
            }
            // duplicate coordinates: redraw
        };
        let points: Vec<&[f64]> = subset.iter().map(|&i| sample[i].as_slice()).collect();
        let m = family.evaluation_matrix(&points);
        let sv = singular_values(&m);
        let ratio = if sv[0] > 0.0 { sv[q - 1] / sv[0] } else { 0.0 };
        worst = worst.min(ratio);
        if !(ratio > 1e-9) {
            pass = false;
        }
    }
    Ok(CertificateResult {
        pass,
        draws,
        worst_conditioning: worst,
    })
}

/// Convenience wrapper for rank checks of arbitrary evaluation matrices.
pub fn evaluation_matrix_rank(family: &ProbeFamily, points: &[&[f64]]) -> usize {
    let m = family.evaluation_matrix(points);
    crate::linalg::rank(&m, crate::linalg::RANK_REL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::Poly;

    fn h0() -> Observable {
        Observable::Coordinate(1)
    }

    #[test]
    fn stratified_measure_is_closed_under_map() {
        let (m, succ) = stratified_interval_pair_measure(64);
        let sys = MapSystem::IntervalPair;
        for i in 0..m.len() {
            let img = sys.step_vec(m.atom(i));
            assert_eq!(m.atom(succ[i] as usize), img.as_slice());
        }
    }

    #[test]
    fn good_level_sets_are_large_enough() {
        // Direct enumeration: the candidate families keep at least 2^(n-7)
        // members for levels 7..=12 under the plain height observable.
        for n in 7..=12usize {
            let good = good_level_set(&h0(), n).unwrap();
            let floor = 1usize << (n - 7);
            assert!(
                good.len() >= floor,
                "level {n}: {} < {floor}",
                good.len()
            );
        }
    }

    #[test]
    fn counterexample_floor_holds_smoke() {
        // Small version of the full run: levels 7..=9, truncation 12.
        let res = counterexample_experiment(7..=9, 12, &h0(), None).unwrap();
        assert!(res.all_pass, "rows {:?}", res.rows);
        assert!(res.gamma >= 0.5, "gamma {}", res.gamma);
        assert!(res.delta_used > 0.2, "delta {}", res.delta_used);
        assert!((res.min_cluster_ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn counterexample_requires_deep_truncation() {
        assert!(matches!(
            counterexample_experiment(7..=9, 10, &h0(), None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn branch_constant_observable_kills_the_effect() {
        // h(x, y) = x is constant along each branch image, so sigma vanishes
        // everywhere and no atom exceeds any positive delta.
        let betas = inverse_square_betas(10);
        let dyadic = dyadic_atomic_measure(&betas).unwrap();
        let succ = dyadic_state_succ(&dyadic.measure);
        let cloud = phi_cloud(
            &MapSystem::IntervalPair,
            &Observable::Coordinate(0),
            1,
            &dyadic.measure,
            &succ,
        )
        .unwrap();
        let rep = error_fraction_closed(&cloud, 1e-6, 0.01).unwrap();
        assert_eq!(rep.fraction, 0.0);
    }

    #[test]
    fn deviation_two_point_quarter_mass() {
        // mass 1/4 at 0, 3/4 at 1: std = sqrt(3)/4, floor = 0.2 * 1.
        let m = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let check = deviation_bound_check(&m, &[true, false], 1.0, 0.2).unwrap();
        assert!((check.std - 3.0f64.sqrt() / 4.0).abs() < 1e-12);
        assert!(check.pass);
        assert!((check.certified_gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_symmetric_two_point() {
        let m = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let check = deviation_bound_check(&m, &[true, false], 1.0, 0.49).unwrap();
        assert!((check.std - 0.5).abs() < 1e-12);
        assert!(check.pass); // floor 0.49
    }

    #[test]
    fn deviation_internal_spread_only_helps() {
        // Multi-atom clusters with internal spread: the deviation grows
        // while the floor stays put (variance decomposition).
        let m_tight = EmpiricalMeasure::new(
            1,
            vec![0.0, 2.0],
            vec![0.3, 0.7],
        )
        .unwrap();
        let m_spread = EmpiricalMeasure::new(
            1,
            vec![-0.2, 0.2, 1.8, 2.2],
            vec![0.15, 0.15, 0.35, 0.35],
        )
        .unwrap();
        let tight = deviation_bound_check(&m_tight, &[true, false], 1.5, 0.25).unwrap();
        let spread =
            deviation_bound_check(&m_spread, &[true, true, false, false], 1.5, 0.25).unwrap();
        assert!(spread.std > tight.std);
        assert_eq!(tight.floor, spread.floor);
        assert!(spread.pass && tight.pass);
    }

    #[test]
    fn deviation_rejects_bad_hypotheses() {
        let m = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        // mass outside (p, 1-p)
        assert!(matches!(
            deviation_bound_check(&m, &[true, false], 1.0, 0.3),
            Err(Error::Precondition(_))
        ));
        // separation below gamma
        assert!(matches!(
            deviation_bound_check(&m, &[true, false], 1.5, 0.2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn deviation_bound_randomized_never_fails() {
        // The bound is a theorem: any generated input meeting the
        // hypotheses must pass.
        let mut rng = SplitMix64::new(404);
        for trial in 0..300 {
            let dim = 1 + rng.below(3);
            let gamma = rng.uniform(0.1, 2.0);
            let p = rng.uniform(0.02, 0.45);
            // clusters separated along a random axis direction
            let axis = rng.below(dim);
            let n_a = 1 + rng.below(5);
            let n_b = 1 + rng.below(5);
            let spread = rng.uniform(0.0, 0.5) * gamma;
            let mut atoms = Vec::new();
            for i in 0..n_a + n_b {
                let first = i < n_a;
                for d in 0..dim {
                    let base = if d == axis {
                        if first { 0.0 } else { gamma * (1.0 + spread) + spread }
                    } else {
                        rng.uniform(-1.0, 1.0)
                    };
                    let jitter = if d == axis {
                        rng.uniform(0.0, spread * gamma * 0.45)
                            * if first { -1.0 } else { 1.0 }
                    } else {
                        0.0
                    };
                    atoms.push(base + jitter);
                }
            }
            let mass_a = rng.uniform(p + 0.01, 1.0 - p - 0.01);
            let mut masses = Vec::new();
            for i in 0..n_a + n_b {
                let (m, n) = if i < n_a { (mass_a, n_a) } else { (1.0 - mass_a, n_b) };
                masses.push(m / n as f64);
            }
            let measure = EmpiricalMeasure::new(dim, atoms, masses).unwrap();
            let mask: Vec<bool> = (0..n_a + n_b).map(|i| i < n_a).collect();
            match deviation_bound_check(&measure, &mask, gamma, p) {
                Ok(check) => assert!(check.pass, "trial {trial}: {check:?}"),
                Err(Error::Precondition(_)) => {} // generator overshot; fine
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn certificate_vandermonde_passes() {
        let family = polynomial_probe_family(1, 4);
        let sample: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1 - 1.5]).collect();
        let res = interpolation_certificate(&family, &sample, 4, 7).unwrap();
        assert!(res.pass, "worst {}", res.worst_conditioning);
    }

    #[test]
    fn certificate_dependent_family_fails() {
        // {1, t, 2t + 3} spans a 2-dimensional space; rank 3 is impossible.
        let members: Vec<Poly> = vec![
            vec![(1.0, vec![0])],
            vec![(1.0, vec![1])],
            vec![(2.0, vec![1]), (3.0, vec![0])],
        ];
        let family = ProbeFamily {
            members,
            degree_bound: 1,
            interpolation_order: 3,
        };
        let sample: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.37]).collect();
        let res = interpolation_certificate(&family, &sample, 3, 8).unwrap();
        assert!(!res.pass);
    }

    #[test]
    fn certificate_two_var_monomials_with_rational_rank_oracle() {
        // Independent oracle: exact integer rank after clearing the 8^deg
        // denominators of rational sample points.
        let k = 2usize;
        let family = polynomial_probe_family(2, 2 * k);
        let mut rng = SplitMix64::new(9);
        let sample: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                vec![
                    rng.below(17) as f64 / 8.0 - 1.0,
                    rng.below(17) as f64 / 8.0 - 1.0,
                ]
            })
            .collect();
        // dedup exact duplicates for the oracle draws
        let mut uniq: Vec<Vec<f64>> = Vec::new();
        for p in sample {
            if !uniq.contains(&p) {
                uniq.push(p);
            }
        }
        let q = 2 * k;
        let res = interpolation_certificate(&family, &uniq, q, 10).unwrap();
        assert!(res.pass, "worst {}", res.worst_conditioning);
        // oracle on a handful of fixed subsets
        let max_deg = family.degree_bound;
        for start in 0..5usize {
            let pts: Vec<&[f64]> = (0..q).map(|i| uniq[start * 3 + i].as_slice()).collect();
            let mut int_entries: Vec<i64> = Vec::new();
            for p in &pts {
                for member in &family.members {
                    let (_, exps) = &member[0];
                    // member is a monomial x^a y^b with denominator 8^(a+b);
                    // scale the whole row by 8^max_deg to clear it
                    let a = exps[0];
                    let b = exps[1];
                    let num = (p[0] * 8.0).round() as i64;
                    let den = (p[1] * 8.0).round() as i64;
                    let val = num.pow(a) * den.pow(b) * 8i64.pow(max_deg - a - b);
                    int_entries.push(val);
                }
            }
            let oracle_rank = crate::linalg::integer_rank(q, family.len(), &int_entries);
            assert_eq!(oracle_rank, q, "subset at {start}");
            let float_rank = evaluation_matrix_rank(&family, &pts);
            assert_eq!(float_rank, q);
        }
    }

    #[test]
    fn exceedance_invariant_under_common_rescaling() {
        // Scaling every cloud coordinate together with delta and the
        // eps-grid by one factor leaves all fractions (hence the verdict)
        // unchanged.
        let (measure, succ) = stratified_interval_pair_measure(2000);
        let grid = geometric_grid(0.1, 1e-3, 7);
        let family = polynomial_probe_family(2, 4);
        let alpha = sample_alpha(41, family.len(), 0.05);
        let obs = perturb_observable(&h0(), &family, &alpha).unwrap();
        let cloud = phi_cloud(&MapSystem::IntervalPair, &obs, 2, &measure, &succ).unwrap();
        let c = 3.0;
        let n = cloud.len();
        let flat: Vec<f64> = (0..n)
            .flat_map(|i| cloud.point(i).iter().map(|v| v * c).collect::<Vec<_>>())
            .collect();
        let w: Vec<f64> = (0..n).map(|i| cloud.weight(i)).collect();
        let sc: Vec<u32> = (0..n)
            .map(|i| cloud.successor(i).map_or(crate::embed::NO_SUCCESSOR, |s| s as u32))
            .collect();
        let scaled_cloud = PointCloud::with_links(2, flat, Some(w), sc).unwrap();
        for (i, &eps) in grid.iter().enumerate() {
            let orig = error_fraction(&cloud, 0.1, eps).unwrap();
            let s = error_fraction(&scaled_cloud, 0.1 * c, eps * c).unwrap();
            assert!(
                (orig.fraction - s.fraction).abs() < 1e-12,
                "level {i}: {} vs {}",
                orig.fraction,
                s.fraction
            );
        }
    }

    #[test]
    fn scaling_low_delta_sees_exceedances_high_delta_none() {
        // delta above the attractor diameter: nothing exceeds.
        let (measure, succ) = stratified_interval_pair_measure(1500);
        let grid = geometric_grid(0.1, 0.01, 4);
        let res = scaling_experiment(
            &MapSystem::IntervalPair,
            &h0(),
            &measure,
            &succ,
            1,
            5.0,
            0.1,
            &grid,
            0.0,
            7,
        )
        .unwrap();
        assert!(res.degenerate);
        assert!(res.verdict);
        // k = 1 with tiny delta: the two branches collide and a constant
        // fraction exceeds at every scale.
        let res = scaling_experiment(
            &MapSystem::IntervalPair,
            &h0(),
            &measure,
            &succ,
            1,
            0.05,
            0.1,
            &grid,
            0.0,
            7,
        )
        .unwrap();
        assert!(!res.degenerate);
        for &(_, f) in &res.rows {
            assert!(f > 0.3, "constant-order exceedance expected, got {f}");
        }
    }
}
