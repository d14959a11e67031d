//! Built-in dynamical systems, observables, polynomial probe families, and
//! empirical measures (Birkhoff orbit averages and the dyadic atomic
//! measure on two interval copies).

use crate::rng::SplitMix64;
use crate::{Error, Result};

const DIVERGENCE_BOUND: f64 = 1e12;

/// Discrete-time map on a subset of R^N, evaluated in closed form.
#[derive(Clone, Debug, PartialEq)]
pub enum MapSystem {
    /// x -> r x (1 - x) on [0, 1].
    Logistic { r: f64 },
    /// x -> s min(x, 1 - x) on [0, 1].
    Tent { s: f64 },
    /// (x, y) -> (1 - a x^2 + y, b x).
    Henon { a: f64, b: f64 },
    /// Rotation by `theta` on the unit circle, embedded in R^2.
    CircleRotation { theta: f64 },
    /// Two interval copies {0,1} x [0,1]: identity on the x=0 copy,
    /// (1, y) -> (1, 1-y) on the x=1 copy.
    IntervalPair,
    /// Identity on R^dim.
    Identity { dim: usize },
}

impl MapSystem {
    pub fn state_dim(&self) -> usize {
        match self {
            MapSystem::Logistic { .. } | MapSystem::Tent { .. } => 1,
            MapSystem::Henon { .. } | MapSystem::CircleRotation { .. } | MapSystem::IntervalPair => 2,
            MapSystem::Identity { dim } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapSystem::Logistic { .. } => "logistic",
            MapSystem::Tent { .. } => "tent",
            MapSystem::Henon { .. } => "henon",
            MapSystem::CircleRotation { .. } => "circle_rotation",
            MapSystem::IntervalPair => "interval_pair",
            MapSystem::Identity { .. } => "identity",
        }
    }

    pub fn domain_descriptor(&self) -> &'static str {
        match self {
            MapSystem::Logistic { .. } | MapSystem::Tent { .. } => "[0,1]",
            MapSystem::Henon { .. } => "Henon trapping region in R^2",
            MapSystem::CircleRotation { .. } => "unit circle in R^2",
            MapSystem::IntervalPair => "{0,1} x [0,1]",
            MapSystem::Identity { .. } => "R^N",
        }
    }

    pub fn step(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim());
        debug_assert_eq!(out.len(), self.state_dim());
        match self {
            MapSystem::Logistic { r } => out[0] = r * x[0] * (1.0 - x[0]),
            MapSystem::Tent { s } => out[0] = s * x[0].min(1.0 - x[0]),
            MapSystem::Henon { a, b } => {
                let (u, v) = (x[0], x[1]);
                out[0] = 1.0 - a * u * u + v;
                out[1] = b * u;
            }
            MapSystem::CircleRotation { theta } => {
                let (c, s) = (theta.cos(), theta.sin());
                let (u, v) = (x[0], x[1]);
                out[0] = c * u - s * v;
                out[1] = s * u + c * v;
            }
            MapSystem::IntervalPair => {
                out[0] = x[0];
                out[1] = if x[0] < 0.5 { x[1] } else { 1.0 - x[1] };
            }
            MapSystem::Identity { .. } => out.copy_from_slice(x),
        }
    }

    pub fn step_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        self.step(x, &mut out);
        out
    }
}

/// Configures a catalog system by name. Parameters: logistic(r), tent(s),
/// henon(a, b), circle_rotation(theta); interval_pair takes none.
pub fn builtin_system(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<MapSystem> {
    let need = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::Config(format!("system '{name}' missing parameter '{key}'")))
    };
    match name {
        "logistic" => Ok(MapSystem::Logistic { r: need("r")? }),
        "tent" => Ok(MapSystem::Tent { s: need("s")? }),
        "henon" => Ok(MapSystem::Henon {
            a: need("a")?,
            b: need("b")?,
        }),
        "circle_rotation" => Ok(MapSystem::CircleRotation { theta: need("theta")? }),
        "interval_pair" => Ok(MapSystem::IntervalPair),
        "identity" => Ok(MapSystem::Identity {
            dim: need("dim")? as usize,
        }),
        other => Err(Error::Config(format!("unknown system '{other}'"))),
    }
}

/// Flat orbit storage: `n` consecutive states of dimension `dim`.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub dim: usize,
    data: Vec<f64>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Returns T^burn_in x0, ..., T^{burn_in+n-1} x0.
pub fn iterate(system: &MapSystem, x0: &[f64], n: usize, burn_in: usize) -> Result<Orbit> {
    if n == 0 {
        return Err(Error::InvalidInput("orbit length must be >= 1".into()));
    }
    let dim = system.state_dim();
    if x0.len() != dim {
        return Err(Error::InvalidInput(format!(
            "initial state has dimension {}, system expects {dim}",
            x0.len()
        )));
    }
    let mut cur = x0.to_vec();
    let mut next = vec![0.0; dim];
    let check = |state: &[f64], step: usize| -> Result<()> {
        if state.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Divergence { step });
        }
        Ok(())
    };
    check(&cur, 0)?;
    for i in 0..burn_in {
        system.step(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        check(&cur, i + 1)?;
    }
    let mut data = Vec::with_capacity(n * dim);
    data.extend_from_slice(&cur);
    for i in 1..n {
        system.step(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        check(&cur, burn_in + i)?;
        data.extend_from_slice(&cur);
    }
    Ok(Orbit { dim, data })
}

/// Polynomial with real coefficients over N variables; a term is
/// (coefficient, exponent per variable).
pub type Poly = Vec<(f64, Vec<u32>)>;

fn eval_poly(p: &Poly, x: &[f64]) -> f64 {
    p.iter()
        .map(|(c, exps)| {
            c * exps
                .iter()
                .zip(x)
                .map(|(&e, &xi)| xi.powi(e as i32))
                .product::<f64>()
        })
        .sum()
}

/// Finite family of polynomial probe functions h_1..h_m, able to hit
/// arbitrary values on up to `interpolation_order` distinct points.
#[derive(Clone, Debug)]
pub struct ProbeFamily {
    pub members: Vec<Poly>,
    pub degree_bound: u32,
    pub interpolation_order: usize,
}

impl ProbeFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn eval_member(&self, j: usize, x: &[f64]) -> f64 {
        eval_poly(&self.members[j], x)
    }

    /// q x m evaluation matrix at the given points.
    pub fn evaluation_matrix(&self, points: &[&[f64]]) -> crate::linalg::Matrix {
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| (0..self.len()).map(|j| self.eval_member(j, p)).collect())
            .collect();
        crate::linalg::Matrix::from_rows(&rows)
    }
}

/// All monomials in N variables of total degree <= q-1, in graded
/// lexicographic order. This is a q-interpolating family on R^N.
pub fn polynomial_probe_family(n_vars: usize, order: usize) -> ProbeFamily {
    assert!(n_vars >= 1 && order >= 1);
    let max_deg = (order - 1) as u32;
    let mut members = Vec::new();
    let mut exps = vec![0u32; n_vars];
    for total in 0..=max_deg {
        emit_monomials(n_vars, total, 0, &mut exps, &mut members);
    }
    ProbeFamily {
        members,
        degree_bound: max_deg,
        interpolation_order: order,
    }
}

fn emit_monomials(n_vars: usize, remaining: u32, var: usize, exps: &mut Vec<u32>, out: &mut Vec<Poly>) {
    if var == n_vars - 1 {
        exps[var] = remaining;
        out.push(vec![(1.0, exps.clone())]);
        exps[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        exps[var] = e;
        emit_monomials(n_vars, remaining - e, var + 1, exps, out);
    }
    exps[var] = 0;
}

/// Real-valued observable on state space.
#[derive(Clone, Debug)]
pub enum Observable {
    Coordinate(usize),
    Constant(f64),
    Polynomial(Poly),
    /// base + sum_j alpha_j h_j over the family members.
    Perturbed {
        base: Box<Observable>,
        family: ProbeFamily,
        alpha: Vec<f64>,
    },
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::Coordinate(i) => x[*i],
            Observable::Constant(c) => *c,
            Observable::Polynomial(p) => eval_poly(p, x),
            Observable::Perturbed { base, family, alpha } => {
                let mut v = base.eval(x);
                for (j, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        v += a * family.eval_member(j, x);
                    }
                }
                v
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::Coordinate(i) => format!("coord{i}"),
            Observable::Constant(c) => format!("const({c})"),
            Observable::Polynomial(_) => "poly".into(),
            Observable::Perturbed { base, .. } => format!("{}+alpha", base.name()),
        }
    }
}

/// h_alpha = h + sum_j alpha_j h_j.
pub fn perturb_observable(h: &Observable, family: &ProbeFamily, alpha: &[f64]) -> Result<Observable> {
    if alpha.len() != family.len() {
        return Err(Error::InvalidInput(format!(
            "alpha length {} does not match family size {}",
            alpha.len(),
            family.len()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidInput("alpha entries must be finite".into()));
    }
    Ok(Observable::Perturbed {
        base: Box::new(h.clone()),
        family: family.clone(),
        alpha: alpha.to_vec(),
    })
}

/// Uniform draw from the closed ball of the given radius in R^m.
/// Deterministic for a fixed seed: direction from m gaussians, radius from
/// U^(1/m) scaling.
pub fn sample_alpha(seed: u64, m: usize, radius: f64) -> Vec<f64> {
    assert!(m >= 1);
    let mut rng = SplitMix64::new(seed);
    if radius == 0.0 {
        return vec![0.0; m];
    }
    loop {
        let g: Vec<f64> = (0..m).map(|_| rng.gaussian()).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            continue;
        }
        let r = radius * rng.next_f64().powf(1.0 / m as f64);
        return g.iter().map(|v| v * r / norm).collect();
    }
}

/// Weighted finite point set representing a probability measure.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    atoms: Vec<f64>, // n * dim
    masses: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || atoms.len() % dim != 0 {
            return Err(Error::InvalidInput("bad atom buffer".into()));
        }
        let n = atoms.len() / dim;
        if masses.len() != n {
            return Err(Error::InvalidInput("masses length mismatch".into()));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("atoms must be finite".into()));
        }
        if masses.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput("masses must be positive".into()));
        }
        let total = crate::linalg::kahan_sum(masses.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "masses must sum to 1 (got {total})"
            )));
        }
        Ok(EmpiricalMeasure { dim, atoms, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Birkhoff empirical measure: orbit points after burn-in with uniform mass
/// 1/n. With `dedup`, exactly-equal atoms are merged and their masses summed.
pub fn natural_measure(
    system: &MapSystem,
    x0: &[f64],
    n: usize,
    burn_in: usize,
    dedup: bool,
) -> Result<EmpiricalMeasure> {
    let orbit = iterate(system, x0, n, burn_in)?;
    let dim = orbit.dim;
    let w = 1.0 / n as f64;
    if !dedup {
        let atoms: Vec<f64> = (0..n).flat_map(|i| orbit.point(i).to_vec()).collect();
        return EmpiricalMeasure::new(dim, atoms, vec![w; n]);
    }
    let mut seen: std::collections::BTreeMap<Vec<u64>, usize> = std::collections::BTreeMap::new();
    let mut atoms = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for i in 0..n {
        let p = orbit.point(i);
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        match seen.get(&key) {
            Some(&idx) => masses[idx] += w,
            None => {
                seen.insert(key, masses.len());
                atoms.extend_from_slice(p);
                masses.push(w);
            }
        }
    }
    EmpiricalMeasure::new(dim, atoms, masses)
}

/// beta_n = (6/pi^2) n^{-2}, the default level weights for the dyadic
/// atomic measure; they sum to 1 over all n >= 1.
pub fn inverse_square_betas(n_max: usize) -> Vec<f64> {
    let c = 6.0 / (std::f64::consts::PI * std::f64::consts::PI);
    (1..=n_max).map(|n| c / (n * n) as f64).collect()
}

/// Result of building a truncated dyadic atomic measure.
pub struct DyadicMeasure {
    pub measure: EmpiricalMeasure,
    /// Mass of the untruncated series that the truncation kept.
    pub raw_total: f64,
    /// 1 / raw_total; multiplies raw masses to renormalize.
    pub renormalization: f64,
    /// Level of each atom, parallel to the measure's atom order.
    pub levels: Vec<usize>,
}

/// Purely atomic measure on {0,1} x (0,1): atom (b, q/2^n) for b in {0,1},
/// levels n = 1..n_max and odd q, with raw mass (1/2) beta_n / 2^{n-1};
/// masses are renormalized to total 1 after truncation.
///
/// Atom order: level-major, then branch b, then increasing q. The branch-1
/// reflection (1, y) -> (1, 1-y) maps this atom set onto itself.
pub fn dyadic_atomic_measure(betas: &[f64]) -> Result<DyadicMeasure> {
    if betas.is_empty() {
        return Err(Error::InvalidInput("need at least one beta level".into()));
    }
    if betas.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidInput("beta weights must be positive".into()));
    }
    let n_max = betas.len();
    if n_max > 24 {
        return Err(Error::InvalidInput("truncation level too deep".into()));
    }
    let mut atoms = Vec::new();
    let mut raw = Vec::new();
    let mut levels = Vec::new();
    for (idx, &beta) in betas.iter().enumerate() {
        let n = idx + 1;
        let scale = 0.5f64.powi(n as i32);
        let per_atom = 0.5 * beta / 2f64.powi(n as i32 - 1);
        for b in [0.0, 1.0] {
            let mut q = 1usize;
            while q < (1usize << n) {
                atoms.push(b);
                atoms.push(q as f64 * scale);
                raw.push(per_atom);
                levels.push(n);
                q += 2;
            }
        }
    }
    let raw_total = crate::linalg::kahan_sum(raw.iter().copied());
    let renorm = 1.0 / raw_total;
    let mut masses: Vec<f64> = raw.iter().map(|&w| w * renorm).collect();
    // absorb the residual division rounding into the heaviest atom
    let residual = crate::linalg::kahan_sum(masses.iter().copied()) - 1.0;
    let heaviest = masses
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    masses[heaviest] -= residual;
    let measure = EmpiricalMeasure::new(2, atoms, masses)?;
    Ok(DyadicMeasure {
        measure,
        raw_total,
        renormalization: renorm,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rank, RANK_REL_TOL};

    #[test]
    fn iterate_identity() {
        let sys = MapSystem::Identity { dim: 1 };
        let orbit = iterate(&sys, &[0.2], 3, 0).unwrap();
        for i in 0..3 {
            assert_eq!(orbit.point(i), &[0.2]);
        }
    }

    #[test]
    fn iterate_logistic_exact() {
        let sys = MapSystem::Logistic { r: 4.0 };
        let orbit = iterate(&sys, &[0.5], 3, 0).unwrap();
        assert_eq!(orbit.point(0), &[0.5]);
        assert_eq!(orbit.point(1), &[1.0]);
        assert_eq!(orbit.point(2), &[0.0]);
    }

    #[test]
    fn iterate_henon_from_origin() {
        let sys = MapSystem::Henon { a: 1.4, b: 0.3 };
        let orbit = iterate(&sys, &[0.0, 0.0], 2, 0).unwrap();
        assert_eq!(orbit.point(0), &[0.0, 0.0]);
        assert_eq!(orbit.point(1), &[1.0, 0.0]);
    }

    #[test]
    fn iterate_divergence_reports_step() {
        let sys = MapSystem::Logistic { r: 5.5 };
        // Starting outside [0,1] the orbit blows up quickly.
        let err = iterate(&sys, &[2.0], 200, 0).unwrap_err();
        match err {
            crate::Error::Divergence { step } => assert!(step > 0),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn interval_pair_branches() {
        let sys = builtin_system("interval_pair", &Default::default()).unwrap();
        assert_eq!(sys.step_vec(&[1.0, 0.25]), vec![1.0, 0.75]);
        assert_eq!(sys.step_vec(&[0.0, 0.25]), vec![0.0, 0.25]);
    }

    #[test]
    fn interval_pair_is_an_involution_on_atoms() {
        let sys = MapSystem::IntervalPair;
        let dyadic = dyadic_atomic_measure(&inverse_square_betas(6)).unwrap();
        let m = &dyadic.measure;
        for i in 0..m.len() {
            let once = sys.step_vec(m.atom(i));
            let twice = sys.step_vec(&once);
            assert_eq!(twice, m.atom(i).to_vec());
        }
    }

    #[test]
    fn tent_example() {
        let sys = builtin_system("tent", &[("s".to_string(), 2.0)].into_iter().collect()).unwrap();
        assert_eq!(sys.step_vec(&[0.75]), vec![0.5]);
    }

    #[test]
    fn builtin_rejects_unknown_and_incomplete() {
        assert!(builtin_system("nope", &Default::default()).is_err());
        assert!(builtin_system("logistic", &Default::default()).is_err());
    }

    #[test]
    fn builtin_circle_rotation_preserves_radius() {
        let params = [("theta".to_string(), 0.7)].into_iter().collect();
        let sys = builtin_system("circle_rotation", &params).unwrap();
        let p = sys.step_vec(&[1.0, 0.0]);
        assert!((p[0] - 0.7f64.cos()).abs() < 1e-15);
        assert!((p[1] - 0.7f64.sin()).abs() < 1e-15);
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probe_family_monomial_counts() {
        let f = polynomial_probe_family(1, 2);
        assert_eq!(f.len(), 2); // {1, x}
        let f = polynomial_probe_family(2, 2);
        assert_eq!(f.len(), 3); // {1, x, y}
        let f = polynomial_probe_family(1, 4);
        assert_eq!(f.len(), 4); // {1, x, x^2, x^3}
        // Binomial count C(N+q-1, N) in general.
        let f = polynomial_probe_family(2, 4);
        assert_eq!(f.len(), 10);
    }

    #[test]
    fn probe_family_vandermonde_full_rank() {
        // Evaluation of {1, x, x^2, x^3} at 0,1,2,3 is Vandermonde with
        // determinant 12 (product formula), hence full rank.
        let f = polynomial_probe_family(1, 4);
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let m = f.evaluation_matrix(&refs);
        assert_eq!(rank(&m, RANK_REL_TOL), 4);
    }

    #[test]
    fn perturb_zero_alpha_is_identity() {
        let f = polynomial_probe_family(1, 3);
        let h = Observable::Coordinate(0);
        let hp = perturb_observable(&h, &f, &vec![0.0; f.len()]).unwrap();
        for x in [0.0, 0.3, 0.9] {
            assert_eq!(hp.eval(&[x]), h.eval(&[x]));
        }
    }

    #[test]
    fn perturb_linear_combination() {
        let f = polynomial_probe_family(1, 2); // {1, x}
        let h = Observable::Constant(0.0);
        let hp = perturb_observable(&h, &f, &[2.0, 3.0]).unwrap();
        assert_eq!(hp.eval(&[0.0]), 2.0);
        assert_eq!(hp.eval(&[1.0]), 5.0);
    }

    #[test]
    fn perturb_cubic_direct_evaluation() {
        let f = polynomial_probe_family(1, 4); // {1, x, x^2, x^3}
        let h = Observable::Coordinate(0);
        let hp = perturb_observable(&h, &f, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((hp.eval(&[0.5]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perturb_is_linear_in_alpha() {
        let f = polynomial_probe_family(2, 3);
        let h = Observable::Coordinate(1);
        let a1 = sample_alpha(3, f.len(), 0.5);
        let a2 = sample_alpha(4, f.len(), 0.5);
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let h1 = perturb_observable(&h, &f, &sum).unwrap();
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let lhs = h1.eval(&x);
            let rhs = perturb_observable(&h, &f, &a1).unwrap().eval(&x)
                + a2
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| a * f.eval_member(j, &x))
                    .sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn perturb_length_mismatch() {
        let f = polynomial_probe_family(1, 2);
        assert!(perturb_observable(&Observable::Coordinate(0), &f, &[1.0]).is_err());
    }

    #[test]
    fn sample_alpha_degenerate_and_deterministic() {
        assert_eq!(sample_alpha(1, 3, 0.0), vec![0.0; 3]);
        assert_eq!(sample_alpha(42, 5, 1.0), sample_alpha(42, 5, 1.0));
        assert_ne!(sample_alpha(42, 5, 1.0), sample_alpha(43, 5, 1.0));
    }

    #[test]
    fn sample_alpha_ball_moments() {
        // Monte Carlo check of uniformity: mean near 0, norms inside the ball.
        let n = 10_000;
        let mut mean = [0.0f64; 2];
        for s in 0..n {
            let a = sample_alpha(1000 + s as u64, 2, 1.0);
            let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
            assert!(norm <= 1.0 + 1e-12);
            mean[0] += a[0];
            mean[1] += a[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        assert!(mean[0].abs() < 0.05 && mean[1].abs() < 0.05, "mean {mean:?}");
    }

    #[test]
    fn natural_measure_identity_dedup() {
        let sys = MapSystem::Identity { dim: 1 };
        let m = natural_measure(&sys, &[0.7], 50, 0, true).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.mass(0) - 1.0).abs() < 1e-12);
        let m = natural_measure(&sys, &[0.7], 50, 0, false).unwrap();
        assert_eq!(m.len(), 50);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn natural_measure_circle_equidistribution() {
        // Oracle: an arc of angular length L carries mass L / 2 pi.
        let theta = 2.0 * std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0;
        let sys = MapSystem::CircleRotation { theta };
        let n = 10_000;
        let m = natural_measure(&sys, &[1.0, 0.0], n, 0, false).unwrap();
        for (lo, hi) in [(0.3f64, 0.9f64), (2.0, 2.5), (5.0, 6.0)] {
            let mut mass = 0.0;
            for i in 0..m.len() {
                let p = m.atom(i);
                let ang = p[1].atan2(p[0]).rem_euclid(2.0 * std::f64::consts::PI);
                if ang >= lo && ang < hi {
                    mass += m.mass(i);
                }
            }
            let expect = (hi - lo) / (2.0 * std::f64::consts::PI);
            assert!((mass - expect).abs() < 0.02, "arc ({lo},{hi}): {mass} vs {expect}");
        }
    }

    #[test]
    fn natural_measure_logistic_invariant_density() {
        // Oracle: Simpson quadrature of the arcsine density over [0.4, 0.6].
        let quad = |a: f64, b: f64| {
            let f = |x: f64| 1.0 / (std::f64::consts::PI * (x * (1.0 - x)).sqrt());
            let n = 10_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            s * h / 3.0
        };
        let expect = quad(0.4, 0.6);
        assert!((expect - 0.1282).abs() < 1e-3, "quadrature oracle {expect}");
        let sys = MapSystem::Logistic { r: 4.0 };
        let m = natural_measure(&sys, &[0.3], 100_000, 100, false).unwrap();
        let mut mass = 0.0;
        for i in 0..m.len() {
            let x = m.atom(i)[0];
            if (0.4..=0.6).contains(&x) {
                mass += m.mass(i);
            }
        }
        assert!((mass - expect).abs() < 0.01, "mass {mass} vs {expect}");
    }

    #[test]
    fn dyadic_level_one() {
        let d = dyadic_atomic_measure(&inverse_square_betas(1)).unwrap();
        assert_eq!(d.measure.len(), 2);
        assert_eq!(d.measure.atom(0), &[0.0, 0.5]);
        assert_eq!(d.measure.atom(1), &[1.0, 0.5]);
        assert!((d.measure.mass(0) - 0.5).abs() < 1e-12);
        assert!((d.measure.mass(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dyadic_beta_tail_and_ratio() {
        // beta_n / beta_{n+1} = (1 + 1/n)^2 <= 4.
        let betas = inverse_square_betas(30);
        for n in 0..betas.len() - 1 {
            let ratio = betas[n] / betas[n + 1];
            assert!(ratio <= 4.0 + 1e-12);
        }
        // Renormalization factor tends to 1; the kept mass misses exactly the
        // tail sum, which is below (6/pi^2)/n_max.
        let mut last_dev = f64::INFINITY;
        for n_max in [5usize, 10, 20] {
            let d = dyadic_atomic_measure(&inverse_square_betas(n_max)).unwrap();
            let dev = (d.renormalization - 1.0).abs();
            let tail_bound = 6.0 / (std::f64::consts::PI.powi(2) * n_max as f64);
            assert!(
                (1.0 - d.raw_total) < tail_bound,
                "raw tail {} vs bound {tail_bound}",
                1.0 - d.raw_total
            );
            // factor - 1 = tail / kept <= tail_bound / (1 - tail_bound)
            assert!(dev < tail_bound / (1.0 - tail_bound) + 1e-12);
            assert!(dev < last_dev);
            last_dev = dev;
        }
        let d = dyadic_atomic_measure(&inverse_square_betas(16)).unwrap();
        assert!((d.measure.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dyadic_rejects_bad_beta() {
        assert!(dyadic_atomic_measure(&[0.5, 0.0]).is_err());
        assert!(dyadic_atomic_measure(&[]).is_err());
    }

    #[test]
    fn probe_family_rank_certificate_smoke() {
        // 200 random draws of q distinct points; evaluation matrix must have
        // rank q. Full certificate lives in experiments::interpolation_certificate.
        let q = 4;
        let family = polynomial_probe_family(1, q);
        let mut rng = SplitMix64::new(77);
        for _ in 0..200 {
            let mut pts: Vec<Vec<f64>> = Vec::new();
            while pts.len() < q {
                let x = vec![rng.uniform(-1.0, 1.0)];
                if pts.iter().all(|p| p[0] != x[0]) {
                    pts.push(x);
                }
            }
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let m = family.evaluation_matrix(&refs);
            let sv = crate::linalg::singular_values(&m);
            assert!(sv[q - 1] > 1e-9 * sv[0]);
        }
    }
}
