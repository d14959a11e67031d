//! Finite orbit-pair combinatorics: enumeration of two-orbit functional
//! graphs, the sign matrix J and difference matrix D of a marked pair,
//! rank and singular-value analysis, and randomized verification of the
//! rank-deficiency growth bound together with its contrapositive.

use rayon::prelude::*;

use crate::linalg::{integer_rank, singular_values, weighted_ls_slope, Matrix, RANK_REL_TOL};
use crate::rng::SplitMix64;
use crate::systems::{MapSystem, ProbeFamily};
use crate::{Error, Result};

const NO_SUCC: u32 = u32::MAX;

/// Two marked orbits inside one finite functional graph, in canonical form:
/// states are labeled by first appearance along the walk of x and then of
/// y, so x is always state 0. A cycle length of 0 encodes a truncated
/// (aperiodic surrogate) orbit whose final state has no successor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitStructure {
    succ: Vec<u32>,
    y: usize,
    /// Pre-period and cycle lengths of the marked points.
    pub p_x: usize,
    pub c_x: usize,
    pub p_y: usize,
    pub c_y: usize,
}

impl OrbitStructure {
    /// Validates and canonicalizes a functional graph with two marked
    /// points. Requires x != y and every state reachable from x or y.
    pub fn from_succ(succ: &[u32], x: usize, y: usize) -> Result<Self> {
        let n = succ.len();
        if n == 0 || x >= n || y >= n {
            return Err(Error::InvalidInput("marked points out of range".into()));
        }
        if x == y {
            return Err(Error::InvalidInput("marked points must differ".into()));
        }
        for (s, &t) in succ.iter().enumerate() {
            if t != NO_SUCC && t as usize >= n {
                return Err(Error::InvalidInput(format!("successor of state {s} out of range")));
            }
        }
        // first-appearance relabelling along the two walks
        let mut label = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let walk = |start: usize, label: &mut Vec<usize>, order: &mut Vec<usize>| {
            let mut seen = std::collections::HashSet::new();
            let mut cur = start;
            loop {
                if !seen.insert(cur) {
                    break;
                }
                if label[cur] == usize::MAX {
                    label[cur] = order.len();
                    order.push(cur);
                }
                match succ[cur] {
                    NO_SUCC => break,
                    next => cur = next as usize,
                }
            }
        };
        walk(x, &mut label, &mut order);
        walk(y, &mut label, &mut order);
        if order.len() != n {
            return Err(Error::InvalidInput(
                "every state must be reachable from a marked point".into(),
            ));
        }
        let mut new_succ = vec![NO_SUCC; n];
        for (old, &lbl) in label.iter().enumerate() {
            new_succ[lbl] = match succ[old] {
                NO_SUCC => NO_SUCC,
                t => label[t as usize] as u32,
            };
        }
        let new_y = label[y];
        let (p_x, c_x) = tail_and_cycle(&new_succ, 0);
        let (p_y, c_y) = tail_and_cycle(&new_succ, new_y);
        Ok(OrbitStructure {
            succ: new_succ,
            y: new_y,
            p_x,
            c_x,
            p_y,
            c_y,
        })
    }

    pub fn n_states(&self) -> usize {
        self.succ.len()
    }

    pub fn x(&self) -> usize {
        0
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn truncated(&self) -> bool {
        self.c_x == 0 || self.c_y == 0
    }

    pub fn orbit_size_x(&self) -> usize {
        self.p_x + self.c_x
    }

    pub fn orbit_size_y(&self) -> usize {
        self.p_y + self.c_y
    }

    /// State index of T^i applied to the given start state.
    pub fn step_from(&self, start: usize, i: usize) -> Option<usize> {
        let mut cur = start;
        for _ in 0..i {
            match self.succ[cur] {
                NO_SUCC => return None,
                t => cur = t as usize,
            }
        }
        Some(cur)
    }

    /// The states T^0 s, ..., T^upto s; None when truncation cuts early.
    pub fn iterates(&self, start: usize, upto: usize) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(upto + 1);
        let mut cur = start;
        out.push(cur);
        for _ in 0..upto {
            match self.succ[cur] {
                NO_SUCC => return None,
                t => {
                    cur = t as usize;
                    out.push(cur);
                }
            }
        }
        Some(out)
    }

    /// Whether the two marked orbits share any state.
    pub fn orbits_intersect(&self) -> bool {
        let seen_x: std::collections::HashSet<usize> = self.orbit_states(0).into_iter().collect();
        self.orbit_states(self.y).iter().any(|s| seen_x.contains(s))
    }

    fn orbit_states(&self, start: usize) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let mut cur = start;
        loop {
            if !seen.insert(cur) {
                break;
            }
            out.push(cur);
            match self.succ[cur] {
                NO_SUCC => break,
                t => cur = t as usize,
            }
        }
        out
    }

    /// Stable encoding of the canonical form.
    pub fn canonical_key(&self) -> Vec<i64> {
        let mut key = Vec::with_capacity(self.succ.len() + 2);
        key.push(self.succ.len() as i64);
        key.push(self.y as i64);
        for &s in &self.succ {
            key.push(if s == NO_SUCC { -1 } else { s as i64 });
        }
        key
    }

    /// Deterministic 64-bit digest of the canonical form, for seeding.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for v in self.canonical_key() {
            h ^= v as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

fn tail_and_cycle(succ: &[u32], start: usize) -> (usize, usize) {
    let mut pos = std::collections::HashMap::new();
    let mut cur = start;
    let mut i = 0usize;
    loop {
        if let Some(&p) = pos.get(&cur) {
            return (p, i - p);
        }
        pos.insert(cur, i);
        match succ[cur] {
            NO_SUCC => return (i + 1, 0),
            t => {
                cur = t as usize;
                i += 1;
            }
        }
    }
}

/// All canonical orbit-pair structures with at most `max_states` states.
/// Complete (cycle-closed) structures are independent of `k`; aperiodic
/// orbits are represented by paths truncated at k+1 distinct states.
pub fn enumerate_structures(max_states: usize, k: usize) -> Vec<OrbitStructure> {
    assert!(max_states >= 2, "need room for two marked points");
    assert!(k >= 1);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut push = |succ: Vec<u32>, x: usize, y: usize, out: &mut Vec<OrbitStructure>| {
        let s = OrbitStructure::from_succ(&succ, x, y).expect("generated structure is valid");
        if seen.insert(s.canonical_key()) {
            out.push(s);
        }
    };

    // Disjoint pair of complete orbits: shapes (pre-period p, cycle c >= 1).
    for n_x in 1..max_states {
        for c_x in 1..=n_x {
            let p_x = n_x - c_x;
            for n_y in 1..=(max_states - n_x) {
                for c_y in 1..=n_y {
                    let p_y = n_y - c_y;
                    let mut succ = vec![NO_SUCC; n_x + n_y];
                    chain_into_cycle(&mut succ, 0, p_x, c_x);
                    chain_into_cycle(&mut succ, n_x, p_y, c_y);
                    push(succ, 0, n_x, &mut out);
                }
            }
        }
    }

    // Merged pair: shared cycle of length c, marked points at tail
    // distances d_x, d_y, sharing the final `e` tail states; when the tails
    // stay disjoint (e = 0) the entry points may differ by a cycle offset.
    for c in 1..=max_states {
        for d_x in 0..max_states {
            for d_y in 0..max_states {
                let e_max = d_x.min(d_y);
                for e in 0..=e_max {
                    if e == d_x && e == d_y && e > 0 {
                        continue; // would force x = y
                    }
                    let n = c + d_x + d_y - e;
                    if n > max_states {
                        continue;
                    }
                    let offsets: Vec<usize> = if e > 0 {
                        vec![0]
                    } else if d_x == 0 && d_y == 0 {
                        (1..c).collect()
                    } else {
                        (0..c).collect()
                    };
                    for o in offsets {
                        if d_x == 0 && d_y == 0 && o == 0 {
                            continue;
                        }
                        let (succ, x, y) = build_merged(c, d_x, d_y, e, o);
                        push(succ, x, y, &mut out);
                    }
                }
            }
        }
    }

    // Truncated structures emulate aperiodic points with k+1 distinct
    // states per marked orbit (iterates beyond T^k never enter a formula).
    let t_len = k + 1;

    // x truncated, y a complete orbit (and the mirror image).
    if t_len < max_states {
        for n_y in 1..=(max_states - t_len) {
            for c_y in 1..=n_y {
                let p_y = n_y - c_y;
                for flip in [false, true] {
                    let mut succ = vec![NO_SUCC; t_len + n_y];
                    for i in 0..t_len - 1 {
                        succ[i] = (i + 1) as u32;
                    }
                    chain_into_cycle(&mut succ, t_len, p_y, c_y);
                    let (x, y) = if flip { (t_len, 0) } else { (0, t_len) };
                    push(succ, x, y, &mut out);
                }
            }
        }
    }

    // Both truncated, disjoint.
    if 2 * t_len <= max_states {
        let mut succ = vec![NO_SUCC; 2 * t_len];
        for i in 0..t_len - 1 {
            succ[i] = (i + 1) as u32;
            succ[t_len + i] = (t_len + i + 1) as u32;
        }
        push(succ, 0, t_len, &mut out);
    }

    // Merged truncated: exclusive approaches of lengths a and b into a
    // shared trunk cut so the shorter orbit holds exactly k+1 states.
    for a in 0..max_states {
        for b in 0..max_states {
            if a == 0 && b == 0 {
                continue;
            }
            let m = a.min(b);
            if m > k {
                continue;
            }
            let t = t_len - m;
            let n = a + b + t;
            if n > max_states {
                continue;
            }
            // trunk states 0..t-1 (after the exclusives are prepended below)
            let mut succ = vec![NO_SUCC; n];
            // layout: x-exclusives [0..a), y-exclusives [a..a+b), trunk [a+b..n)
            for i in 0..a {
                succ[i] = if i + 1 < a { (i + 1) as u32 } else { (a + b) as u32 };
            }
            for i in 0..b {
                succ[a + i] = if i + 1 < b {
                    (a + i + 1) as u32
                } else {
                    (a + b) as u32
                };
            }
            for i in 0..t - 1 {
                succ[a + b + i] = (a + b + i + 1) as u32;
            }
            let x = if a > 0 { 0 } else { a + b };
            let y = if b > 0 { a } else { a + b };
            if x == y {
                continue;
            }
            push(succ, x, y, &mut out);
        }
    }

    out
}

fn chain_into_cycle(succ: &mut [u32], base: usize, pre: usize, cycle: usize) {
    // states base..base+pre-1 form the tail, base+pre..base+pre+cycle-1 the cycle
    for i in 0..pre {
        succ[base + i] = (base + i + 1) as u32;
    }
    for i in 0..cycle {
        let from = base + pre + i;
        let to = base + pre + (i + 1) % cycle;
        succ[from] = to as u32;
    }
}

fn build_merged(c: usize, d_x: usize, d_y: usize, e: usize, o: usize) -> (Vec<u32>, usize, usize) {
    let ex = d_x - e;
    let ey = d_y - e;
    let n = c + e + ex + ey;
    // layout: cycle [0..c), shared tail [c..c+e), x-exclusives, y-exclusives
    let mut succ = vec![NO_SUCC; n];
    for i in 0..c {
        succ[i] = ((i + 1) % c) as u32;
    }
    for i in 0..e {
        let from = c + i;
        let to = if i + 1 < e { c + i + 1 } else { 0 }; // shared tail enters cycle at node 0
        succ[from] = to as u32;
    }
    let shared_head = if e > 0 { c } else { 0 };
    for i in 0..ex {
        let from = c + e + i;
        let to = if i + 1 < ex {
            c + e + i + 1
        } else if e > 0 {
            shared_head
        } else {
            0 // x tail enters the cycle at node 0
        };
        succ[from] = to as u32;
    }
    for i in 0..ey {
        let from = c + e + ex + i;
        let to = if i + 1 < ey {
            c + e + ex + i + 1
        } else if e > 0 {
            shared_head
        } else {
            o // y tail enters the cycle at the offset node
        };
        succ[from] = to as u32;
    }
    let x = if ex > 0 {
        c + e
    } else if e > 0 {
        c
    } else {
        0
    };
    let y = if ey > 0 {
        c + e + ex
    } else if e > 0 {
        c
    } else {
        o
    };
    (succ, x, y)
}

/// Sign matrix of a marked pair: row i holds +1 at the column of T^i x and
/// -1 at the column of T^i y; once the orbits coincide the remaining rows
/// are zero and `coincide_at` records the first such iterate.
#[derive(Clone, Debug)]
pub struct JMatrix {
    pub k: usize,
    pub cols: usize,
    /// Row-major entries in {-1, 0, 1}.
    pub entries: Vec<i64>,
    /// State of each column, ordered by first appearance along
    /// (x, Tx, ..., T^{k-1}x, y, ..., T^{k-1}y).
    pub col_states: Vec<usize>,
    pub coincide_at: Option<usize>,
}

impl JMatrix {
    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.k,
            cols: self.cols,
            data: self.entries.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn rank_exact(&self) -> usize {
        integer_rank(self.k, self.cols, &self.entries)
    }
}

pub fn build_j(structure: &OrbitStructure, k: usize) -> Result<JMatrix> {
    let ix = structure
        .iterates(structure.x(), k.saturating_sub(1))
        .ok_or_else(|| Error::InvalidInput("x orbit truncated before k iterates".into()))?;
    let iy = structure
        .iterates(structure.y(), k.saturating_sub(1))
        .ok_or_else(|| Error::InvalidInput("y orbit truncated before k iterates".into()))?;
    let coincide_at = (0..k).find(|&i| ix[i] == iy[i]);
    let mut col_of = std::collections::HashMap::new();
    let mut col_states = Vec::new();
    for &s in ix.iter().chain(iy.iter()) {
        col_of.entry(s).or_insert_with(|| {
            col_states.push(s);
            col_states.len() - 1
        });
    }
    let cols = col_states.len();
    let mut entries = vec![0i64; k * cols];
    for i in 0..k {
        if ix[i] == iy[i] {
            continue; // rows are zero from the first coincidence on
        }
        entries[i * cols + col_of[&ix[i]]] += 1;
        entries[i * cols + col_of[&iy[i]]] -= 1;
    }
    Ok(JMatrix {
        k,
        cols,
        entries,
        col_states,
        coincide_at,
    })
}

/// Difference matrix of probe evaluations along two real orbits:
/// entry (i, j) = h_j(T^i x) - h_j(T^i y).
pub fn build_d(
    system: &MapSystem,
    family: &ProbeFamily,
    x: &[f64],
    y: &[f64],
    k: usize,
) -> Result<Matrix> {
    if family.is_empty() {
        return Err(Error::InvalidInput("probe family must be nonempty".into()));
    }
    let ox = crate::systems::iterate(system, x, k, 0)?;
    let oy = crate::systems::iterate(system, y, k, 0)?;
    let m = family.len();
    let mut d = Matrix::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            d.set(
                i,
                j,
                family.eval_member(j, ox.point(i)) - family.eval_member(j, oy.point(i)),
            );
        }
    }
    Ok(d)
}

/// D matrix of a structure under a per-state value assignment of the probe
/// members: entry (i, j) = values[j][state of T^i x] - values[j][state of T^i y].
pub fn build_d_from_structure(
    structure: &OrbitStructure,
    k: usize,
    member_values: &[Vec<f64>],
) -> Result<Matrix> {
    let ix = structure
        .iterates(structure.x(), k - 1)
        .ok_or_else(|| Error::InvalidInput("x orbit too short".into()))?;
    let iy = structure
        .iterates(structure.y(), k - 1)
        .ok_or_else(|| Error::InvalidInput("y orbit too short".into()))?;
    let m = member_values.len();
    let mut d = Matrix::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            d.set(i, j, member_values[j][ix[i]] - member_values[j][iy[i]]);
        }
    }
    Ok(d)
}

/// Which step of the growth-bound argument a structure falls under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseLabel {
    /// Some marked orbit has at least k states.
    LongOrbit,
    /// Both orbits fit in k states, the y cycle divides the x cycle, and
    /// the y tail plus the x cycle fit in k. Carries the stronger factor k.
    NestedCycles,
    /// The two orbits together fit in k states.
    SmallUnion,
    /// A periodic marked point with disjoint orbits and no nesting.
    PeriodicDisjoint,
    /// Both points pre-periodic; handled by shortening the delay window.
    Reduction,
}

/// Classifies a structure for reporting. Symmetric in the marked points
/// except for the nested-cycles test, which is tried both ways.
pub fn classify(structure: &OrbitStructure, k: usize) -> CaseLabel {
    let (ox, oy) = (structure.orbit_size_x(), structure.orbit_size_y());
    let truncated = structure.truncated();
    if (structure.c_x == 0 && ox > k) || (structure.c_y == 0 && oy > k) || ox >= k || oy >= k {
        return CaseLabel::LongOrbit;
    }
    if is_nested_cycles(structure, k) {
        return CaseLabel::NestedCycles;
    }
    if ox + oy <= k {
        return CaseLabel::SmallUnion;
    }
    if !truncated
        && !structure.orbits_intersect()
        && (structure.p_x == 0 || structure.p_y == 0)
    {
        return CaseLabel::PeriodicDisjoint;
    }
    CaseLabel::Reduction
}

/// The nested-cycles hypotheses in either orientation: both orbits within
/// k states, one cycle dividing the other, and the dividing side's tail
/// plus the other side's cycle within k.
pub fn is_nested_cycles(structure: &OrbitStructure, k: usize) -> bool {
    let (ox, oy) = (structure.orbit_size_x(), structure.orbit_size_y());
    if structure.c_x == 0 || structure.c_y == 0 || ox > k || oy > k {
        return false;
    }
    let forward = structure.c_x % structure.c_y == 0 && structure.p_y + structure.c_x <= k;
    let backward = structure.c_y % structure.c_x == 0 && structure.p_x + structure.c_y <= k;
    forward || backward
}

/// One realization that broke a bound.
#[derive(Clone, Debug)]
pub struct ViolationRecord {
    pub structure_key: Vec<i64>,
    pub k: usize,
    pub trial: usize,
    pub factor_bound: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub values: Vec<f64>,
}

/// Outcome of the growth-bound sweep at one delay length.
#[derive(Clone, Debug)]
pub struct RankPredictReport {
    pub k: usize,
    pub structures_total: usize,
    pub rank_deficient: usize,
    pub nested_cycles_structures: usize,
    pub trials_per_structure: usize,
    pub violations: Vec<ViolationRecord>,
    /// Max observed ||phi(Tx)-phi(Ty)|| / ||phi(x)-phi(y)|| per case label,
    /// over rank-deficient realizations (keyed by CaseLabel order).
    pub max_ratio_by_case: [f64; 5],
    pub case_counts: [usize; 5],
}

fn case_index(c: CaseLabel) -> usize {
    match c {
        CaseLabel::LongOrbit => 0,
        CaseLabel::NestedCycles => 1,
        CaseLabel::SmallUnion => 2,
        CaseLabel::PeriodicDisjoint => 3,
        CaseLabel::Reduction => 4,
    }
}

pub const CASE_NAMES: [&str; 5] = [
    "long_orbit",
    "nested_cycles",
    "small_union",
    "periodic_disjoint",
    "reduction",
];

fn phi_from_values(values: &[f64], iterates: &[usize], from: usize, k: usize) -> Vec<f64> {
    (from..from + k).map(|i| values[iterates[i]]).collect()
}

/// Sweeps every structure with at most `max_states` states: wherever
/// rank J < k, random per-state value assignments must satisfy
/// ||phi(Tx) - phi(Ty)|| <= 2k ||phi(x) - phi(y)|| (plus float slack), and
/// structures meeting the nested-cycles hypotheses must satisfy the
/// stronger factor k on every realization.
pub fn verify_rank_predict(
    max_states: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> RankPredictReport {
    assert!(trials >= 1);
    let structures = enumerate_structures(max_states, k);
    let master = SplitMix64::new(seed);
    let per_structure: Vec<(usize, bool, [f64; 5], Vec<ViolationRecord>)> = structures
        .par_iter()
        .map(|s| {
            let mut ratios = [f64::NEG_INFINITY; 5];
            let mut violations = Vec::new();
            let j = build_j(s, k).expect("enumeration provides k iterates");
            let deficient = j.rank_exact() < k;
            let nested = is_nested_cycles(s, k);
            let case = case_index(classify(s, k));
            if !deficient && !nested {
                return (usize::from(deficient), nested, ratios, violations);
            }
            let mut rng = master.fork(s.digest());
            let ix = s.iterates(s.x(), k).expect("k+1 iterates");
            let iy = s.iterates(s.y(), k).expect("k+1 iterates");
            for trial in 0..trials {
                let values: Vec<f64> =
                    (0..s.n_states()).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let phi_x = phi_from_values(&values, &ix, 0, k);
                let phi_y = phi_from_values(&values, &iy, 0, k);
                let phi_tx = phi_from_values(&values, &ix, 1, k);
                let phi_ty = phi_from_values(&values, &iy, 1, k);
                let dx = crate::linalg::euclidean_dist(&phi_x, &phi_y);
                let dtx = crate::linalg::euclidean_dist(&phi_tx, &phi_ty);
                if dx > 1e-12 * scale {
                    ratios[case] = ratios[case].max(dtx / dx);
                }
                let slack = 1e-9 * scale.max(1.0);
                if deficient && dtx > 2.0 * k as f64 * dx + slack {
                    violations.push(ViolationRecord {
                        structure_key: s.canonical_key(),
                        k,
                        trial,
                        factor_bound: 2.0 * k as f64,
                        lhs: dtx,
                        rhs: dx,
                        values: values.clone(),
                    });
                }
                if nested && dtx > k as f64 * dx + slack {
                    violations.push(ViolationRecord {
                        structure_key: s.canonical_key(),
                        k,
                        trial,
                        factor_bound: k as f64,
                        lhs: dtx,
                        rhs: dx,
                        values: values.clone(),
                    });
                }
            }
            (usize::from(deficient), nested, ratios, violations)
        })
        .collect();

    let mut report = RankPredictReport {
        k,
        structures_total: structures.len(),
        rank_deficient: 0,
        nested_cycles_structures: 0,
        trials_per_structure: trials,
        violations: Vec::new(),
        max_ratio_by_case: [f64::NEG_INFINITY; 5],
        case_counts: [0; 5],
    };
    for (s, (deficient, nested, ratios, mut violations)) in
        structures.iter().zip(per_structure)
    {
        report.rank_deficient += deficient;
        report.nested_cycles_structures += usize::from(nested);
        if deficient == 1 {
            report.case_counts[case_index(classify(s, k))] += 1;
        }
        for (slot, r) in report.max_ratio_by_case.iter_mut().zip(ratios) {
            *slot = slot.max(r);
        }
        report.violations.append(&mut violations);
    }
    report
}

/// Contrapositive sweep: realize every structure with random state
/// embeddings and a degree-(2k-1) polynomial probe family; whenever
/// sigma_k(D) falls at or below the rank tolerance, every sampled
/// perturbation must satisfy the factor-2k growth bound.
#[derive(Clone, Debug)]
pub struct SigmaPositiveReport {
    pub k: usize,
    pub structures_total: usize,
    pub sigma_deficient: usize,
    pub realizations_checked: usize,
    pub violations: Vec<ViolationRecord>,
}

pub fn verify_sigma_k_positive(
    max_states: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> SigmaPositiveReport {
    assert!(trials >= 1);
    let structures = enumerate_structures(max_states, k);
    let family = crate::systems::polynomial_probe_family(1, 2 * k);
    // distinct stream from the growth-bound sweep under the same master seed
    let master = SplitMix64::new(seed ^ 0x927f_3b1d_55aa_10c4);
    let results: Vec<(usize, usize, Vec<ViolationRecord>)> = structures
        .par_iter()
        .map(|s| {
            let mut rng = master.fork(s.digest());
            let n = s.n_states();
            let ix = s.iterates(s.x(), k).expect("k+1 iterates");
            let iy = s.iterates(s.y(), k).expect("k+1 iterates");
            let mut sigma_deficient = 0usize;
            let mut checked = 0usize;
            let mut violations = Vec::new();
            // one embedding per structure; distinct coordinates almost surely
            let coords: Vec<f64> = distinct_coords(&mut rng, n);
            let member_values: Vec<Vec<f64>> = (0..family.len())
                .map(|j| coords.iter().map(|&t| family.eval_member(j, &[t])).collect())
                .collect();
            let d = build_d_from_structure(s, k, &member_values).expect("orbit long enough");
            let sv = singular_values(&d);
            let deficient = sv[0] == 0.0 || sv[k - 1] <= RANK_REL_TOL * sv[0];
            if deficient {
                sigma_deficient = 1;
                let base: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
                for trial in 0..trials {
                    checked += 1;
                    let alpha = ball_sample(&mut rng, family.len(), 1.0);
                    let values: Vec<f64> = (0..n)
                        .map(|si| {
                            base[si]
                                + alpha
                                    .iter()
                                    .enumerate()
                                    .map(|(j, &a)| a * member_values[j][si])
                                    .sum::<f64>()
                        })
                        .collect();
                    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    let phi_x = phi_from_values(&values, &ix, 0, k);
                    let phi_y = phi_from_values(&values, &iy, 0, k);
                    let phi_tx = phi_from_values(&values, &ix, 1, k);
                    let phi_ty = phi_from_values(&values, &iy, 1, k);
                    let dx = crate::linalg::euclidean_dist(&phi_x, &phi_y);
                    let dtx = crate::linalg::euclidean_dist(&phi_tx, &phi_ty);
                    if dtx > 2.0 * k as f64 * dx + 1e-9 * scale.max(1.0) {
                        violations.push(ViolationRecord {
                            structure_key: s.canonical_key(),
                            k,
                            trial,
                            factor_bound: 2.0 * k as f64,
                            lhs: dtx,
                            rhs: dx,
                            values,
                        });
                    }
                }
            }
            (sigma_deficient, checked, violations)
        })
        .collect();
    let mut report = SigmaPositiveReport {
        k,
        structures_total: structures.len(),
        sigma_deficient: 0,
        realizations_checked: 0,
        violations: Vec::new(),
    };
    for (d, c, mut v) in results {
        report.sigma_deficient += d;
        report.realizations_checked += c;
        report.violations.append(&mut v);
    }
    report
}

fn distinct_coords(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    loop {
        let coords: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut sorted = coords.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).all(|w| w[1] - w[0] > 1e-9) {
            return coords;
        }
    }
}

fn ball_sample(rng: &mut SplitMix64, m: usize, radius: f64) -> Vec<f64> {
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

/// Monte Carlo test of the parameter-measure bound: the fraction of alpha
/// uniform in B_m(0, rho) with ||psi alpha + z|| <= eps, against
/// (eps / (sigma_p rho))^p.
#[derive(Clone, Debug)]
pub struct McBound {
    pub fraction: f64,
    pub hits: usize,
    pub trials: usize,
    pub sigma_p: f64,
    pub p: usize,
    /// (eps / (sigma_p rho))^p; the lemma's bound is C times this.
    pub bound_unit: f64,
}

pub fn mc_measure_bound(
    psi: &Matrix,
    z: &[f64],
    rho: f64,
    eps: f64,
    p: usize,
    trials: usize,
    seed: u64,
) -> Result<McBound> {
    if trials < 1000 {
        return Err(Error::InvalidInput("need at least 1000 trials".into()));
    }
    if z.len() != psi.rows {
        return Err(Error::InvalidInput("z dimension mismatch".into()));
    }
    if !(rho > 0.0 && eps > 0.0) {
        return Err(Error::InvalidInput("rho and eps must be positive".into()));
    }
    let sp = crate::linalg::sigma_p(psi, p);
    if sp <= 0.0 {
        return Err(Error::Precondition(format!("sigma_{p}(psi) must be positive")));
    }
    let m = psi.cols;
    let mut rng = SplitMix64::new(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let alpha = ball_sample(&mut rng, m, rho);
        let v = psi.apply(&alpha);
        let norm = v
            .iter()
            .zip(z)
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        if norm <= eps {
            hits += 1;
        }
    }
    Ok(McBound {
        fraction: hits as f64 / trials as f64,
        hits,
        trials,
        sigma_p: sp,
        p,
        bound_unit: (eps / (sp * rho)).powi(p as i32),
    })
}

/// Calibrates the bound's constant as twice the largest observed
/// fraction / bound_unit ratio over the given seeds; the exponent, not the
/// constant, is the invariant worth asserting, so held-out seeds are
/// checked against this calibrated value.
pub fn calibrate_mc_constant(
    psi: &Matrix,
    z: &[f64],
    rho: f64,
    eps_grid: &[f64],
    p: usize,
    trials: usize,
    seeds: &[u64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &seed in seeds {
        for &eps in eps_grid {
            let r = mc_measure_bound(psi, z, rho, eps, p, trials, seed)?;
            if r.bound_unit > 0.0 {
                worst = worst.max(r.fraction / r.bound_unit);
            }
        }
    }
    Ok(2.0 * worst)
}

/// Fitted log-log slope of the Monte Carlo fraction against eps, weighted
/// by hit counts, skipping levels below the count floor. Fresh independent
/// draws per level.
pub fn mc_slope(
    psi: &Matrix,
    z: &[f64],
    rho: f64,
    eps_grid: &[f64],
    p: usize,
    trials_per_level: usize,
    seed: u64,
    count_floor: usize,
) -> Result<(Option<f64>, Vec<McBound>)> {
    let mut rows = Vec::with_capacity(eps_grid.len());
    let master = SplitMix64::new(seed);
    for (lvl, &eps) in eps_grid.iter().enumerate() {
        let level_seed = master.fork(lvl as u64).next_u64();
        rows.push(mc_measure_bound(psi, z, rho, eps, p, trials_per_level, level_seed)?);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.hits >= count_floor {
            xs.push(eps_grid[i].ln());
            ys.push(row.fraction.ln());
            ws.push(row.hits as f64);
        }
    }
    let slope = weighted_ls_slope(&xs, &ys, Some(&ws));
    Ok((slope, rows))
}
