//! Small dense matrices, singular values by one-sided Jacobi, and exact
//! integer rank by fraction-free elimination. Everything here targets the
//! tiny matrices produced by orbit-pair analysis (at most a few dozen rows
//! and columns), where Jacobi iteration is accurate to machine precision.

/// Relative tolerance for numerical rank: singular values below
/// `rel_tol * sigma_max` count as zero.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j) * v[j])
                    .sum::<f64>()
            })
            .collect()
    }
}

/// All singular values in descending order (length = min(rows, cols)).
///
/// One-sided Jacobi on the thinner dimension: rotate column pairs until all
/// pairwise inner products vanish relative to the column norms; the final
/// column norms are the singular values.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let (r, c) = (m.rows, m.cols);
    if r == 0 || c == 0 {
        return Vec::new();
    }
    // Work on B with rows >= cols so columns live in the taller space.
    let (br, bc, mut b) = if r >= c {
        (r, c, m.data.clone())
    } else {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = m.get(i, j);
            }
        }
        (c, r, t)
    };
    let col = |b: &[f64], j: usize, i: usize| b[i * bc + j];
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..bc {
            for q in (p + 1)..bc {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..br {
                    let x = col(&b, p, i);
                    let y = col(&b, q, i);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(f64::MIN_POSITIVE));
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..br {
                    let x = b[i * bc + p];
                    let y = b[i * bc + q];
                    b[i * bc + p] = cs * x - sn * y;
                    b[i * bc + q] = sn * x + cs * y;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..bc)
        .map(|j| (0..br).map(|i| col(&b, j, i).powi(2)).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// The p-th largest singular value, 1-indexed as in sigma_p.
pub fn sigma_p(m: &Matrix, p: usize) -> f64 {
    let sv = singular_values(m);
    assert!(p >= 1 && p <= sv.len(), "sigma index out of range");
    sv[p - 1]
}

/// Numerical rank: count of singular values above `rel_tol * sigma_max`.
pub fn rank(m: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
    }
}

/// Exact rank of an integer matrix via fraction-free (Bareiss) elimination.
pub fn integer_rank(rows: usize, cols: usize, entries: &[i64]) -> usize {
    assert_eq!(entries.len(), rows * cols);
    let mut a: Vec<i128> = entries.iter().map(|&v| v as i128).collect();
    let at = |a: &[i128], i: usize, j: usize| a[i * cols + j];
    let mut rank = 0usize;
    let mut prev = 1i128;
    let mut row = 0usize;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let pivot_row = (row..rows).find(|&i| at(&a, i, col) != 0);
        let Some(p) = pivot_row else { continue };
        if p != row {
            for j in 0..cols {
                a.swap(row * cols + j, p * cols + j);
            }
        }
        let pivot = at(&a, row, col);
        for i in (row + 1)..rows {
            let head = at(&a, i, col);
            for j in 0..cols {
                let v = pivot * at(&a, i, j) - head * at(&a, row, j);
                a[i * cols + j] = v / prev;
            }
        }
        prev = pivot;
        row += 1;
        rank += 1;
    }
    rank
}

/// Determinant of a square integer matrix (Bareiss, exact).
pub fn integer_det(n: usize, entries: &[i64]) -> i128 {
    assert_eq!(entries.len(), n * n);
    let mut a: Vec<i128> = entries.iter().map(|&v| v as i128).collect();
    let mut prev = 1i128;
    let mut sign = 1i128;
    for k in 0..n {
        if a[k * n + k] == 0 {
            let swap = ((k + 1)..n).find(|&i| a[i * n + k] != 0);
            match swap {
                Some(s) => {
                    for j in 0..n {
                        a.swap(k * n + j, s * n + j);
                    }
                    sign = -sign;
                }
                None => return 0,
            }
        }
        let pivot = a[k * n + k];
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                a[i * n + j] = (pivot * a[i * n + j] - a[i * n + k] * a[k * n + j]) / prev;
            }
            a[i * n + k] = 0;
        }
        prev = pivot;
    }
    sign * a[(n - 1) * n + (n - 1)]
}

/// Least-squares slope of y against x. Returns None for fewer than two
/// distinct x values.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    weighted_ls_slope(xs, ys, None)
}

/// Weighted least-squares slope; `weights: None` means uniform.
pub fn weighted_ls_slope(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let wsum: f64 = (0..xs.len()).map(w_at).sum();
    if wsum <= 0.0 {
        return None;
    }
    let xbar: f64 = (0..xs.len()).map(|i| w_at(i) * xs[i]).sum::<f64>() / wsum;
    let ybar: f64 = (0..xs.len()).map(|i| w_at(i) * ys[i]).sum::<f64>() / wsum;
    let sxx: f64 = (0..xs.len())
        .map(|i| w_at(i) * (xs[i] - xbar) * (xs[i] - xbar))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = (0..xs.len())
        .map(|i| w_at(i) * (xs[i] - xbar) * (ys[i] - ybar))
        .sum();
    Some(sxy / sxx)
}

/// Compensated (Kahan) summation; keeps validation sums accurate for large
/// atom counts.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn euclidean_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
