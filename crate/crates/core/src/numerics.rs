//! Dense f64 linear algebra: matrices, a one-sided Jacobi SVD with full
//! orthonormal factors, pseudoinverse, and null-space bases.
//!
//! Everything here is deterministic: fixed sweep order, stable sorting, and a
//! fixed sign convention, so repeated runs produce bitwise-identical factors.

use crate::error::{Error, Result};

/// Relative off-diagonal tolerance for Jacobi convergence.
const JACOBI_TOL: f64 = 1e-14;
/// Sweep cap; one-sided Jacobi on well-scaled inputs converges in far fewer.
const JACOBI_MAX_SWEEPS: usize = 60;
/// Default relative rank cutoff for pseudoinverse / null-space decisions.
pub const DEFAULT_RANK_RTOL: f64 = 1e-10;

// ── vectors ──────────────────────────────────────────────────────────────

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Pairwise (cascade) summation: deterministic and far more accurate than a
/// left-to-right fold on long accumulations.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        let mut acc = 0.0;
        for &v in x {
            acc += v;
        }
        acc
    } else {
        let mid = x.len() / 2;
        pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    pairwise_sum(x) / x.len() as f64
}

/// Standard normal draw by the Box-Muller transform; depends only on the
/// generator stream, so seeded draws are identical across platforms.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1], keeps the log finite
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ── matrices ─────────────────────────────────────────────────────────────

/// Row-major dense matrix of f64 with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting dimension mismatches
    /// and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("rows have inconsistent lengths".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec: dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// x^T A as a vector (A^T x without materializing the transpose).
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += xi * row[j];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

// ── singular value decomposition ─────────────────────────────────────────

/// Full factors A = u · diag(s) · vt with square orthonormal u (rows x rows)
/// and vt (cols x cols); s has min(rows, cols) nonincreasing entries.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    /// u · Σ · vt with Σ the rectangular-diagonal embedding of s.
    pub fn reconstruct(&self) -> Matrix {
        let m = self.u.rows();
        let n = self.vt.cols();
        Matrix::from_fn(m, n, |i, j| {
            let mut acc = 0.0;
            for (k, &sk) in self.s.iter().enumerate() {
                acc += self.u.get(i, k) * sk * self.vt.get(k, j);
            }
            acc
        })
    }

    /// Count of singular values above `rtol * s_max`.
    pub fn rank(&self, rtol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > rtol * smax && s > 0.0).count()
    }
}

/// Singular value decomposition by one-sided Jacobi rotations.
///
/// Columns of a working copy are rotated pairwise until all off-diagonal
/// Gram terms fall below a relative tolerance of 1e-14; column norms are the
/// singular values and the rotation product accumulates the right factor.
/// Wide matrices are handled through the transpose. Factors are full:
/// orthonormal completion fills the columns beyond the rank. Deterministic
/// sweep order, a stable descending sort, and a fixed sign convention (the
/// largest-magnitude entry of each left singular vector is nonnegative) make
/// the output reproducible bit for bit.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    svd_with_sweeps(a, JACOBI_MAX_SWEEPS)
}

/// `svd` with an explicit sweep cap; a cap below the need surfaces
/// `ConvergenceFailure` carrying the remaining relative residual.
pub fn svd_with_sweeps(a: &Matrix, max_sweeps: usize) -> Result<SvdFactors> {
    let mut f = if a.rows() >= a.cols() {
        jacobi_tall(a, max_sweeps)?
    } else {
        // A = (A^T)^T: factor the tall transpose and swap the roles of the
        // left and right factors.
        let t = jacobi_tall(&a.transpose(), max_sweeps)?;
        SvdFactors { u: t.vt.transpose(), s: t.s, vt: t.u.transpose() }
    };
    apply_sign_convention(&mut f);
    Ok(f)
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(svd(a)?.s.first().copied().unwrap_or(0.0))
}

/// Applies the plane rotation `[c -s; s c]` to the column pair `p < q`,
/// stored as entries of `cols`.
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    for (a, b) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

fn jacobi_tall(a: &Matrix, max_sweeps: usize) -> Result<SvdFactors> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);

    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..max_sweeps {
        if n < 2 {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let app = dot(&w[p], &w[p]);
                let aqq = dot(&w[q], &w[q]);
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let apq = dot(&w[p], &w[q]);
                if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure { residual: max_offdiag_rel(&w) });
    }

    // Stable descending order of column norms.
    let sigma: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &j in &order {
        if sigma[j] > 0.0 {
            u_cols.push(w[j].iter().map(|x| x / sigma[j]).collect());
        }
    }
    complete_basis(&mut u_cols, m)?;

    let u = Matrix::from_fn(m, m, |i, j| u_cols[j][i]);
    let vt = Matrix::from_fn(n, n, |i, j| v[order[i]][j]);
    Ok(SvdFactors { u, s, vt })
}

fn max_offdiag_rel(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let mut worst = 0.0_f64;
    for p in 0..n.saturating_sub(1) {
        for q in p + 1..n {
            let app = dot(&w[p], &w[p]);
            let aqq = dot(&w[q], &w[q]);
            if app == 0.0 || aqq == 0.0 {
                continue;
            }
            let rel = dot(&w[p], &w[q]).abs() / (app * aqq).sqrt();
            worst = worst.max(rel);
        }
    }
    worst
}

/// Extends a set of orthonormal columns of length `m` to a full basis by
/// orthogonalizing standard basis vectors against it (two Gram-Schmidt
/// passes for stability).
fn complete_basis(cols: &mut Vec<Vec<f64>>, m: usize) -> Result<()> {
    for k in 0..m {
        if cols.len() == m {
            break;
        }
        let mut r: Vec<f64> = (0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            for c in cols.iter() {
                let proj = dot(&r, c);
                for i in 0..m {
                    r[i] -= proj * c[i];
                }
            }
        }
        let nrm = norm2(&r);
        if nrm > 1e-8 {
            for x in r.iter_mut() {
                *x /= nrm;
            }
            cols.push(r);
        }
    }
    if cols.len() != m {
        return Err(Error::InvalidInput("orthonormal completion failed".into()));
    }
    Ok(())
}

/// Flips signs so the largest-magnitude entry of every left singular vector
/// is nonnegative; the paired right vector flips with it. Columns without a
/// partner (zero singular value or beyond min(m, n)) are normalized
/// independently, purely for determinism.
fn apply_sign_convention(f: &mut SvdFactors) {
    let m = f.u.rows();
    let n = f.vt.cols();
    let k = f.s.len();
    for j in 0..m {
        let col = f.u.col(j);
        if dominant_is_negative(&col) {
            for i in 0..m {
                f.u.set(i, j, -f.u.get(i, j));
            }
            if j < k && f.s[j] > 0.0 {
                for c in 0..n {
                    f.vt.set(j, c, -f.vt.get(j, c));
                }
            }
        }
    }
    for j in 0..n {
        let paired = j < k && f.s[j] > 0.0;
        if !paired {
            let row: Vec<f64> = (0..n).map(|c| f.vt.get(j, c)).collect();
            if dominant_is_negative(&row) {
                for c in 0..n {
                    f.vt.set(j, c, -f.vt.get(j, c));
                }
            }
        }
    }
}

fn dominant_is_negative(x: &[f64]) -> bool {
    let mut best = 0usize;
    for i in 1..x.len() {
        if x[i].abs() > x[best].abs() {
            best = i;
        }
    }
    x[best] < 0.0
}

// ── pseudoinverse and null space ─────────────────────────────────────────

/// Moore-Penrose pseudoinverse; singular values at or below `rtol * s_max`
/// are treated as zero.
pub fn pseudoinverse(a: &Matrix, rtol: f64) -> Result<Matrix> {
    let f = svd(a)?;
    let smax = f.s.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(a.cols(), a.rows());
    for (k, &sk) in f.s.iter().enumerate() {
        if sk <= rtol * smax || sk == 0.0 {
            continue;
        }
        let inv = 1.0 / sk;
        for j in 0..a.cols() {
            let vjk = f.vt.get(k, j);
            if vjk == 0.0 {
                continue;
            }
            for i in 0..a.rows() {
                let v = out.get(j, i) + vjk * inv * f.u.get(i, k);
                out.set(j, i, v);
            }
        }
    }
    Ok(out)
}

/// Orthonormal basis of the kernel: the right singular vectors whose
/// singular value is at or below `rtol * s_max` (cols x (cols - rank);
/// zero columns of the result matrix are impossible, but the matrix itself
/// is absent — zero width — for a full-column-rank input, represented here
/// as a cols x 0 result via an Option).
pub fn null_basis(a: &Matrix, rtol: f64) -> Result<Option<Matrix>> {
    let f = svd(a)?;
    let rank = f.rank(rtol);
    let n = a.cols();
    if rank == n {
        return Ok(None);
    }
    let width = n - rank;
    let b = Matrix::from_fn(n, width, |i, j| f.vt.get(rank + j, i));
    Ok(Some(b))
}
