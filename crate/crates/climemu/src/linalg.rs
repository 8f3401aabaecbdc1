//! Dense linear algebra kernel: row-major `f64` containers, Cholesky
//! factorization with a jitter ladder, triangular solves and a cyclic
//! Jacobi eigensolver for symmetric matrices.
//!
//! Everything here is a pure function on immutable inputs; there is no
//! shared mutable state, so all operations are safe to call concurrently.

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimensions(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Column `j` gathered into a vector.
    pub fn col(&self, j: usize) -> DenseVector {
        DenseVector::from((0..self.rows).map(|i| self[(i, j)]).collect::<Vec<_>>())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &DenseVector) -> Result<DenseVector> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let out: Vec<f64> = (0..self.rows)
            .map(|i| dot(self.row(i), v.as_slice()))
            .collect();
        Ok(DenseVector::from(out))
    }

    /// Adds `v` to every diagonal entry in place.
    pub fn add_diagonal(&mut self, v: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += v;
        }
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self[(i, i)]).sum::<f64>() / n as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Symmetry within a relative tolerance scaled by the largest entry.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = rel_tol * scale.max(1e-300);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense vector of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimensions(
                "vector entries must be finite".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }
}

/// Infallible: callers own the data and finiteness is checked downstream
/// where it matters (matrix construction, file ingestion).
impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean distance between two equal-length slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Diagonal-loading ladder used when a nominally PSD matrix fails to factor.
///
/// Scales are relative to the mean diagonal of the input: the first attempt
/// adds `initial_scale * mean(diag)`, each retry multiplies the jitter by
/// `growth` until `max_scale * mean(diag)` is exceeded.
#[derive(Debug, Clone, Copy)]
pub struct JitterPolicy {
    pub initial_scale: f64,
    pub growth: f64,
    pub max_scale: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial_scale: 1e-10,
            growth: 10.0,
            max_scale: 1e-4,
        }
    }
}

/// Lower-triangular Cholesky factor of `a + jitter_applied * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DenseMatrix,
    jitter_applied: f64,
}

impl CholeskyFactor {
    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Reassembles a factor from parts (bundle deserialization).
    pub fn from_parts(l: DenseMatrix, jitter_applied: f64) -> Self {
        Self { l, jitter_applied }
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &DenseVector) -> Result<DenseVector> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "triangular solve: factor is {n}x{n}, rhs has length {}",
                b.len()
            )));
        }
        let mut z = DenseVector::zeros(n);
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &z.as_slice()[..i]);
            z[i] = (b[i] - s) / self.l[(i, i)];
        }
        Ok(z)
    }

    /// Solves `L^T x = z`.
    pub fn solve_upper(&self, z: &DenseVector) -> Result<DenseVector> {
        let n = self.dim();
        if z.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "triangular solve: factor is {n}x{n}, rhs has length {}",
                z.len()
            )));
        }
        let mut x = DenseVector::zeros(n);
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in (i + 1)..n {
                s += self.l[(k, i)] * x[k];
            }
            x[i] = (z[i] - s) / self.l[(i, i)];
        }
        Ok(x)
    }

    /// Sum of log diagonal entries, i.e. half the log determinant.
    pub fn sum_log_diag(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum()
    }
}

/// Cholesky factorization with diagonal loading on failure.
///
/// Tries the bare matrix first; `jitter_applied` is 0 exactly when the input
/// is positive definite. Otherwise walks the policy ladder and returns the
/// smallest jitter that produces a valid factor.
pub fn cholesky(a: &DenseMatrix, policy: JitterPolicy) -> Result<CholeskyFactor> {
    if a.rows() != a.cols() || !a.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric);
    }
    let mean_diag = a.mean_diagonal();
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = 0.0;
    let mut scale = policy.initial_scale;
    loop {
        if let Some(l) = try_factor(a, jitter) {
            return Ok(CholeskyFactor {
                l,
                jitter_applied: jitter,
            });
        }
        if scale > policy.max_scale {
            return Err(Error::NotPositiveDefinite);
        }
        jitter = scale * base;
        scale *= policy.growth;
    }
}

fn try_factor(a: &DenseMatrix, jitter: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `(L L^T) x = b` by forward then backward substitution.
pub fn solve_cholesky(f: &CholeskyFactor, b: &DenseVector) -> Result<DenseVector> {
    let z = f.solve_lower(b)?;
    f.solve_upper(&z)
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_DIAG_REL: f64 = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `1e-12 * ||a||_F` or 100 sweeps elapse. Returns eigenvalues sorted
/// descending and the matching orthonormal eigenvectors as columns.
pub fn sym_eigen(a: &DenseMatrix) -> Result<(DenseVector, DenseMatrix)> {
    if a.rows() != a.cols() || !a.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric);
    }
    let n = a.rows();
    let mut m = a.clone();
    // Work on an exactly symmetric copy so rotations stay consistent.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = JACOBI_OFF_DIAG_REL * a.frobenius_norm();

    let mut converged = off_diag_norm(&m) <= target;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        converged = off_diag_norm(&m) <= target;
    }
    if !converged {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }

    // Sort eigenpairs by descending eigenvalue; stable order on ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let values = DenseVector::from(order.iter().map(|&i| m[(i, i)]).collect::<Vec<_>>());
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok((values, vectors))
}

fn off_diag_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing `m[p][q]`, accumulated into `v`.
fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    // Skip rotations that cannot change anything at f64 precision.
    if apq.abs() <= f64::EPSILON * 1e-3 * (m[(p, p)].abs() + m[(q, q)].abs()).max(f64::MIN_POSITIVE)
    {
        m[(p, q)] = 0.0;
        m[(q, p)] = 0.0;
        return;
    }
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    let n = m.rows();
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k != p && k != q {
            let akp = m[(k, p)];
            let akq = m[(k, q)];
            m[(k, p)] = akp - s * (akq + tau * akp);
            m[(p, k)] = m[(k, p)];
            m[(k, q)] = akq + s * (akp - tau * akq);
            m[(q, k)] = m[(k, q)];
        }
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp - s * (vkq + tau * vkp);
        v[(k, q)] = vkq + s * (vkp - tau * vkq);
    }
}
