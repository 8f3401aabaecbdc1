//! EOF (principal component) reduction of spatial fields.
//!
//! Fields are rows of a samples-by-gridpoints matrix. The basis comes from
//! the eigendecomposition of the centered sample Gram matrix — sample
//! counts here are small, so the n-by-n Gram route is much cheaper than a
//! full SVD of the field matrix. Regressors consume the projected
//! coefficients and predictions are mapped back through
//! [`EofBasis::reconstruct`].

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, DenseMatrix, DenseVector};

/// Truncated orthonormal basis of spatial patterns.
#[derive(Debug, Clone)]
pub struct EofBasis {
    /// Column means of the training fields, length = gridpoints.
    pub mean_field: DenseVector,
    /// One orthonormal spatial pattern per row, k rows.
    pub components: DenseMatrix,
    /// Descending, non-negative; zero for padding components beyond the
    /// data rank.
    pub singular_values: DenseVector,
    pub k: usize,
    /// Sum of all Gram eigenvalues at fit time (kept and discarded), i.e.
    /// the total centered variance. Denominator for explained-variance
    /// fractions.
    pub total_variance: f64,
}

impl EofBasis {
    /// Coefficients of `fields` in this basis: `(fields - mean) C^T`.
    pub fn project(&self, fields: &DenseMatrix) -> Result<DenseMatrix> {
        let p = self.mean_field.len();
        if fields.cols() != p {
            return Err(Error::DimensionMismatch(format!(
                "fields have {} gridpoints, basis has {p}",
                fields.cols()
            )));
        }
        let mut coeffs = DenseMatrix::zeros(fields.rows(), self.k);
        for s in 0..fields.rows() {
            let row = fields.row(s);
            for c in 0..self.k {
                let comp = self.components.row(c);
                let mut acc = 0.0;
                for g in 0..p {
                    acc += (row[g] - self.mean_field[g]) * comp[g];
                }
                coeffs[(s, c)] = acc;
            }
        }
        Ok(coeffs)
    }

    /// Fields from coefficients: `coeffs C + mean`.
    pub fn reconstruct(&self, coeffs: &DenseMatrix) -> Result<DenseMatrix> {
        if coeffs.cols() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients per row, basis has k = {}",
                coeffs.cols(),
                self.k
            )));
        }
        let p = self.mean_field.len();
        let mut fields = DenseMatrix::zeros(coeffs.rows(), p);
        for s in 0..coeffs.rows() {
            for g in 0..p {
                let mut acc = self.mean_field[g];
                for c in 0..self.k {
                    acc += coeffs[(s, c)] * self.components[(c, g)];
                }
                fields[(s, g)] = acc;
            }
        }
        Ok(fields)
    }

    /// Fraction of total variance captured by each kept component.
    /// Entries are descending and sum to at most 1.
    pub fn explained_variance_fractions(&self) -> Vec<f64> {
        let total = self.total_variance;
        self.singular_values
            .as_slice()
            .iter()
            .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
            .collect()
    }
}

/// Fits a k-component basis to `fields` (samples x gridpoints).
///
/// The sign convention makes the result deterministic: each component is
/// flipped so that its entry of largest magnitude (lowest index on ties)
/// is positive.
pub fn eof_fit(fields: &DenseMatrix, k: usize) -> Result<EofBasis> {
    let n = fields.rows();
    let p = fields.cols();
    if n == 0 || p == 0 {
        return Err(Error::EmptyInput);
    }
    let max_k = n.min(p);
    if k == 0 || k > max_k {
        return Err(Error::KTooLarge { k, max: max_k });
    }

    let mean_field = DenseVector::from(
        (0..p)
            .map(|g| (0..n).map(|s| fields[(s, g)]).sum::<f64>() / n as f64)
            .collect::<Vec<f64>>(),
    );
    let mut centered = fields.clone();
    for s in 0..n {
        for g in 0..p {
            centered[(s, g)] -= mean_field[g];
        }
    }

    // Gram matrix of the centered samples.
    let gram = centered.matmul(&centered.transpose())?;
    let (eigvals, eigvecs) = sym_eigen(&gram)?;
    let total_variance: f64 = eigvals.as_slice().iter().map(|l| l.max(0.0)).sum();
    let rank_floor = 1e-12 * eigvals[0].max(0.0);

    let mut components = DenseMatrix::zeros(k, p);
    let mut singular_values = DenseVector::zeros(k);
    for c in 0..k {
        let lambda = eigvals[c].max(0.0);
        if lambda > rank_floor && lambda > 0.0 {
            // Spatial pattern: X^T u, normalized.
            let mut pattern = vec![0.0; p];
            for s in 0..n {
                let u = eigvecs[(s, c)];
                if u != 0.0 {
                    let row = centered.row(s);
                    for g in 0..p {
                        pattern[g] += u * row[g];
                    }
                }
            }
            let norm = pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in pattern.iter_mut() {
                *v /= norm;
            }
            singular_values[c] = lambda.sqrt();
            for g in 0..p {
                components[(c, g)] = pattern[g];
            }
        } else {
            // Beyond the data rank: pad with a deterministic unit vector
            // orthogonal to everything kept so far. Its projection
            // coefficients vanish, so reconstruction is unaffected.
            let pattern = orthogonal_filler(&components, c, p);
            singular_values[c] = 0.0;
            for g in 0..p {
                components[(c, g)] = pattern[g];
            }
        }
        apply_sign_convention(&mut components, c);
    }

    Ok(EofBasis {
        mean_field,
        components,
        singular_values,
        k,
        total_variance,
    })
}

/// First canonical basis vector with a substantial residual after removing
/// the span of rows `0..filled`; Gram-Schmidt makes it orthonormal.
fn orthogonal_filler(components: &DenseMatrix, filled: usize, p: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..p {
        let mut cand = vec![0.0; p];
        cand[e] = 1.0;
        for r in 0..filled {
            let row = components.row(r);
            let proj: f64 = row[e];
            for g in 0..p {
                cand[g] -= proj * row[g];
            }
        }
        let norm2: f64 = cand.iter().map(|v| v * v).sum();
        if norm2 > 0.25 {
            let norm = norm2.sqrt();
            for v in cand.iter_mut() {
                *v /= norm;
            }
            return cand;
        }
        if best.as_ref().map_or(true, |(n2, _)| norm2 > *n2) {
            best = Some((norm2, cand));
        }
    }
    let (norm2, mut cand) = best.expect("p > 0");
    let norm = norm2.sqrt().max(f64::MIN_POSITIVE);
    for v in cand.iter_mut() {
        *v /= norm;
    }
    cand
}

/// Flips row `c` so its largest-magnitude entry (lowest index on ties) is
/// positive.
fn apply_sign_convention(components: &mut DenseMatrix, c: usize) {
    let p = components.cols();
    let mut arg = 0;
    let mut best = components[(c, 0)].abs();
    for g in 1..p {
        let mag = components[(c, g)].abs();
        if mag > best {
            best = mag;
            arg = g;
        }
    }
    if components[(c, arg)] < 0.0 {
        for g in 0..p {
            components[(c, g)] = -components[(c, g)];
        }
    }
}
