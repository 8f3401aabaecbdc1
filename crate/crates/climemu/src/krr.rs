//! Kernel ridge regression: closed-form dual solve of `(K + lambda I) alpha
//! = y - b` with the training-target mean as bias, plus k-fold
//! cross-validated grid search over kernels and regularization strengths.
//!
//! The regularizer is `lambda I` with no sample-count scaling, which makes
//! `lambda = sigma^2` line up exactly with the GP posterior mean.

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, kernel_matrix_self, print_kernel, KernelExpr};
use crate::linalg::{cholesky, solve_cholesky, DenseMatrix, DenseVector, JitterPolicy};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fitted kernel ridge regressor.
#[derive(Debug, Clone)]
pub struct KrrModel {
    pub x_train: DenseMatrix,
    pub alpha: DenseVector,
    /// Training-target mean, added back at prediction (0 when fitted
    /// uncentered).
    pub bias: f64,
    pub kernel: KernelExpr,
    pub lambda: f64,
}

impl KrrModel {
    pub fn fit(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        lambda: f64,
    ) -> Result<KrrModel> {
        fit_impl(x, y, kernel, lambda, true)
    }

    /// Fit with the bias forced to zero (oracle tests, GPR equivalence).
    pub fn fit_uncentered(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        lambda: f64,
    ) -> Result<KrrModel> {
        fit_impl(x, y, kernel, lambda, false)
    }

    /// `f(q) = sum_i alpha_i k(x_i, q) + bias` per query row.
    pub fn predict(&self, xq: &DenseMatrix) -> Result<DenseVector> {
        if xq.cols() != self.x_train.cols() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} columns, training data has {}",
                xq.cols(),
                self.x_train.cols()
            )));
        }
        let n = self.x_train.rows();
        let mut out = DenseVector::zeros(xq.rows());
        for q in 0..xq.rows() {
            let mut s = self.bias;
            for i in 0..n {
                s += self.alpha[i]
                    * eval_kernel(&self.kernel, self.x_train.row(i), xq.row(q))
                        .expect("dimensions checked by caller");
            }
            out[q] = s;
        }
        Ok(out)
    }
}

fn fit_impl(
    x: &DenseMatrix,
    y: &DenseVector,
    kernel: &KernelExpr,
    lambda: f64,
    center: bool,
) -> Result<KrrModel> {
    if x.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} training rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidHyperparameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    kernel.validate()?;

    let bias = if center { y.mean() } else { 0.0 };
    let centered = DenseVector::from(
        y.as_slice().iter().map(|v| v - bias).collect::<Vec<f64>>(),
    );
    let mut k = kernel_matrix_self(kernel, x).m;
    k.add_diagonal(lambda);
    let factor = cholesky(&k, JitterPolicy::default())?;
    let alpha = solve_cholesky(&factor, &centered)?;
    Ok(KrrModel {
        x_train: x.clone(),
        alpha,
        bias,
        kernel: kernel.clone(),
        lambda,
    })
}

/// Cross-validation grid: every (kernel, lambda) combination is scored.
#[derive(Debug, Clone)]
pub struct CvGrid {
    pub lambdas: Vec<f64>,
    pub kernel_candidates: Vec<KernelExpr>,
    pub folds: usize,
}

impl CvGrid {
    /// Default search space: lambda in {1e-6, 1e-4, 1e-2, 1, 1e2}, Matern
    /// 3/2 and RBF kernels with lengthscales {0.5, 1, 2, 5}, 5 folds.
    pub fn default_grid() -> Self {
        let mut kernels = Vec::new();
        for ls in [0.5, 1.0, 2.0, 5.0] {
            kernels.push(KernelExpr::Matern32 {
                lengthscale: ls,
                variance: 1.0,
            });
        }
        for ls in [0.5, 1.0, 2.0, 5.0] {
            kernels.push(KernelExpr::Rbf {
                lengthscale: ls,
                variance: 1.0,
            });
        }
        CvGrid {
            lambdas: vec![1e-6, 1e-4, 1e-2, 1.0, 1e2],
            kernel_candidates: kernels,
            folds: 5,
        }
    }
}

/// Mean validation RMSE of one grid candidate.
#[derive(Debug, Clone)]
pub struct CvEntry {
    /// Canonical kernel text (stable across runs).
    pub kernel: String,
    pub lambda: f64,
    pub mean_rmse: f64,
}

/// Seeded k-fold cross-validation over the grid.
///
/// Folds are a seeded shuffle of the row indices followed by contiguous
/// splits. The winner minimizes mean validation RMSE, ties resolving to the
/// first candidate in (kernel, lambda) iteration order, and is refit on the
/// full data.
pub fn cv_select(
    x: &DenseMatrix,
    y: &DenseVector,
    grid: &CvGrid,
    seed: u64,
) -> Result<(KrrModel, Vec<CvEntry>)> {
    if grid.lambdas.is_empty() || grid.kernel_candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let n = x.rows();
    if grid.folds < 2 {
        return Err(Error::TooFewSamples(format!(
            "need at least 2 folds, got {}",
            grid.folds
        )));
    }
    if grid.folds > n {
        return Err(Error::TooFewSamples(format!(
            "{} folds for {} samples",
            grid.folds, n
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let folds = contiguous_folds(&indices, grid.folds);

    let mut table = Vec::new();
    let mut best: Option<(f64, &KernelExpr, f64)> = None;
    for kernel in &grid.kernel_candidates {
        for &lambda in &grid.lambdas {
            let mut sum_rmse = 0.0;
            for fold in &folds {
                let (xt, yt) = subset(x, y, &complement(&indices, fold));
                let (xv, yv) = subset(x, y, fold);
                let model = KrrModel::fit(&xt, &yt, kernel, lambda)?;
                let pred = model.predict(&xv)?;
                let mse: f64 = pred
                    .as_slice()
                    .iter()
                    .zip(yv.as_slice())
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / yv.len() as f64;
                sum_rmse += mse.sqrt();
            }
            let mean_rmse = sum_rmse / folds.len() as f64;
            table.push(CvEntry {
                kernel: print_kernel(kernel),
                lambda,
                mean_rmse,
            });
            let better = match best {
                None => true,
                Some((best_rmse, _, _)) => mean_rmse < best_rmse,
            };
            if better {
                best = Some((mean_rmse, kernel, lambda));
            }
        }
    }
    let (_, kernel, lambda) = best.expect("non-empty grid");
    let model = KrrModel::fit(x, y, kernel, lambda)?;
    Ok((model, table))
}

fn contiguous_folds(indices: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = indices.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }
    folds
}

fn complement(all: &[usize], exclude: &[usize]) -> Vec<usize> {
    all.iter()
        .filter(|i| !exclude.contains(i))
        .copied()
        .collect()
}

fn subset(x: &DenseMatrix, y: &DenseVector, rows: &[usize]) -> (DenseMatrix, DenseVector) {
    let mut data = Vec::with_capacity(rows.len() * x.cols());
    let mut targets = Vec::with_capacity(rows.len());
    for &r in rows {
        data.extend_from_slice(x.row(r));
        targets.push(y[r]);
    }
    (
        DenseMatrix::new(rows.len(), x.cols(), data).expect("subset of valid matrix"),
        DenseVector::from(targets),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::GprModel;
    use crate::testutil::{gauss_jordan_inverse, random_inputs, random_kernel, random_vector, Lcg};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn rbf() -> KernelExpr {
        KernelExpr::Rbf {
            lengthscale: 1.0,
            variance: 1.0,
        }
    }

    #[test]
    fn single_point_uncentered_scalar_solve() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![2.0]);
        let m = KrrModel::fit_uncentered(&x, &y, &rbf(), 1.0).unwrap();
        // (1 + 1) alpha = 2
        assert_close(m.alpha[0], 1.0, 1e-12);
    }

    #[test]
    fn white_kernel_halves_centered_targets() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = DenseVector::from(vec![1.0, 2.0, 6.0]);
        let k = KernelExpr::White { variance: 1.0 };
        let m = KrrModel::fit(&x, &y, &k, 1.0).unwrap();
        // (I + I) alpha = y - mean(y)
        for i in 0..3 {
            assert_close(m.alpha[i], (y[i] - 3.0) / 2.0, 1e-12);
        }
    }

    #[test]
    fn defining_equation_holds() {
        let mut rng = Lcg::new(8);
        for _ in 0..10 {
            let n = 2 + rng.index(20);
            let x = random_inputs(&mut rng, n, 2);
            let y = random_vector(&mut rng, n);
            let kernel = random_kernel(&mut rng, 2, false);
            let lambda = rng.range(1e-3, 1.0);
            let m = KrrModel::fit(&x, &y, &kernel, lambda).unwrap();
            let mut k = kernel_matrix_self(&kernel, &x).m;
            k.add_diagonal(lambda);
            let back = k.matvec(&m.alpha).unwrap();
            for i in 0..n {
                assert_close(back[i], y[i] - m.bias, 1e-8);
            }
        }
    }

    #[test]
    fn alpha_matches_explicit_inverse_oracle() {
        let mut rng = Lcg::new(12);
        for _ in 0..10 {
            let n = 2 + rng.index(8);
            let x = random_inputs(&mut rng, n, 2);
            let y = random_vector(&mut rng, n);
            let kernel = random_kernel(&mut rng, 2, false);
            let lambda = rng.range(1e-2, 1.0);
            let m = KrrModel::fit(&x, &y, &kernel, lambda).unwrap();
            let mut k = kernel_matrix_self(&kernel, &x).m;
            k.add_diagonal(lambda);
            let inv = gauss_jordan_inverse(&k).unwrap();
            let centered = DenseVector::from(
                y.as_slice().iter().map(|v| v - m.bias).collect::<Vec<f64>>(),
            );
            let oracle = inv.matvec(&centered).unwrap();
            for i in 0..n {
                assert_close(m.alpha[i], oracle[i], 1e-8);
            }
        }
    }

    #[test]
    fn tiny_lambda_interpolates() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.2]]).unwrap();
        let y = DenseVector::from(vec![0.5, -0.3, 1.8]);
        let m = KrrModel::fit(&x, &y, &rbf(), 1e-12).unwrap();
        let pred = m.predict(&x).unwrap();
        for i in 0..3 {
            assert_close(pred[i], y[i], 1e-6);
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_bias() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = DenseVector::from(vec![2.0, 6.0]);
        let m = KrrModel::fit(&x, &y, &rbf(), 1e9).unwrap();
        let pred = m.predict(&x).unwrap();
        for i in 0..2 {
            assert_close(pred[i], 4.0, 1e-6);
        }
    }

    #[test]
    fn matches_gpr_mean_with_lambda_equal_noise() {
        let mut rng = Lcg::new(55);
        for _ in 0..10 {
            let n = 2 + rng.index(49);
            let d = 1 + rng.index(5);
            let x = random_inputs(&mut rng, n, d);
            let y = random_vector(&mut rng, n);
            let q = random_inputs(&mut rng, 5, d);
            let kernel = random_kernel(&mut rng, 2, true);
            let noise = rng.range(1e-3, 1.0);
            let krr = KrrModel::fit_uncentered(&x, &y, &kernel, noise).unwrap();
            let gpr = GprModel::fit_uncentered(&x, &y, &kernel, noise).unwrap();
            let krr_pred = krr.predict(&q).unwrap();
            let gpr_post = gpr.predict(&q).unwrap();
            for t in 0..5 {
                assert_close(krr_pred[t], gpr_post.mean[t], 1e-8);
            }
        }
    }

    #[test]
    fn alpha_norm_shrinks_with_lambda() {
        let mut rng = Lcg::new(61);
        let x = random_inputs(&mut rng, 15, 2);
        let y = random_vector(&mut rng, 15);
        let mut prev = f64::INFINITY;
        for lambda in [1e-4, 1e-2, 1.0, 1e2] {
            let m = KrrModel::fit(&x, &y, &rbf(), lambda).unwrap();
            let norm = m.alpha.norm();
            assert!(norm <= prev + 1e-12, "alpha norm grew with lambda");
            prev = norm;
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        assert!(matches!(
            KrrModel::fit(&x, &y, &rbf(), 0.0),
            Err(Error::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn cv_single_candidate_equals_full_fit() {
        let mut rng = Lcg::new(2);
        let x = random_inputs(&mut rng, 10, 1);
        let y = random_vector(&mut rng, 10);
        let grid = CvGrid {
            lambdas: vec![1e-2],
            kernel_candidates: vec![rbf()],
            folds: 5,
        };
        let (model, table) = cv_select(&x, &y, &grid, 7).unwrap();
        let direct = KrrModel::fit(&x, &y, &rbf(), 1e-2).unwrap();
        assert_eq!(model.alpha, direct.alpha);
        assert_eq!(table.len(), 1);
        assert!(table[0].mean_rmse.is_finite() && table[0].mean_rmse >= 0.0);
    }

    #[test]
    fn cv_is_deterministic_for_a_seed() {
        let mut rng = Lcg::new(3);
        let x = random_inputs(&mut rng, 20, 2);
        let y = random_vector(&mut rng, 20);
        let grid = CvGrid::default_grid();
        let (m1, t1) = cv_select(&x, &y, &grid, 42).unwrap();
        let (m2, t2) = cv_select(&x, &y, &grid, 42).unwrap();
        assert_eq!(m1.lambda, m2.lambda);
        assert_eq!(m1.kernel, m2.kernel);
        assert_eq!(m1.alpha, m2.alpha);
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.kernel, b.kernel);
            assert_eq!(a.mean_rmse.to_bits(), b.mean_rmse.to_bits());
        }
    }

    #[test]
    fn cv_prefers_moderate_lambda_under_noise() {
        // Noisy samples of a smooth function: the middle of a very wide
        // lambda grid should win most of the time.
        let truth = |x: f64| (x * 0.8).sin() + 0.3 * x;
        let grid = CvGrid {
            lambdas: vec![1e-9, 1e-2, 1e4],
            kernel_candidates: vec![rbf()],
            folds: 5,
        };
        let mut hits = 0;
        for seed in 0..50u64 {
            let mut rng = Lcg::new(9000 + seed);
            let n = 40;
            let xs: Vec<f64> = (0..n).map(|_| rng.range(0.0, 6.0)).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| truth(x) + 0.4 * rng.normal()).collect();
            let x = DenseMatrix::new(n, 1, xs).unwrap();
            let y = DenseVector::from(ys);
            let (model, _) = cv_select(&x, &y, &grid, seed).unwrap();
            if model.lambda == 1e-2 {
                hits += 1;
            }
        }
        assert!(hits >= 40, "middle lambda selected only {hits}/50 times");
    }

    #[test]
    fn cv_table_entries_are_finite_and_nonnegative() {
        let mut rng = Lcg::new(29);
        let x = random_inputs(&mut rng, 15, 2);
        let y = random_vector(&mut rng, 15);
        let (_, table) = cv_select(&x, &y, &CvGrid::default_grid(), 5).unwrap();
        assert_eq!(table.len(), 40);
        for e in &table {
            assert!(e.mean_rmse.is_finite() && e.mean_rmse >= 0.0);
        }
    }

    #[test]
    fn cv_rejects_more_folds_than_samples() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = DenseVector::from(vec![1.0, 2.0]);
        let grid = CvGrid {
            lambdas: vec![1e-2],
            kernel_candidates: vec![rbf()],
            folds: 5,
        };
        assert!(matches!(
            cv_select(&x, &y, &grid, 0),
            Err(Error::TooFewSamples(_))
        ));
    }
}
