//! Exact Gaussian process regression.
//!
//! Fitting factorizes `K + sigma^2 I` once with Cholesky; prediction
//! conditions the joint Gaussian on the training targets to get a posterior
//! mean and per-point variance. Targets are centered by their scalar mean
//! before the solve (the zero-mean prior convention) and the mean is added
//! back at prediction time; `fit_uncentered` skips this for oracle tests.
//!
//! Hyperparameters are selected by exhaustive grid search over the log
//! marginal likelihood — deterministic and cheap at the sample counts this
//! toolkit targets.

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, kernel_matrix_self, KernelExpr};
use crate::linalg::{cholesky, solve_cholesky, CholeskyFactor, DenseMatrix, DenseVector, JitterPolicy};

/// Fitted GP regressor.
#[derive(Debug, Clone)]
pub struct GprModel {
    pub x_train: DenseMatrix,
    /// Solution of `(K + sigma^2 I) alpha = y - y_mean`.
    pub alpha: DenseVector,
    pub factor: CholeskyFactor,
    pub kernel: KernelExpr,
    pub noise_variance: f64,
    /// Scalar subtracted from the targets before the solve (0 when fitted
    /// uncentered).
    pub y_mean: f64,
}

/// Per-point posterior mean and variance.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DenseVector,
    /// Clamped to `[0, inf)`.
    pub variance: DenseVector,
}

impl Posterior {
    /// Symmetric confidence interval `mean +- z * sqrt(variance)`.
    /// `z = 1.96` gives the usual 95% band.
    pub fn interval(&self, z: f64) -> (DenseVector, DenseVector) {
        let lo: Vec<f64> = self
            .mean
            .as_slice()
            .iter()
            .zip(self.variance.as_slice())
            .map(|(m, v)| m - z * v.sqrt())
            .collect();
        let hi: Vec<f64> = self
            .mean
            .as_slice()
            .iter()
            .zip(self.variance.as_slice())
            .map(|(m, v)| m + z * v.sqrt())
            .collect();
        (DenseVector::from(lo), DenseVector::from(hi))
    }
}

impl GprModel {
    /// Fits with target centering.
    pub fn fit(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        noise_variance: f64,
    ) -> Result<GprModel> {
        fit_impl(x, y, kernel, noise_variance, true)
    }

    /// Fits against the raw targets (zero prior mean taken literally).
    pub fn fit_uncentered(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        noise_variance: f64,
    ) -> Result<GprModel> {
        fit_impl(x, y, kernel, noise_variance, false)
    }

    /// Posterior at the query rows.
    pub fn predict(&self, xq: &DenseMatrix) -> Result<Posterior> {
        if xq.cols() != self.x_train.cols() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} columns, training data has {}",
                xq.cols(),
                self.x_train.cols()
            )));
        }
        let n = self.x_train.rows();
        let mut mean = DenseVector::zeros(xq.rows());
        let mut variance = DenseVector::zeros(xq.rows());
        for q in 0..xq.rows() {
            let kstar = DenseVector::from(
                (0..n)
                    .map(|i| self.kernel_value(self.x_train.row(i), xq.row(q)))
                    .collect::<Vec<f64>>(),
            );
            mean[q] = self.y_mean + kstar.dot(&self.alpha);
            let v = self.factor.solve_lower(&kstar)?;
            let prior = self.kernel_value(xq.row(q), xq.row(q));
            variance[q] = (prior - v.dot(&v)).max(0.0);
        }
        Ok(Posterior { mean, variance })
    }

    /// Log marginal likelihood of the training targets used at fit time:
    /// `-1/2 (y - y_mean)^T alpha - sum_i log l_ii - n/2 log(2 pi)`.
    pub fn log_marginal_likelihood(&self, y: &DenseVector) -> Result<f64> {
        let n = self.x_train.rows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} training rows",
                y.len(),
                n
            )));
        }
        let quad: f64 = y
            .as_slice()
            .iter()
            .zip(self.alpha.as_slice())
            .map(|(yi, ai)| (yi - self.y_mean) * ai)
            .sum();
        Ok(-0.5 * quad
            - self.factor.sum_log_diag()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    fn kernel_value(&self, a: &[f64], b: &[f64]) -> f64 {
        // Dimensions were checked at the call boundary.
        eval_kernel(&self.kernel, a, b).expect("dimensions checked by caller")
    }
}

fn fit_impl(
    x: &DenseMatrix,
    y: &DenseVector,
    kernel: &KernelExpr,
    noise_variance: f64,
    center: bool,
) -> Result<GprModel> {
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
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::InvalidHyperparameter(format!(
            "noise variance must be >= 0, got {noise_variance}"
        )));
    }
    kernel.validate()?;

    let y_mean = if center { y.mean() } else { 0.0 };
    let centered = DenseVector::from(
        y.as_slice()
            .iter()
            .map(|v| v - y_mean)
            .collect::<Vec<f64>>(),
    );
    let mut k = kernel_matrix_self(kernel, x).m;
    k.add_diagonal(noise_variance);
    let factor = cholesky(&k, JitterPolicy::default())?;
    let alpha = solve_cholesky(&factor, &centered)?;
    Ok(GprModel {
        x_train: x.clone(),
        alpha,
        factor,
        kernel: kernel.clone(),
        noise_variance,
        y_mean,
    })
}

/// Hyperparameter lists swept by [`grid_select`]. Iteration order is
/// lengthscale outer, variance middle, noise inner; ties keep the first
/// candidate encountered.
#[derive(Debug, Clone)]
pub struct GprGrid {
    pub lengthscales: Vec<f64>,
    pub variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

/// Fits every grid point of the kernel template and keeps the one with the
/// highest log marginal likelihood.
pub fn grid_select(
    x: &DenseMatrix,
    y: &DenseVector,
    template: &KernelExpr,
    grid: &GprGrid,
) -> Result<GprModel> {
    if grid.lengthscales.is_empty() || grid.variances.is_empty() || grid.noise_variances.is_empty()
    {
        return Err(Error::EmptyGrid);
    }
    let mut best: Option<(f64, GprModel)> = None;
    for &ls in &grid.lengthscales {
        for &var in &grid.variances {
            for &noise in &grid.noise_variances {
                let kernel = template.with_hyperparameters(ls, var);
                let model = GprModel::fit(x, y, &kernel, noise)?;
                let lml = model.log_marginal_likelihood(y)?;
                let better = match &best {
                    None => true,
                    Some((best_lml, _)) => lml > *best_lml,
                };
                if better {
                    best = Some((lml, model));
                }
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_matrix;
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
    fn single_point_centering_absorbs_target() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 0.0).unwrap();
        assert_eq!(m.y_mean, 1.0);
        assert_eq!(m.alpha.as_slice(), &[0.0]);
    }

    #[test]
    fn white_kernel_gives_centered_targets_as_alpha() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = DenseVector::from(vec![3.0, 5.0]);
        let k = KernelExpr::White { variance: 1.0 };
        let m = GprModel::fit(&x, &y, &k, 0.0).unwrap();
        assert_close(m.alpha[0], -1.0, 1e-12);
        assert_close(m.alpha[1], 1.0, 1e-12);
    }

    #[test]
    fn defining_equation_holds() {
        let mut rng = Lcg::new(21);
        for _ in 0..10 {
            let n = 2 + rng.index(20);
            let d = 1 + rng.index(4);
            let x = random_inputs(&mut rng, n, d);
            let y = random_vector(&mut rng, n);
            let kernel = random_kernel(&mut rng, 2, false);
            let noise = rng.range(0.0, 0.5);
            let m = GprModel::fit(&x, &y, &kernel, noise).unwrap();
            let mut k = kernel_matrix_self(&kernel, &x).m;
            k.add_diagonal(noise + m.factor.jitter_applied());
            let back = k.matvec(&m.alpha).unwrap();
            for i in 0..n {
                assert_close(back[i], y[i] - m.y_mean, 1e-8);
            }
        }
    }

    #[test]
    fn single_point_conditioning_by_hand() {
        // mu* = k k** ... for one training point: mean = k*/k * y,
        // var = k** - k*^2/k.
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        let m = GprModel::fit_uncentered(&x, &y, &rbf(), 0.0).unwrap();
        let q = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let p = m.predict(&q).unwrap();
        assert_close(p.mean[0], (-0.5_f64).exp(), 1e-10);
        assert_close(p.mean[0], 0.60653, 1e-5);
        assert_close(p.variance[0], 1.0 - (-1.0_f64).exp(), 1e-10);
        assert_close(p.variance[0], 0.63212, 1e-5);
    }

    #[test]
    fn noiseless_fit_interpolates_training_points() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.5]]).unwrap();
        let y = DenseVector::from(vec![0.3, -1.2, 2.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 0.0).unwrap();
        let p = m.predict(&x).unwrap();
        for i in 0..3 {
            assert_close(p.mean[i], y[i], 1e-8);
            assert!(p.variance[i] <= 1e-8);
        }
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = DenseVector::from(vec![2.0, 4.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 1e-4).unwrap();
        let q = DenseMatrix::from_rows(&[vec![25.0]]).unwrap();
        let p = m.predict(&q).unwrap();
        assert_close(p.mean[0], 3.0, 1e-6); // y_mean
        assert_close(p.variance[0], 1.0, 1e-6); // prior k(x,x)
    }

    #[test]
    fn lml_single_point_scalar_formula() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        // k(x,x) + sigma^2 = 1
        let m = GprModel::fit_uncentered(&x, &y, &rbf(), 0.0).unwrap();
        let lml = m.log_marginal_likelihood(&y).unwrap();
        assert_close(lml, -1.418939, 1e-6);
    }

    #[test]
    fn lml_is_stationary_at_variance_equal_y_squared() {
        // For one point, LML(v) = -y^2/(2v) - log(v)/2 - log(2 pi)/2 peaks
        // at v = y^2; check by central finite difference.
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let yv = 1.7;
        let y = DenseVector::from(vec![yv]);
        let v_star = yv * yv;
        let h = 1e-4;
        let lml_at = |v: f64| {
            let kernel = KernelExpr::Rbf {
                lengthscale: 1.0,
                variance: v,
            };
            let m = GprModel::fit_uncentered(&x, &y, &kernel, 0.0).unwrap();
            m.log_marginal_likelihood(&y).unwrap()
        };
        let deriv = (lml_at(v_star + h) - lml_at(v_star - h)) / (2.0 * h);
        assert!(deriv.abs() <= 1e-6, "finite-difference slope {deriv}");
        // And it is a maximum: both neighbours sit below.
        let peak = lml_at(v_star);
        assert!(lml_at(v_star + 0.5) < peak);
        assert!(lml_at(v_star - 0.5) < peak);
    }

    #[test]
    fn lml_with_constant_targets_drops_quadratic_term() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = DenseVector::from(vec![4.0, 4.0, 4.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 0.1).unwrap();
        let lml = m.log_marginal_likelihood(&y).unwrap();
        let expect = -m.factor.sum_log_diag() - 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert_close(lml, expect, 1e-12);
    }

    #[test]
    fn grid_of_one_point_equals_direct_fit() {
        let mut rng = Lcg::new(4);
        let x = random_inputs(&mut rng, 8, 2);
        let y = random_vector(&mut rng, 8);
        let grid = GprGrid {
            lengthscales: vec![1.4],
            variances: vec![0.9],
            noise_variances: vec![1e-3],
        };
        let selected = grid_select(&x, &y, &KernelExpr::default_matern32(), &grid).unwrap();
        let direct = GprModel::fit(
            &x,
            &y,
            &KernelExpr::Matern32 {
                lengthscale: 1.4,
                variance: 0.9,
            },
            1e-3,
        )
        .unwrap();
        assert_eq!(selected.alpha, direct.alpha);
        assert_eq!(selected.kernel, direct.kernel);
        assert_eq!(selected.noise_variance, 1e-3);
    }

    #[test]
    fn grid_ties_keep_first_candidate() {
        let mut rng = Lcg::new(9);
        let x = random_inputs(&mut rng, 6, 1);
        let y = random_vector(&mut rng, 6);
        let grid = GprGrid {
            lengthscales: vec![2.0, 2.0],
            variances: vec![1.0],
            noise_variances: vec![1e-2, 1e-2],
        };
        let selected = grid_select(&x, &y, &KernelExpr::default_matern32(), &grid).unwrap();
        // Duplicates tie on LML exactly; the first (ls, var, noise) wins.
        assert_eq!(selected.noise_variance, 1e-2);
        assert_eq!(
            selected.kernel,
            KernelExpr::Matern32 {
                lengthscale: 2.0,
                variance: 1.0
            }
        );
    }

    #[test]
    fn empty_grid_is_an_error() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        let grid = GprGrid {
            lengthscales: vec![],
            variances: vec![1.0],
            noise_variances: vec![1e-2],
        };
        assert!(matches!(
            grid_select(&x, &y, &rbf(), &grid),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn grid_recovers_generating_lengthscale() {
        // Draw functions from a Matern 3/2 prior with ls = 2 and check the
        // grid picks ls = 2 in at least 80% of seeded replications.
        let truth = KernelExpr::Matern32 {
            lengthscale: 2.0,
            variance: 1.0,
        };
        let grid = GprGrid {
            lengthscales: vec![1.0, 2.0, 4.0],
            variances: vec![1.0],
            noise_variances: vec![1e-6],
        };
        let mut hits = 0;
        for seed in 0..50u64 {
            let mut rng = Lcg::new(1000 + seed);
            let n = 40;
            let x = DenseMatrix::new(n, 1, (0..n).map(|_| rng.range(0.0, 10.0)).collect()).unwrap();
            let mut cov = kernel_matrix_self(&truth, &x).m;
            cov.add_diagonal(1e-8);
            let f = cholesky(&cov, JitterPolicy::default()).unwrap();
            let z = DenseVector::from((0..n).map(|_| rng.normal()).collect::<Vec<f64>>());
            let mut y = DenseVector::zeros(n);
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..=i {
                    s += f.l()[(i, j)] * z[j];
                }
                y[i] = s;
            }
            let model = grid_select(&x, &y, &KernelExpr::default_matern32(), &grid).unwrap();
            if let KernelExpr::Matern32 { lengthscale, .. } = model.kernel {
                if lengthscale == 2.0 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 40, "ls=2 selected only {hits}/50 times");
    }

    #[test]
    fn posterior_matches_joint_gaussian_conditioning_oracle() {
        let mut rng = Lcg::new(31);
        for _ in 0..25 {
            let n = 1 + rng.index(10);
            let q = 1 + rng.index(3);
            let d = 1 + rng.index(3);
            let x = random_inputs(&mut rng, n, d);
            let y = random_vector(&mut rng, n);
            let xq = random_inputs(&mut rng, q, d);
            let kernel = random_kernel(&mut rng, 2, false);
            let noise = rng.range(1e-3, 0.5);
            let m = GprModel::fit_uncentered(&x, &y, &kernel, noise).unwrap();
            let p = m.predict(&xq).unwrap();

            // Oracle: mu* = K*^T (K + s I)^-1 y, S* = K** - K*^T (K+sI)^-1 K*.
            let mut kxx = kernel_matrix_self(&kernel, &x).m;
            kxx.add_diagonal(noise);
            let inv = gauss_jordan_inverse(&kxx).unwrap();
            let kxq = kernel_matrix(&kernel, &x, &xq).unwrap().m;
            let kqq = kernel_matrix_self(&kernel, &xq).m;
            let inv_y = inv.matvec(&y).unwrap();
            for t in 0..q {
                let kcol = kxq.col(t);
                let mean_oracle = kcol.dot(&inv_y);
                let var_oracle = kqq[(t, t)] - kcol.dot(&inv.matvec(&kcol).unwrap());
                assert_close(p.mean[t], mean_oracle, 1e-8);
                assert_close(p.variance[t], var_oracle.max(0.0), 1e-8);
            }
        }
    }

    #[test]
    fn posterior_variance_grows_with_noise() {
        let mut rng = Lcg::new(17);
        let x = random_inputs(&mut rng, 12, 2);
        let y = random_vector(&mut rng, 12);
        let q = random_inputs(&mut rng, 4, 2);
        let mut prev = vec![-1.0; 4];
        for noise in [1e-4, 1e-2, 1.0] {
            let m = GprModel::fit(&x, &y, &KernelExpr::default_matern32(), noise).unwrap();
            let p = m.predict(&q).unwrap();
            for t in 0..4 {
                assert!(
                    p.variance[t] >= prev[t] - 1e-12,
                    "variance decreased as noise grew"
                );
                prev[t] = p.variance[t];
            }
        }
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let mut rng = Lcg::new(23);
        for _ in 0..10 {
            let kernel = random_kernel(&mut rng, 2, false);
            let x = random_inputs(&mut rng, 10, 2);
            let y = random_vector(&mut rng, 10);
            let q = random_inputs(&mut rng, 5, 2);
            let m = GprModel::fit(&x, &y, &kernel, rng.range(0.0, 0.3)).unwrap();
            let p = m.predict(&q).unwrap();
            for t in 0..5 {
                let prior = eval_kernel(&kernel, q.row(t), q.row(t)).unwrap();
                assert!(p.variance[t] <= prior + 1e-10);
            }
        }
    }

    #[test]
    fn confidence_interval_brackets_mean() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = DenseVector::from(vec![1.0, 2.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 0.1).unwrap();
        let p = m.predict(&DenseMatrix::from_rows(&[vec![0.5]]).unwrap()).unwrap();
        let (lo, hi) = p.interval(1.96);
        assert!(lo[0] <= p.mean[0] && p.mean[0] <= hi[0]);
        let width = hi[0] - lo[0];
        assert_close(width, 2.0 * 1.96 * p.variance[0].sqrt(), 1e-12);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let x = DenseMatrix::zeros(0, 1);
        let y = DenseVector::zeros(0);
        assert!(matches!(
            GprModel::fit(&x, &y, &rbf(), 0.0),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let y = DenseVector::from(vec![1.0]);
        let m = GprModel::fit(&x, &y, &rbf(), 0.1).unwrap();
        let q = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(
            m.predict(&q),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
