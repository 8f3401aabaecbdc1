//! Kernel catalog and composition.
//!
//! A [`KernelExpr`] is an immutable tree of leaf kernels combined by sum and
//! product nodes. Leaves use a single isotropic lengthscale shared across
//! input dimensions. Closed forms, with `r = ||x - x'||`:
//!
//! * `linear`:   v * <x, x'>
//! * `rbf`:      v * exp(-r^2 / (2 l^2))
//! * `matern12`: v * exp(-r / l)                      (a.k.a. exponential)
//! * `matern32`: v * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l)
//! * `matern52`: v * (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) * exp(-sqrt(5) r / l)
//! * `white`:    v * [x == x'] (exact coordinate equality)
//! * `bias`:     v
//!
//! Expressions can be written as text, e.g.
//! `"matern32(ls=2, var=1.5) + white(var=0.1)"`; see [`parse_kernel`] for
//! the grammar.

mod parse;

pub use parse::{parse_kernel, print_kernel};

use crate::error::{Error, Result};
use crate::linalg::{dot, euclidean, DenseMatrix};

/// Composable covariance function.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Linear { variance: f64 },
    Rbf { lengthscale: f64, variance: f64 },
    Matern12 { lengthscale: f64, variance: f64 },
    Matern32 { lengthscale: f64, variance: f64 },
    Matern52 { lengthscale: f64, variance: f64 },
    White { variance: f64 },
    Bias { variance: f64 },
    Sum(Box<KernelExpr>, Box<KernelExpr>),
    Product(Box<KernelExpr>, Box<KernelExpr>),
}

impl KernelExpr {
    /// Matern 3/2 with unit variance, the toolkit's default family.
    pub fn default_matern32() -> Self {
        KernelExpr::Matern32 {
            lengthscale: 1.0,
            variance: 1.0,
        }
    }

    /// Checks the hyperparameter constraints: lengthscales strictly
    /// positive, variances non-negative, everything finite.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelExpr::Linear { variance }
            | KernelExpr::White { variance }
            | KernelExpr::Bias { variance } => check_variance(*variance),
            KernelExpr::Rbf {
                lengthscale,
                variance,
            }
            | KernelExpr::Matern12 {
                lengthscale,
                variance,
            }
            | KernelExpr::Matern32 {
                lengthscale,
                variance,
            }
            | KernelExpr::Matern52 {
                lengthscale,
                variance,
            } => {
                check_lengthscale(*lengthscale)?;
                check_variance(*variance)
            }
            KernelExpr::Sum(l, r) | KernelExpr::Product(l, r) => {
                l.validate()?;
                r.validate()
            }
        }
    }

    /// Copy of the tree with every lengthscale-bearing leaf set to `ls` and
    /// every leaf variance set to `var`. Used by grid search over simple
    /// kernel templates.
    pub fn with_hyperparameters(&self, ls: f64, var: f64) -> KernelExpr {
        match self {
            KernelExpr::Linear { .. } => KernelExpr::Linear { variance: var },
            KernelExpr::White { .. } => KernelExpr::White { variance: var },
            KernelExpr::Bias { .. } => KernelExpr::Bias { variance: var },
            KernelExpr::Rbf { .. } => KernelExpr::Rbf {
                lengthscale: ls,
                variance: var,
            },
            KernelExpr::Matern12 { .. } => KernelExpr::Matern12 {
                lengthscale: ls,
                variance: var,
            },
            KernelExpr::Matern32 { .. } => KernelExpr::Matern32 {
                lengthscale: ls,
                variance: var,
            },
            KernelExpr::Matern52 { .. } => KernelExpr::Matern52 {
                lengthscale: ls,
                variance: var,
            },
            KernelExpr::Sum(l, r) => KernelExpr::Sum(
                Box::new(l.with_hyperparameters(ls, var)),
                Box::new(r.with_hyperparameters(ls, var)),
            ),
            KernelExpr::Product(l, r) => KernelExpr::Product(
                Box::new(l.with_hyperparameters(ls, var)),
                Box::new(r.with_hyperparameters(ls, var)),
            ),
        }
    }

    fn eval_unchecked(&self, x: &[f64], xp: &[f64]) -> f64 {
        match self {
            KernelExpr::Linear { variance } => variance * dot(x, xp),
            KernelExpr::Bias { variance } => *variance,
            KernelExpr::White { variance } => {
                if x == xp {
                    *variance
                } else {
                    0.0
                }
            }
            KernelExpr::Rbf {
                lengthscale,
                variance,
            } => {
                let r = euclidean(x, xp);
                variance * (-r * r / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelExpr::Matern12 {
                lengthscale,
                variance,
            } => {
                let r = euclidean(x, xp);
                variance * (-r / lengthscale).exp()
            }
            KernelExpr::Matern32 {
                lengthscale,
                variance,
            } => {
                let z = 3.0_f64.sqrt() * euclidean(x, xp) / lengthscale;
                variance * (1.0 + z) * (-z).exp()
            }
            KernelExpr::Matern52 {
                lengthscale,
                variance,
            } => {
                let r = euclidean(x, xp);
                let z = 5.0_f64.sqrt() * r / lengthscale;
                variance * (1.0 + z + 5.0 * r * r / (3.0 * lengthscale * lengthscale))
                    * (-z).exp()
            }
            KernelExpr::Sum(l, r) => l.eval_unchecked(x, xp) + r.eval_unchecked(x, xp),
            KernelExpr::Product(l, r) => l.eval_unchecked(x, xp) * r.eval_unchecked(x, xp),
        }
    }
}

fn check_lengthscale(ls: f64) -> Result<()> {
    if ls > 0.0 && ls.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "lengthscale must be > 0, got {ls}"
        )))
    }
}

fn check_variance(var: f64) -> Result<()> {
    if var >= 0.0 && var.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "variance must be >= 0, got {var}"
        )))
    }
}

/// Covariance of two points under a kernel expression.
pub fn eval_kernel(k: &KernelExpr, x: &[f64], xp: &[f64]) -> Result<f64> {
    if x.len() != xp.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs of length {} and {}",
            x.len(),
            xp.len()
        )));
    }
    Ok(k.eval_unchecked(x, xp))
}

/// Kernel Gram matrix plus a flag recording whether it was built from a
/// single input set (and is therefore symmetric by construction).
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub m: DenseMatrix,
    pub symmetric: bool,
}

/// Cross-covariance matrix: entry (i, j) couples row i of `xs` with row j
/// of `xps`.
pub fn kernel_matrix(k: &KernelExpr, xs: &DenseMatrix, xps: &DenseMatrix) -> Result<KernelMatrix> {
    if xs.cols() != xps.cols() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs with {} and {} columns",
            xs.cols(),
            xps.cols()
        )));
    }
    let mut m = DenseMatrix::zeros(xs.rows(), xps.rows());
    for i in 0..xs.rows() {
        for j in 0..xps.rows() {
            m[(i, j)] = k.eval_unchecked(xs.row(i), xps.row(j));
        }
    }
    Ok(KernelMatrix {
        m,
        symmetric: false,
    })
}

/// Self-covariance matrix over one input set. Each unordered pair is
/// evaluated once, so the result is symmetric to the bit.
pub fn kernel_matrix_self(k: &KernelExpr, xs: &DenseMatrix) -> KernelMatrix {
    let n = xs.rows();
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k.eval_unchecked(xs.row(i), xs.row(j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    KernelMatrix { m, symmetric: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky, JitterPolicy};
    use crate::testutil::{random_inputs, random_kernel, Lcg};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matern32_zero_distance() {
        let k = KernelExpr::Matern32 {
            lengthscale: 1.0,
            variance: 1.0,
        };
        assert_eq!(eval_kernel(&k, &[0.3, -0.1], &[0.3, -0.1]).unwrap(), 1.0);
    }

    #[test]
    fn matern32_unit_distance() {
        let k = KernelExpr::Matern32 {
            lengthscale: 1.0,
            variance: 1.0,
        };
        let v = eval_kernel(&k, &[0.0], &[1.0]).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert_close(v, (1.0 + s3) * (-s3).exp(), 1e-14);
        assert_close(v, 0.48335, 1e-5);
    }

    #[test]
    fn rbf_unit_distance() {
        let k = KernelExpr::Rbf {
            lengthscale: 1.0,
            variance: 1.0,
        };
        let v = eval_kernel(&k, &[0.0], &[1.0]).unwrap();
        assert_close(v, (-0.5_f64).exp(), 1e-14);
        assert_close(v, 0.60653, 1e-5);
    }

    #[test]
    fn sum_of_bias_and_white_at_equal_inputs() {
        let k = KernelExpr::Sum(
            Box::new(KernelExpr::Bias { variance: 2.0 }),
            Box::new(KernelExpr::White { variance: 3.0 }),
        );
        assert_eq!(eval_kernel(&k, &[1.0], &[1.0]).unwrap(), 5.0);
        assert_eq!(eval_kernel(&k, &[1.0], &[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn eval_rejects_mismatched_dims() {
        let k = KernelExpr::default_matern32();
        assert!(eval_kernel(&k, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn white_self_matrix_is_identity() {
        let xs = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.5]]).unwrap();
        let k = KernelExpr::White { variance: 1.0 };
        let km = kernel_matrix_self(&k, &xs);
        assert!(km.symmetric);
        assert_eq!(km.m, DenseMatrix::identity(3));
    }

    #[test]
    fn linear_self_matrix_by_hand() {
        let xs = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let k = KernelExpr::Linear { variance: 1.0 };
        let km = kernel_matrix_self(&k, &xs);
        assert_eq!(
            km.m,
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap()
        );
    }

    #[test]
    fn cross_matrix_is_not_flagged_symmetric() {
        let xs = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let k = KernelExpr::default_matern32();
        let km = kernel_matrix(&k, &xs, &xs).unwrap();
        assert!(!km.symmetric);
    }

    #[test]
    fn self_matrix_exactly_symmetric() {
        let mut rng = Lcg::new(11);
        let xs = random_inputs(&mut rng, 8, 3);
        let k = random_kernel(&mut rng, 3, true);
        let km = kernel_matrix_self(&k, &xs);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(km.m[(i, j)].to_bits(), km.m[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn eval_symmetric_in_arguments() {
        let mut rng = Lcg::new(5);
        for _ in 0..50 {
            let k = random_kernel(&mut rng, 3, true);
            let x: Vec<f64> = (0..3).map(|_| rng.range(-2.0, 2.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.range(-2.0, 2.0)).collect();
            let a = eval_kernel(&k, &x, &y).unwrap();
            let b = eval_kernel(&k, &y, &x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn stationary_kernels_depend_only_on_distance() {
        let mut rng = Lcg::new(13);
        let stationary = [
            KernelExpr::Rbf {
                lengthscale: 0.7,
                variance: 1.3,
            },
            KernelExpr::Matern12 {
                lengthscale: 1.1,
                variance: 0.5,
            },
            KernelExpr::Matern32 {
                lengthscale: 2.0,
                variance: 1.0,
            },
            KernelExpr::Matern52 {
                lengthscale: 0.9,
                variance: 2.0,
            },
            KernelExpr::White { variance: 1.0 },
        ];
        for k in &stationary {
            for _ in 0..10 {
                let x: Vec<f64> = (0..2).map(|_| rng.range(-2.0, 2.0)).collect();
                let y: Vec<f64> = (0..2).map(|_| rng.range(-2.0, 2.0)).collect();
                let shift: Vec<f64> = (0..2).map(|_| rng.range(-3.0, 3.0)).collect();
                let xs: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a + s).collect();
                let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, s)| a + s).collect();
                let v1 = eval_kernel(k, &x, &y).unwrap();
                let v2 = eval_kernel(k, &xs, &ys).unwrap();
                assert_close(v1, v2, 1e-9);
            }
        }
    }

    #[test]
    fn random_trees_produce_psd_self_matrices() {
        let mut rng = Lcg::new(2024);
        for _ in 0..50 {
            let n = 2 + rng.index(19);
            let d = 1 + rng.index(4);
            let xs = random_inputs(&mut rng, n, d);
            let k = random_kernel(&mut rng, 3, false);
            let km = kernel_matrix_self(&k, &xs);
            let f = cholesky(&km.m, JitterPolicy::default())
                .unwrap_or_else(|e| panic!("cholesky failed on {k:?}: {e}"));
            let bound = 1e-6 * km.m.mean_diagonal();
            assert!(
                f.jitter_applied() <= bound,
                "jitter {} exceeds {bound} for {k:?}",
                f.jitter_applied()
            );
        }
    }

    #[test]
    fn validate_rejects_bad_hyperparameters() {
        let bad_ls = KernelExpr::Rbf {
            lengthscale: 0.0,
            variance: 1.0,
        };
        assert!(bad_ls.validate().is_err());
        let bad_var = KernelExpr::Sum(
            Box::new(KernelExpr::Bias { variance: -1.0 }),
            Box::new(KernelExpr::default_matern32()),
        );
        assert!(bad_var.validate().is_err());
    }
}
