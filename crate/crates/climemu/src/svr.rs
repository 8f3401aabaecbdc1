//! Epsilon-insensitive support vector regression.
//!
//! Solves the standard dual
//!
//! ```text
//! maximize  -1/2 b^T K b - eps ||b||_1 + y^T b
//! s.t.      sum(b) = 0,  |b_i| <= C
//! ```
//!
//! with SMO-style pairwise updates in the split formulation
//! `b_i = a_i - a*_i`, `a_i, a*_i in [0, C]`. The working pair couples the
//! maximal KKT violator with the variable farthest from it in modified
//! error; updates preserve the equality constraint by construction. Bias
//! comes from the KKT conditions, averaged over free support vectors, or
//! the midpoint of the feasible bias interval when none are free.
//!
//! Targets are centered by their mean before the solve; the mean is folded
//! into the stored bias so `predict` needs no extra bookkeeping.

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, kernel_matrix_self, KernelExpr};
use crate::linalg::{DenseMatrix, DenseVector};

/// SMO solver settings.
#[derive(Debug, Clone)]
pub struct SvrParams {
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// Box constraint on dual coefficients.
    pub c: f64,
    /// Stop when the largest KKT violation drops below this.
    pub tol: f64,
    /// Maximum number of pairwise updates.
    pub max_iter: usize,
    /// Assert dual feasibility and objective monotonicity after every
    /// update. Quadratic cost per update; meant for tests.
    pub debug_checks: bool,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
            debug_checks: false,
        }
    }
}

/// Fitted SVR: only support vectors (nonzero dual coefficients) are kept.
#[derive(Debug, Clone)]
pub struct SvrModel {
    pub x_support: DenseMatrix,
    /// `b_i = a_i - a*_i` for each support vector.
    pub dual_coef: DenseVector,
    /// Row indices of the support vectors in the original training set.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub kernel: KernelExpr,
    pub epsilon: f64,
    pub c: f64,
    /// False when the iteration budget ran out before the KKT tolerance
    /// was reached; the model is still usable.
    pub converged: bool,
}

impl SvrModel {
    pub fn fit(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        params: &SvrParams,
    ) -> Result<SvrModel> {
        fit_impl(x, y, kernel, params, true)
    }

    /// Fit without target centering (oracle tests).
    pub fn fit_uncentered(
        x: &DenseMatrix,
        y: &DenseVector,
        kernel: &KernelExpr,
        params: &SvrParams,
    ) -> Result<SvrModel> {
        fit_impl(x, y, kernel, params, false)
    }

    /// `f(q) = sum_s dual_coef_s k(x_s, q) + bias` per query row.
    pub fn predict(&self, xq: &DenseMatrix) -> Result<DenseVector> {
        if xq.cols() != self.x_support.cols() && self.x_support.rows() > 0 {
            return Err(Error::DimensionMismatch(format!(
                "query has {} columns, support vectors have {}",
                xq.cols(),
                self.x_support.cols()
            )));
        }
        let mut out = DenseVector::zeros(xq.rows());
        for q in 0..xq.rows() {
            let mut s = self.bias;
            for i in 0..self.x_support.rows() {
                s += self.dual_coef[i]
                    * eval_kernel(&self.kernel, self.x_support.row(i), xq.row(q))
                        .expect("dimensions checked by caller");
            }
            out[q] = s;
        }
        Ok(out)
    }
}

/// Solver state in the split formulation. Variable `k < n` is the positive
/// part of sample `k` (weight +1 in the equality constraint), `k >= n` the
/// negative part of sample `k - n` (weight -1).
struct Smo<'a> {
    n: usize,
    k: &'a DenseMatrix,
    y: &'a [f64],
    eps: f64,
    c: f64,
    a: Vec<f64>,
    /// Predictions without bias: `u_g = sum_i b_i K_gi`.
    u: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn sample(&self, k: usize) -> usize {
        if k < self.n {
            k
        } else {
            k - self.n
        }
    }

    fn direction(&self, k: usize) -> f64 {
        if k < self.n {
            1.0
        } else {
            -1.0
        }
    }

    /// Modified error `d_k G_k`: the bias estimate implied by variable `k`.
    fn grad(&self, k: usize) -> f64 {
        let i = self.sample(k);
        if k < self.n {
            self.y[i] - self.eps - self.u[i]
        } else {
            self.y[i] + self.eps - self.u[i]
        }
    }

    fn in_up(&self, k: usize) -> bool {
        if k < self.n {
            self.a[k] < self.c
        } else {
            self.a[k] > 0.0
        }
    }

    fn in_low(&self, k: usize) -> bool {
        if k < self.n {
            self.a[k] > 0.0
        } else {
            self.a[k] < self.c
        }
    }

    /// Max and min modified errors over the feasible direction sets, with
    /// the indices attaining them (lowest index on ties).
    fn extremes(&self) -> (Option<(usize, f64)>, Option<(usize, f64)>) {
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for k in 0..2 * self.n {
            let g = self.grad(k);
            if self.in_up(k) && up.map_or(true, |(_, best)| g > best) {
                up = Some((k, g));
            }
            if self.in_low(k) && low.map_or(true, |(_, best)| g < best) {
                low = Some((k, g));
            }
        }
        (up, low)
    }

    fn beta(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.a[i] - self.a[self.n + i]).collect()
    }

    fn dual_objective(&self) -> f64 {
        let beta = self.beta();
        let mut quad = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                quad += beta[i] * beta[j] * self.k[(i, j)];
            }
        }
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let lin: f64 = beta.iter().zip(self.y).map(|(b, yv)| b * yv).sum();
        -0.5 * quad - self.eps * l1 + lin
    }
}

fn fit_impl(
    x: &DenseMatrix,
    y: &DenseVector,
    kernel: &KernelExpr,
    params: &SvrParams,
    center: bool,
) -> Result<SvrModel> {
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
    if !(params.epsilon >= 0.0) || !params.epsilon.is_finite() {
        return Err(Error::InvalidHyperparameter(format!(
            "epsilon must be >= 0, got {}",
            params.epsilon
        )));
    }
    if !(params.c > 0.0) || !params.c.is_finite() {
        return Err(Error::InvalidHyperparameter(format!(
            "C must be > 0, got {}",
            params.c
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "tol must be > 0, got {}",
            params.tol
        )));
    }
    kernel.validate()?;

    let n = x.rows();
    let y_mean = if center { y.mean() } else { 0.0 };
    let yc: Vec<f64> = y.as_slice().iter().map(|v| v - y_mean).collect();
    let gram = kernel_matrix_self(kernel, x).m;

    let mut smo = Smo {
        n,
        k: &gram,
        y: &yc,
        eps: params.epsilon,
        c: params.c,
        a: vec![0.0; 2 * n],
        u: vec![0.0; n],
    };

    let mut converged = false;
    let mut last_objective = smo.dual_objective();
    for _ in 0..params.max_iter {
        let (up, low) = smo.extremes();
        let (Some((k_up, g_up)), Some((k_low, g_low))) = (up, low) else {
            converged = true;
            break;
        };
        let gap = g_up - g_low;
        if gap <= params.tol {
            converged = true;
            break;
        }

        let i = smo.sample(k_up);
        let j = smo.sample(k_low);
        let eta = smo.k[(i, i)] + smo.k[(j, j)] - 2.0 * smo.k[(i, j)];
        let cap_up = if k_up < n {
            params.c - smo.a[k_up]
        } else {
            smo.a[k_up]
        };
        let cap_low = if k_low < n {
            smo.a[k_low]
        } else {
            params.c - smo.a[k_low]
        };
        let cap = cap_up.min(cap_low);
        let delta = if eta > 1e-12 * (smo.k[(i, i)] + smo.k[(j, j)]).abs().max(1e-300) {
            (gap / eta).min(cap)
        } else {
            // Flat direction: the objective is linear with positive slope,
            // so move all the way to the box.
            cap
        };

        let d_up = smo.direction(k_up);
        let d_low = smo.direction(k_low);
        smo.a[k_up] = (smo.a[k_up] + d_up * delta).clamp(0.0, params.c);
        smo.a[k_low] = (smo.a[k_low] - d_low * delta).clamp(0.0, params.c);
        if i != j {
            for g in 0..n {
                smo.u[g] += delta * (smo.k[(g, i)] - smo.k[(g, j)]);
            }
        }

        if params.debug_checks {
            let objective = smo.dual_objective();
            assert!(
                objective >= last_objective - 1e-9,
                "dual objective decreased: {last_objective} -> {objective}"
            );
            last_objective = objective;
            let sum: f64 = smo.beta().iter().sum();
            assert!(sum.abs() <= 1e-10, "equality constraint drifted: {sum}");
            for b in smo.beta() {
                assert!(b.abs() <= params.c + 1e-12, "box constraint violated: {b}");
            }
        }
    }

    // Bias: average the implied bias over free variables; fall back to the
    // midpoint of the feasible interval [max_up, min_low].
    let free: Vec<f64> = (0..2 * n)
        .filter(|&k| smo.a[k] > 0.0 && smo.a[k] < params.c)
        .map(|k| smo.grad(k))
        .collect();
    let bias_raw = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        let (up, low) = smo.extremes();
        match (up, low) {
            (Some((_, m)), Some((_, mm))) => 0.5 * (m + mm),
            (Some((_, m)), None) => m,
            (None, Some((_, mm))) => mm,
            (None, None) => 0.0,
        }
    };

    let beta = smo.beta();
    let mut support_rows = Vec::new();
    let mut support_indices = Vec::new();
    let mut dual = Vec::new();
    for (idx, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            support_rows.push(x.row(idx).to_vec());
            support_indices.push(idx);
            dual.push(b);
        }
    }
    let x_support = if support_rows.is_empty() {
        DenseMatrix::zeros(0, x.cols())
    } else {
        DenseMatrix::from_rows(&support_rows)?
    };

    Ok(SvrModel {
        x_support,
        dual_coef: DenseVector::from(dual),
        support_indices,
        bias: bias_raw + y_mean,
        kernel: kernel.clone(),
        epsilon: params.epsilon,
        c: params.c,
        converged,
    })
}
