//! Shared helpers for unit tests: a small deterministic RNG, random
//! matrix/kernel generators and an independent Gauss-Jordan inverse used
//! as the oracle for solver tests.

use crate::kernel::KernelExpr;
use crate::linalg::{DenseMatrix, DenseVector};

/// Deterministic 64-bit LCG, good enough for seeding test fixtures.
#[derive(Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed ^ 0x9E37_79B9_7F4A_7C15,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.unit().clamp(1e-12, 1.0 - 1e-12);
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Random symmetric positive-definite matrix `B B^T + n I`.
pub fn random_spd(rng: &mut Lcg, n: usize) -> DenseMatrix {
    let mut b = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = rng.range(-1.0, 1.0);
        }
    }
    let mut a = b.matmul(&b.transpose()).unwrap();
    a.add_diagonal(n as f64);
    a
}

/// Random input matrix with entries in [-2, 2].
pub fn random_inputs(rng: &mut Lcg, n: usize, d: usize) -> DenseMatrix {
    let data: Vec<f64> = (0..n * d).map(|_| rng.range(-2.0, 2.0)).collect();
    DenseMatrix::new(n, d, data).unwrap()
}

pub fn random_vector(rng: &mut Lcg, n: usize) -> DenseVector {
    DenseVector::from((0..n).map(|_| rng.range(-2.0, 2.0)).collect::<Vec<_>>())
}

/// Random kernel tree of bounded depth. `with_white` controls whether White
/// leaves may appear (they break the PSD-with-tiny-jitter property tests).
pub fn random_kernel(rng: &mut Lcg, depth: usize, with_white: bool) -> KernelExpr {
    if depth > 0 && rng.unit() < 0.4 {
        let left = random_kernel(rng, depth - 1, with_white);
        let right = random_kernel(rng, depth - 1, with_white);
        if rng.unit() < 0.5 {
            return KernelExpr::Sum(Box::new(left), Box::new(right));
        }
        return KernelExpr::Product(Box::new(left), Box::new(right));
    }
    let ls = rng.range(0.3, 3.0);
    let var = rng.range(0.2, 2.0);
    let n_leaves = if with_white { 7 } else { 6 };
    match rng.index(n_leaves) {
        0 => KernelExpr::Rbf {
            lengthscale: ls,
            variance: var,
        },
        1 => KernelExpr::Matern12 {
            lengthscale: ls,
            variance: var,
        },
        2 => KernelExpr::Matern32 {
            lengthscale: ls,
            variance: var,
        },
        3 => KernelExpr::Matern52 {
            lengthscale: ls,
            variance: var,
        },
        4 => KernelExpr::Linear { variance: var },
        5 => KernelExpr::Bias { variance: var },
        _ => KernelExpr::White { variance: var },
    }
}

/// Explicit matrix inverse by Gauss-Jordan elimination with partial
/// pivoting. Deliberately independent of the Cholesky path it checks.
pub fn gauss_jordan_inverse(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return None;
    }
    let mut work = a.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if work[(r, col)].abs() > work[(pivot, col)].abs() {
                pivot = r;
            }
        }
        if work[(pivot, col)].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = work[(col, j)];
                work[(col, j)] = work[(pivot, j)];
                work[(pivot, j)] = tmp;
                let tmp = inv[(col, j)];
                inv[(col, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = tmp;
            }
        }
        let diag = work[(col, col)];
        for j in 0..n {
            work[(col, j)] /= diag;
            inv[(col, j)] /= diag;
        }
        for r in 0..n {
            if r != col {
                let factor = work[(r, col)];
                if factor != 0.0 {
                    for j in 0..n {
                        work[(r, j)] -= factor * work[(col, j)];
                        inv[(r, j)] -= factor * inv[(col, j)];
                    }
                }
            }
        }
    }
    Some(inv)
}
