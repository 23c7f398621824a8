//! Small dense kernels: symmetric tridiagonal eigensolver and LU solves.

use crate::error::{Error, Result};

/// Residual bound for every eigenpair returned by [`tridiagonal_eigen`].
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Eigenpairs of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    /// Column `j` (as `vectors[j]`) is the unit eigenvector for `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Implicit QL with Wilkinson shifts, accumulating eigenvectors.
///
/// `diag` has length `m`, `off[i]` couples entries `i` and `i + 1`.
/// Every returned pair is checked against `‖Tv − λv‖∞ ≤ 1e-8`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<TridiagonalEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagonalEigen {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            got: off.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // v[row][col]
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut shift = 0.0;
    let mut tst1: f64 = 0.0;
    let max_iter = 60 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::EigensolveFailure {
                        residual: e[l].abs(),
                        tolerance: eps * tst1,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift;
        e[l] = 0.0;
    }

    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|j| v.iter().map(|row| row[j]).collect())
        .collect();
    for (lambda, vec) in d.iter().zip(&vectors) {
        let residual = tridiagonal_residual(diag, off, *lambda, vec);
        // NaN residuals fail too
        if residual.is_nan() || residual > EIGEN_RESIDUAL_TOL {
            return Err(Error::EigensolveFailure {
                residual,
                tolerance: EIGEN_RESIDUAL_TOL,
            });
        }
    }
    Ok(TridiagonalEigen { values: d, vectors })
}

fn tridiagonal_residual(diag: &[f64], off: &[f64], lambda: f64, v: &[f64]) -> f64 {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut tv = diag[i] * v[i];
            if i > 0 {
                tv += off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                tv += off[i] * v[i + 1];
            }
            (tv - lambda * v[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Row-major square matrix with an LU factorisation (partial pivoting).
#[derive(Debug, Clone)]
pub struct LuSolver {
    n: usize,
    original: Vec<f64>,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuSolver {
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: matrix.len(),
            });
        }
        let scale = matrix.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        let mut lu = matrix.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, piv_abs) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if piv_abs <= f64::EPSILON * scale {
                return Err(Error::SingularSystem {
                    row: k,
                    pivot: piv_abs,
                });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                lu[i * n + k] = factor;
                for j in k + 1..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
        Ok(LuSolver {
            n,
            original: matrix,
            lu,
            perm,
        })
    }

    fn substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] -= row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum::<f64>();
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let acc = x[i] - row.iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum::<f64>();
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A x = b` with two rounds of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let n = self.n;
        let mut x = self.substitute(b);
        for _ in 0..2 {
            let residual: Vec<f64> = (0..n)
                .map(|i| {
                    let row = &self.original[i * n..(i + 1) * n];
                    b[i] - row.iter().zip(&x).map(|(a, xj)| a * xj).sum::<f64>()
                })
                .collect();
            let dx = self.substitute(&residual);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Ok(x)
    }
}
