//! Dense complex matrices and eigensolvers.
//!
//! Dense Hermitian eigenproblems go through faer's self-adjoint EVD pinned
//! to sequential execution, so a result never depends on the size of the
//! surrounding worker pool. Real symmetric tridiagonal problems (Lanczos
//! projections, the tridiagonal GUE model) use the implicit QL iteration
//! below.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest matrix dimension a dense routine may allocate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryBudget {
    pub max_dim: usize,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget { max_dim: 4096 }
    }
}

impl MemoryBudget {
    pub fn check(&self, dim: usize) -> Result<()> {
        if dim > self.max_dim {
            return Err(Error::Resource(format!(
                "dense {dim}x{dim} matrix exceeds memory budget (max dimension {})",
                self.max_dim
            )));
        }
        Ok(())
    }
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::domain(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        SquareMatrix { dim, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn adjoint(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matmul");
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(&other.data[k * n..(k + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Replace with (A + A†)/2.
    pub fn hermitize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            let d = self[(i, i)];
            self[(i, i)] = Complex64::new(d.re, 0.0);
            for j in (i + 1)..n {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.dim, self.dim, |i, j| self.data[i * self.dim + j])
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

fn run_evd(m: &SquareMatrix, vectors: bool) -> Result<(Vec<f64>, Option<Mat<Complex64>>)> {
    let n = m.dim;
    if n == 0 {
        return Ok((Vec::new(), None));
    }
    let a = m.to_faer();
    let mut s = Diag::<Complex64>::zeros(n);
    let mut u = vectors.then(|| Mat::<Complex64>::zeros(n, n));
    let compute = if vectors {
        ComputeEigenvectors::Yes
    } else {
        ComputeEigenvectors::No
    };
    let par = Par::Seq;
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<Complex64>(
        n,
        compute,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Numeric {
        message: format!("Hermitian eigensolver failed: {e:?}"),
        best: f64::NAN,
        residual: f64::NAN,
    })?;
    let vals = s.column_vector().iter().map(|z| z.re).collect();
    Ok((vals, u))
}

/// Eigenvalues (ascending) of a Hermitian matrix. Only the lower triangle is read.
pub fn hermitian_eigenvalues(m: &SquareMatrix) -> Result<Vec<f64>> {
    let (mut vals, _) = run_evd(m, false)?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigenvalues (ascending) and eigenvectors (columns of the returned matrix).
pub fn hermitian_eigh(m: &SquareMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = m.dim;
    let (vals, u) = run_evd(m, true)?;
    let u = match u {
        Some(u) => u,
        None => return Ok((vals, SquareMatrix::zeros(0))),
    };
    // faer already returns nondecreasing order
    let vecs = SquareMatrix::from_fn(n, |i, j| u[(i, j)]);
    Ok((vals, vecs))
}

/// Symmetric tridiagonal eigenproblem by implicit QL with shifts.
///
/// `diag` has length n and `offdiag` length n - 1 (coupling i and i + 1).
/// Returns ascending eigenvalues and, if requested, the eigenvector matrix
/// as row-major n x n with eigenvectors in columns.
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64], vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), vectors.then(Vec::new)));
    }
    if offdiag.len() + 1 != n {
        return Err(Error::domain(format!(
            "tridiagonal: {} diagonal entries need {} off-diagonal entries, got {}",
            n,
            n - 1,
            offdiag.len()
        )));
    }
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    let mut z = if vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        Some(z)
    } else {
        None
    };

    const MAX_SWEEPS: usize = 60;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(Error::Numeric {
                    message: format!("tridiagonal QL did not converge for eigenvalue {l}"),
                    best: d[l],
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    for k in 0..n {
                        let zk = &mut z[k * n..(k + 1) * n];
                        let f = zk[i + 1];
                        zk[i + 1] = s * zk[i] + c * f;
                        zk[i] = c * zk[i] - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&k| d[k]).collect();
    let vecs = z.map(|z| {
        let mut out = vec![0.0; n * n];
        for (new_col, &old_col) in order.iter().enumerate() {
            for row in 0..n {
                out[row * n + new_col] = z[row * n + old_col];
            }
        }
        out
    });
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_eigenvalues_are_sorted() {
        let m = SquareMatrix::from_diagonal(&[3.0, 1.0, 2.0]);
        assert_eq!(hermitian_eigenvalues(&m).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let m = SquareMatrix::from_row_major(
            3,
            vec![
                c(2.0, 0.0),
                c(1.0, -1.0),
                c(0.0, 0.5),
                c(1.0, 1.0),
                c(-1.0, 0.0),
                c(0.3, 0.0),
                c(0.0, -0.5),
                c(0.3, 0.0),
                c(0.5, 0.0),
            ],
        )
        .unwrap();
        let (vals, v) = hermitian_eigh(&m).unwrap();
        let lambda = SquareMatrix::from_diagonal(&vals);
        let rebuilt = v.matmul(&lambda).matmul(&v.adjoint());
        for (a, b) in rebuilt.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let d = [1.0, -2.0, 0.5, 3.0, 0.0];
        let e = [0.7, 1.1, -0.4, 2.0];
        let dense = SquareMatrix::from_fn(5, |i, j| {
            if i == j {
                c(d[i], 0.0)
            } else if i + 1 == j {
                c(e[i], 0.0)
            } else if j + 1 == i {
                c(e[j], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let want = hermitian_eigenvalues(&dense).unwrap();
        let (got, vecs) = tridiagonal_eigen(&d, &e, true).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // T v = lambda v for every column
        let vecs = vecs.unwrap();
        for (k, &lam) in got.iter().enumerate() {
            for i in 0..5 {
                let mut tv = d[i] * vecs[i * 5 + k];
                if i > 0 {
                    tv += e[i - 1] * vecs[(i - 1) * 5 + k];
                }
                if i < 4 {
                    tv += e[i] * vecs[(i + 1) * 5 + k];
                }
                assert!((tv - lam * vecs[i * 5 + k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_rejects_large_dims() {
        let b = MemoryBudget { max_dim: 8 };
        assert!(b.check(8).is_ok());
        assert!(matches!(b.check(9), Err(Error::Resource(_))));
    }
}
