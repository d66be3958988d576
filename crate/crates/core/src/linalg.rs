//! Small dense and banded solvers used across the crate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solves a tridiagonal system. `sub[i]` multiplies `x[i-1]` in row `i`
/// (so `sub[0]` is ignored) and `sup[i]` multiplies `x[i+1]`.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Precondition("zero pivot in tridiagonal solve".into()));
    }
    c[0] = sup[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - sub[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Precondition("zero pivot in tridiagonal solve".into()));
        }
        c[i] = sup[i] / beta;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Banded matrix with `kl` sub- and `ku` super-diagonals, stored row-wise
/// with `kl` extra super-diagonals of room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // column j lives at offset j - i + kl in row i
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entry (i, j). Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.kl + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solve followed by one round of iterative refinement.
    pub fn solve_refined(self, rhs: &mut [f64]) -> Result<()> {
        let b = rhs.to_vec();
        let copy = self.clone();
        self.solve(rhs)?;
        let ax = copy.mul_vec(rhs);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        copy.solve(&mut r)?;
        rhs.iter_mut().zip(&r).for_each(|(x, c)| *x += c);
        Ok(())
    }

    /// Gaussian elimination with partial pivoting; overwrites `rhs` with the
    /// solution and consumes the matrix.
    pub fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.kl + self.ku;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-20;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || !best.is_finite() {
                return Err(Error::Precondition("singular banded matrix".into()));
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
                rhs.swap(k, p);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let si = self.slot(i, k);
                let factor = self.data[si] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[si] = 0.0;
                for j in k + 1..=last_col {
                    let sk = self.slot(k, j);
                    let sij = self.slot(i, j);
                    self.data[sij] -= factor * self.data[sk];
                }
                rhs[i] -= factor * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last_col {
                acc -= self.get(k, j) * rhs[j];
            }
            rhs[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `M S + S M^T + Q = 0` through the Kronecker form. Requires `M`
/// Hurwitz so the solution is unique.
pub fn lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let max_re = spectral_abscissa(m);
    if max_re >= 0.0 {
        return Err(Error::NotHurwitz { max_re });
    }
    let mut big = DMatrix::<f64>::zeros(n * n, n * n);
    // vec(S) in column-major order: index (i, j) -> j * n + i
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for k in 0..n {
                big[(row, j * n + k)] += m[(i, k)];
                big[(row, k * n + i)] += m[(j, k)];
            }
        }
    }
    let rhs = DMatrix::from_iterator(n * n, 1, q.iter().map(|v| -v));
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Precondition("singular Lyapunov operator".into()))?;
    let s = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&s + s.transpose()) * 0.5)
}

/// Frobenius norm of `M S + S M^T + Q`.
pub fn lyapunov_residual(m: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (m * s + s * m.transpose() + q).norm()
}

/// Inverse of a small symmetric positive definite matrix, or `None` when it
/// is not numerically positive definite.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}
