//! Small dense linear algebra for the d x d scale matrices.
//!
//! Matrices are row-major and square. Nothing here forms an explicit inverse.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows; fails unless the rows form a square matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, String> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has length {}, expected {n}", row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m.data[i * n + j] += a * other[(k, j)];
                }
            }
        }
        m
    }

    /// `A Aᵀ`, the covariance of `A Z` for standard normal `Z`.
    pub fn gram(&self) -> Self {
        self.matmul(&self.transpose())
    }

    /// `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = dot(self.row(i), x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self[(i, j)] == 0.0))
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            (0..self.n).all(|j| {
                let target = if i == j { 1.0 } else { 0.0 };
                (self[(i, j)] - target).abs() <= tol
            })
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = self`, or `None` if not positive definite.
    /// Only the lower triangle of `self` is read.
    pub fn cholesky(&self) -> Option<Matrix> {
        let n = self.n;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut s = self[(j, j)];
            for k in 0..j {
                s -= l[(j, k)] * l[(j, k)];
            }
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            let djj = s.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        m
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Option<Lu> {
        Lu::new(self.clone())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        Matrix::from_rows(&rows)
    }
}

/// `PA = LU` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    log_abs_det: f64,
    det_sign: f64,
}

impl Lu {
    fn new(m: Matrix) -> Option<Self> {
        let n = m.n;
        let mut lu = m.data;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if !(pmax > 0.0) || !pmax.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        let mut log_abs_det = 0.0;
        for k in 0..n {
            let u = lu[k * n + k];
            if u < 0.0 {
                sign = -sign;
            }
            log_abs_det += u.abs().ln();
        }
        Some(Lu {
            n,
            lu,
            perm,
            log_abs_det,
            det_sign: sign,
        })
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    pub fn det_sign(&self) -> f64 {
        self.det_sign
    }

    /// Solves `A y = b`.
    pub fn solve_into(&self, b: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[self.perm[i]];
            for k in 0..i {
                s -= self.lu[i * n + k] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * y[k];
            }
            y[i] = s / self.lu[i * n + i];
        }
    }
}

/// Forward substitution `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64], y: &mut [f64]) {
    for i in 0..l.n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * y[k];
        }
        y[i] = s / row[i];
    }
}

/// Back substitution `Lᵀ y = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64], y: &mut [f64]) {
    let n = l.n;
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Matrix {
        Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd();
        let l = a.cholesky().unwrap();
        assert!(l.is_lower_triangular());
        assert!(l.gram().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(a.cholesky().is_none());
    }

    #[test]
    fn lu_solves_and_reports_determinant() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let lu = a.lu().unwrap();
        assert_eq!(lu.det_sign(), -1.0);
        assert!((lu.log_abs_det() - 6f64.ln()).abs() < 1e-15);
        let mut y = [0.0; 2];
        lu.solve_into(&[4.0, 5.0], &mut y);
        let back = a.mul_vec(&y);
        assert!((back[0] - 4.0).abs() < 1e-14 && (back[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn triangular_solves() {
        let l = spd().cholesky().unwrap();
        let b = [1.0, -2.0, 0.5];
        let mut y = [0.0; 3];
        solve_lower(&l, &b, &mut y);
        let back = l.mul_vec(&y);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-14);
        }
        let mut z = [0.0; 3];
        solve_lower_transpose(&l, &b, &mut z);
        let back = l.transpose().mul_vec(&z);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn serde_is_row_major() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str("[[1.0,2.0],[3.0,4.0]]").unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>("[[1.0,2.0],[3.0]]").is_err());
    }
}
