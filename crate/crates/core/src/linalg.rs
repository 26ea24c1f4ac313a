//! Small dense kernels: row-major matrices, Cholesky and partial-pivot LU.

use crate::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// In-place Cholesky factorization of a symmetric matrix (lower triangle is
/// used and overwritten). Returns `false` if the matrix is not positive
/// definite.
pub fn cholesky_in_place(a: &mut DenseMatrix) -> bool {
    let n = a.rows;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= a.data[ri + k] * a.data[rj + k];
            }
            a[(i, j)] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for (numerically) singular systems.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = norm_inf(&m.data).max(1e-300);
    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pval <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.data.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        let d = m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / d;
            if f != 0.0 {
                for j in col..n {
                    m.data[r * n + j] -= f * m.data[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_round_trip() {
        let mut a = DenseMatrix::zeros(3, 3);
        a.data = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let orig = a.clone();
        assert!(cholesky_in_place(&mut a));
        let x = cholesky_solve(&a, &[1.0, 2.0, 3.0]);
        let bx = orig.mul_vec(&x);
        for (u, v) in bx.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
        let mut indefinite = DenseMatrix::identity(2);
        indefinite[(1, 1)] = -1.0;
        assert!(!cholesky_in_place(&mut indefinite));
    }

    #[test]
    fn lu_detects_singular() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.data = vec![1.0, 2.0, 2.0, 4.0];
        assert!(lu_solve(&a, &[1.0, 1.0]).is_none());
        a.data = vec![0.0, 2.0, 3.0, 4.0];
        let x = lu_solve(&a, &[2.0, 7.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
