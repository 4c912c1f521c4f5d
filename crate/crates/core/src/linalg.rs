//! Small dense row-major matrices and Cholesky factorization.
//!
//! Parameter dimensions in this crate are tiny (d <= 4 for every shipped
//! model), so everything here is the straightforward O(d^3) algorithm.

use std::fmt;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.cols, v.len())?;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Symmetric up to `tol` relative to the largest absolute entry.
    pub fn is_symmetric(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self
            .data
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::one());
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    /// Replaces both off-diagonal halves by their average.
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = (0..self.rows)
            .map(|i| &self.data[i * self.cols..(i + 1) * self.cols])
            .collect();
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &rows)
            .finish()
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn new(a: &Matrix<T>) -> Option<Self> {
        if !a.is_square() || !a.is_finite() {
            return None;
        }
        let d = a.rows();
        let mut l = Matrix::zeros(d, d);
        for j in 0..d {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) {
                return None;
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..d {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.lower.diagonal().into_iter().map(|v| two * v.ln()).sum()
    }

    /// Crude condition-number estimate from the factor's diagonal.
    pub fn condition_estimate(&self) -> T {
        let diag = self.lower.diagonal();
        let max = diag.iter().fold(T::zero(), |m, &v| m.max(v));
        let min = diag.iter().fold(T::infinity(), |m, &v| m.min(v));
        (max / min).powi(2)
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let d = self.dim();
        let mut y = vec![T::zero(); d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.lower[(i, k)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), b.len())?;
        let d = self.dim();
        let mut x = self.forward(b);
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s = s - self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        Ok(x)
    }

    /// `bᵀ A⁻¹ b`.
    pub fn inv_quad_form(&self, b: &[T]) -> Result<T> {
        check_dim(self.dim(), b.len())?;
        Ok(self.forward(b).into_iter().map(|v| v * v).sum())
    }

    pub fn inverse(&self) -> Matrix<T> {
        let d = self.dim();
        let mut inv = Matrix::zeros(d, d);
        let mut e = vec![T::zero(); d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..d {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        inv
    }

    /// `L z`, used to turn standard normal draws into correlated ones.
    pub fn mul_lower(&self, z: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..=i).map(|k| self.lower[(i, k)] * z[k]).sum())
            .collect()
    }
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    Cholesky::new(a)
        .map(|c| c.inverse())
        .ok_or(Error::SingularWeight {
            condition: f64::INFINITY,
        })
}

/// Solves `min Σ w_i (y_i − x_iᵀβ)²` through the normal equations.
pub fn weighted_least_squares<T: Real>(x: &Matrix<T>, y: &[T], w: Option<&[T]>) -> Result<Vec<T>> {
    check_dim(x.rows(), y.len())?;
    if let Some(w) = w {
        check_dim(x.rows(), w.len())?;
    }
    let p = x.cols();
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![T::zero(); p];
    for i in 0..x.rows() {
        let wi = w.map_or(T::one(), |w| w[i]);
        let row = x.row(i);
        for a in 0..p {
            let wa = wi * row[a];
            xty[a] = xty[a] + wa * y[i];
            for b in 0..=a {
                xtx[(a, b)] = xtx[(a, b)] + wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    Cholesky::new(&xtx)
        .ok_or(Error::SingularWeight { condition: f64::INFINITY })?
        .solve(&xty)
}

/// General square solve by Gaussian elimination with partial pivoting.
pub fn lu_solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("lu_solve needs a square matrix".into()));
    }
    let d = a.rows();
    check_dim(d, b.len())?;
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| {
                m[(i, col)]
                    .abs()
                    .partial_cmp(&m[(j, col)].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if !(m[(pivot, col)].abs() > T::zero()) || !m[(pivot, col)].is_finite() {
            return Err(Error::SingularWeight {
                condition: f64::INFINITY,
            });
        }
        if pivot != col {
            for j in 0..d {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = tmp;
            }
            x.swap(col, pivot);
        }
        for i in (col + 1)..d {
            let f = m[(i, col)] / m[(col, col)];
            for j in col..d {
                m[(i, j)] = m[(i, j)] - f * m[(col, j)];
            }
            x[i] = x[i] - f * x[col];
        }
    }
    for i in (0..d).rev() {
        let mut s = x[i];
        for j in (i + 1)..d {
            s = s - m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd3();
        let c = Cholesky::new(&a).unwrap();
        let l = c.lower();
        let back = l.matmul(&l.transpose()).unwrap();
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_and_solve_agree() {
        let a = spd3();
        let c = Cholesky::new(&a).unwrap();
        let inv = c.inverse();
        let id = a.matmul(&inv).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-12);
            }
        }
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b).unwrap();
        let y = lu_solve(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_matches_product_of_pivots() {
        let a = Matrix::from_diagonal(&[2.0, 3.0, 5.0]);
        let c = Cholesky::new(&a).unwrap();
        assert!((c.log_det() - 30f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(Cholesky::new(&a).is_none());
        assert!(Cholesky::new(&Matrix::<f64>::zeros(2, 2)).is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::from_rows(&[vec![2.0f32, 0.5], vec![0.5, 1.0]]).unwrap();
        let c = Cholesky::new(&a).unwrap();
        let x = c.solve(&[1.0, 1.0]).unwrap();
        let r = a.matvec(&x).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-6 && (r[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn least_squares_exact_fit() {
        let x = Matrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let b = weighted_least_squares(&x, &[1.0, 3.0, 5.0], None).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
        let b = weighted_least_squares(&x, &[1.0, 3.0, 6.0], Some(&[1.0, 1.0, 0.0])).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }
}
