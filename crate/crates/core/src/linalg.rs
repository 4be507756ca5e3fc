//! Dense row-major matrix and the small symmetric solver used by ridge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Matrix<T> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Data(format!(
                "matrix buffer has {} values, expected {n_rows}x{n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::Data(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.n_cols + j] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// New matrix with `column` appended on the right.
    pub fn with_column(&self, column: &[T]) -> Result<Self> {
        if column.len() != self.n_rows {
            return Err(Error::Data("appended column length differs from row count".into()));
        }
        let mut data = Vec::with_capacity(self.n_rows * (self.n_cols + 1));
        for (row, &extra) in self.rows().zip(column) {
            data.extend_from_slice(row);
            data.push(extra);
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols + 1,
            data,
        })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// Per-column affine standardization `(x - mean) / scale`.
///
/// Columns with zero spread keep scale 1 so they map to a constant 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: &Matrix<T>) -> Self {
        let n = T::of_usize(x.n_rows().max(1));
        let p = x.n_cols();
        let mut means = vec![T::zero(); p];
        for row in x.rows() {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![T::zero(); p];
        for row in x.rows() {
            for ((s, &v), &m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let tiny = T::epsilon() * T::of(1e3);
        let scales = vars
            .into_iter()
            .zip(&means)
            .map(|(v, &m)| {
                let sd = (v / n).sqrt();
                // numerically constant column
                if sd <= tiny * (T::one() + m.abs()) {
                    T::one()
                } else {
                    sd
                }
            })
            .collect();
        Self { means, scales }
    }

    /// Identity transform on `p` columns.
    pub fn identity(p: usize) -> Self {
        Self {
            means: vec![T::zero(); p],
            scales: vec![T::one(); p],
        }
    }

    pub fn transform_row(&self, row: &[T], out: &mut [T]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(row).zip(&self.means).zip(&self.scales) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.n_rows(), x.n_cols());
        for i in 0..x.n_rows() {
            self.transform_row(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// Solves `a * x = b` for symmetric positive-definite `a` (`p x p`, row-major)
/// by Cholesky factorization. Fails with [`Error::Singular`] when a pivot
/// falls below a relative threshold.
pub fn cholesky_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let p = a.n_rows();
    debug_assert_eq!(a.n_cols(), p);
    debug_assert_eq!(b.len(), p);
    let max_diag = (0..p).map(|i| a.get(i, i).abs()).fold(T::zero(), T::max);
    let threshold = max_diag * T::epsilon() * T::of(1e3);

    let mut l = Matrix::<T>::zeros(p, p);
    for j in 0..p {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > threshold) {
            return Err(Error::Singular {
                column: j,
                pivot: d.to_f64_lossy(),
            });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..p {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }

    // forward: L z = b
    let mut z = vec![T::zero(); p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    // backward: L^T x = z
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Ok(x)
}
