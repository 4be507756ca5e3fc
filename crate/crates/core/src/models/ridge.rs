//! Ridge regression through the regularized normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix, Standardizer};
use crate::scalar::{mean, Scalar};

/// Ridge model fitted on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RidgeRegressor<T> {
    pub alpha: T,
    /// Intercept in standardized feature space (the training target mean).
    pub intercept: T,
    /// Coefficients on standardized features; zero for constant columns.
    pub coefficients: Vec<T>,
    pub standardizer: Standardizer<T>,
}

impl<T: Scalar> RidgeRegressor<T> {
    /// Minimizes `||y - Zw - b||^2 + alpha ||w||^2` where `Z` is `x`
    /// standardized to zero mean and unit variance.
    ///
    /// Constant columns carry no information and get a zero coefficient.
    pub fn fit(x: &Matrix<T>, y: &[T], alpha: T) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        if x.n_rows() < 2 {
            return Err(Error::Data("ridge needs at least 2 rows".into()));
        }
        if !(alpha >= T::zero()) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }

        let standardizer = Standardizer::fit(x);
        let z = standardizer.transform(x);
        let y_mean = mean(y);
        let p = x.n_cols();
        let n = T::of_usize(x.n_rows());

        let mut gram = Matrix::<T>::zeros(p, p);
        let mut rhs = vec![T::zero(); p];
        for (row, &yi) in z.rows().zip(y) {
            let yc = yi - y_mean;
            for a in 0..p {
                rhs[a] += row[a] * yc;
                for b in 0..=a {
                    let v = gram.get(a, b) + row[a] * row[b];
                    gram.set(a, b, v);
                }
            }
        }
        let active: Vec<usize> = (0..p)
            .filter(|&j| gram.get(j, j) > n * T::epsilon() * T::of(1e3))
            .collect();

        let k = active.len();
        let mut system = Matrix::<T>::zeros(k, k);
        for (ai, &a) in active.iter().enumerate() {
            for (bi, &b) in active.iter().enumerate() {
                let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
                system.set(ai, bi, gram.get(hi, lo));
            }
            let d = system.get(ai, ai) + alpha;
            system.set(ai, ai, d);
        }
        let sub_rhs: Vec<T> = active.iter().map(|&j| rhs[j]).collect();
        let solved = if k == 0 {
            Vec::new()
        } else {
            cholesky_solve(&system, &sub_rhs).map_err(|e| match e {
                Error::Singular { column, pivot } => Error::Singular {
                    column: active[column],
                    pivot,
                },
                other => other,
            })?
        };

        let mut coefficients = vec![T::zero(); p];
        for (&j, w) in active.iter().zip(solved) {
            coefficients[j] = w;
        }
        Ok(Self {
            alpha,
            intercept: y_mean,
            coefficients,
            standardizer,
        })
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let mut acc = self.intercept;
        for (((&v, &w), &m), &s) in row
            .iter()
            .zip(&self.coefficients)
            .zip(&self.standardizer.means)
            .zip(&self.standardizer.scales)
        {
            acc += w * (v - m) / s;
        }
        acc
    }

    pub fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    /// Intercept and coefficients expressed on the raw feature scale.
    pub fn raw_coefficients(&self) -> (T, Vec<T>) {
        let w: Vec<T> = self
            .coefficients
            .iter()
            .zip(&self.standardizer.scales)
            .map(|(&w, &s)| w / s)
            .collect();
        let shift = w
            .iter()
            .zip(&self.standardizer.means)
            .map(|(&w, &m)| w * m)
            .sum::<T>();
        (self.intercept - shift, w)
    }

    pub fn coefficient_norm(&self) -> T {
        self.coefficients.iter().map(|&w| w * w).sum::<T>().sqrt()
    }
}
