//! Epsilon-insensitive support vector regression with an RBF kernel, trained
//! by sequential minimal optimization.
//!
//! The dual is solved in the doubled-variable form: for `n` training points
//! there are `2n` multipliers `a_t` in `[0, C]`, the first `n` with label +1
//! and the last `n` with label -1, minimizing
//!
//! ```text
//! 1/2 a^T Q a + p^T a    subject to  sum_t s_t a_t = 0
//! Q_tu = s_t s_u K(t mod n, u mod n)
//! p_t  = eps - y_t (t < n),   eps + y_(t-n) (t >= n)
//! ```
//!
//! Working pairs are chosen with second-order information (maximal violating
//! index plus the partner with the largest objective decrease). The regressor
//! keeps `beta_i = a_i - a_(i+n)`, which lies in `[-C, C]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Standardizer};
use crate::scalar::{population_variance, Scalar};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvrParams<T> {
    /// Box constraint, > 0.
    pub c: T,
    /// Tube half-width in target units, >= 0.
    pub epsilon: T,
    /// RBF width; `None` picks `1 / (p * var(X))` on the standardized data.
    pub gamma: Option<T>,
    /// KKT stopping tolerance on the maximal violating pair.
    pub tol: T,
    pub max_iter: usize,
    /// Standardize features to zero mean and unit variance before training.
    pub standardize: bool,
    /// Upper bound on kernel cache memory.
    pub cache_bytes: usize,
}

impl<T: Scalar> Default for SvrParams<T> {
    fn default() -> Self {
        Self {
            c: T::one(),
            epsilon: T::of(0.1),
            gamma: None,
            tol: T::of(1e-3),
            max_iter: 10_000_000,
            standardize: true,
            cache_bytes: 256 << 20,
        }
    }
}

impl<T: Scalar> SvrParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) {
            return Err(Error::InvalidParameter(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > T::zero()) {
                return Err(Error::InvalidParameter(format!("gamma must be > 0, got {g}")));
            }
        }
        if !(self.tol > T::zero()) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one SMO run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    /// Final maximal KKT violation (`m(a) - M(a)`).
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvrRegressor<T> {
    pub c: T,
    pub epsilon: T,
    pub gamma: T,
    pub bias: T,
    /// Standardized support vectors (rows with nonzero dual coefficient).
    pub support_vectors: Matrix<T>,
    pub dual_coef: Vec<T>,
    /// Training row index of each support vector.
    pub support_indices: Vec<usize>,
    pub standardizer: Standardizer<T>,
}

pub fn rbf<T: Scalar>(a: &[T], b: &[T], gamma: T) -> T {
    let d2: T = a.iter().zip(b).map(|(&u, &v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

/// Kernel rows keyed by training index, evicting the least recently used.
struct KernelCache<'a, T> {
    x: &'a Matrix<T>,
    gamma: T,
    rows: Vec<Option<Vec<T>>>,
    stamps: Vec<u64>,
    cached: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a, T: Scalar> KernelCache<'a, T> {
    fn new(x: &'a Matrix<T>, gamma: T, cache_bytes: usize) -> Self {
        let n = x.n_rows();
        let row_bytes = n.max(1) * std::mem::size_of::<T>();
        let capacity = (cache_bytes / row_bytes).clamp(2, n.max(2));
        Self {
            x,
            gamma,
            rows: vec![None; n],
            stamps: vec![0; n],
            cached: Vec::new(),
            capacity,
            clock: 0,
        }
    }

    /// Makes row `i` resident without evicting `keep`.
    fn ensure(&mut self, i: usize, keep: usize) {
        self.clock += 1;
        self.stamps[i] = self.clock;
        if self.rows[i].is_some() {
            return;
        }
        if self.cached.len() >= self.capacity {
            let (pos, _) = self
                .cached
                .iter()
                .enumerate()
                .filter(|(_, &r)| r != keep)
                .min_by_key(|(_, &r)| self.stamps[r])
                .expect("capacity >= 2");
            let victim = self.cached.swap_remove(pos);
            self.rows[victim] = None;
        }
        let xi = self.x.row(i);
        let row = self.x.rows().map(|xj| rbf(xi, xj, self.gamma)).collect();
        self.rows[i] = Some(row);
        self.cached.push(i);
    }

    fn row(&self, i: usize) -> &[T] {
        self.rows[i].as_deref().expect("row made resident by ensure")
    }
}

/// Default RBF width: inverse of feature count times the variance of all
/// entries of the (standardized) design matrix.
pub fn default_gamma<T: Scalar>(x: &Matrix<T>) -> T {
    let var = population_variance(x.as_slice());
    let p = T::of_usize(x.n_cols().max(1));
    if var > T::zero() {
        T::one() / (p * var)
    } else {
        T::one()
    }
}

impl<T: Scalar> SvrRegressor<T> {
    pub fn fit(x: &Matrix<T>, y: &[T], params: &SvrParams<T>) -> Result<(Self, SolveInfo)> {
        params.validate()?;
        let n = x.n_rows();
        if n != y.len() {
            return Err(Error::Data(format!("{n} feature rows but {} targets", y.len())));
        }
        if n < 2 {
            return Err(Error::Data("SVR needs at least 2 rows".into()));
        }
        let standardizer = if params.standardize {
            Standardizer::fit(x)
        } else {
            Standardizer::identity(x.n_cols())
        };
        let z = standardizer.transform(x);
        let gamma = params.gamma.unwrap_or_else(|| default_gamma(&z));

        let (beta, bias, info) = solve_dual(&z, y, params, gamma)?;

        let support_indices: Vec<usize> = (0..n).filter(|&i| beta[i] != T::zero()).collect();
        Ok((
            Self {
                c: params.c,
                epsilon: params.epsilon,
                gamma,
                bias,
                support_vectors: z.select_rows(&support_indices),
                dual_coef: support_indices.iter().map(|&i| beta[i]).collect(),
                support_indices,
                standardizer,
            },
            info,
        ))
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let mut buf = vec![T::zero(); row.len()];
        self.standardizer.transform_row(row, &mut buf);
        self.predict_standardized(&buf)
    }

    fn predict_standardized(&self, z: &[T]) -> T {
        self.support_vectors
            .rows()
            .zip(&self.dual_coef)
            .map(|(sv, &b)| b * rbf(sv, z, self.gamma))
            .sum::<T>()
            + self.bias
    }

    pub fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        let mut buf = vec![T::zero(); x.n_cols()];
        x.rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut buf);
                self.predict_standardized(&buf)
            })
            .collect()
    }
}

/// Runs SMO on standardized data; returns per-row dual coefficients, the
/// bias and solver diagnostics.
fn solve_dual<T: Scalar>(
    z: &Matrix<T>,
    y: &[T],
    params: &SvrParams<T>,
    gamma: T,
) -> Result<(Vec<T>, T, SolveInfo)> {
    let n = z.n_rows();
    let l = 2 * n;
    let c = params.c;
    let tau = T::of(TAU);
    let sign = |t: usize| if t < n { T::one() } else { -T::one() };
    let base = |t: usize| if t < n { t } else { t - n };

    let mut alpha = vec![T::zero(); l];
    let mut grad: Vec<T> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();
    // RBF diagonal is exp(0)
    let qd = T::one();
    let mut cache = KernelCache::new(z, gamma, params.cache_bytes);

    let is_upper = |a: T| a >= c;
    let is_lower = |a: T| a <= T::zero();

    let mut iterations = 0;
    let violation;
    loop {
        // first index: maximal violation
        let mut gmax = T::neg_infinity();
        let mut gmax_idx = usize::MAX;
        for t in 0..l {
            if t < n {
                if !is_upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    gmax_idx = t;
                }
            } else if !is_lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                gmax_idx = t;
            }
        }

        let mut gmax2 = T::neg_infinity();
        let mut gmin_idx = usize::MAX;
        let mut obj_diff_min = T::infinity();
        if gmax_idx != usize::MAX {
            let i = gmax_idx;
            let si = sign(i);
            cache.ensure(base(i), usize::MAX);
            let ki = cache.row(base(i));
            for j in 0..l {
                let qij = si * sign(j) * ki[base(j)];
                if j < n {
                    if !is_lower(alpha[j]) {
                        let grad_diff = gmax + grad[j];
                        if grad[j] >= gmax2 {
                            gmax2 = grad[j];
                        }
                        if grad_diff > T::zero() {
                            let quad = qd + qd - T::of(2.0) * si * qij;
                            let quad = if quad > T::zero() { quad } else { tau };
                            let obj_diff = -(grad_diff * grad_diff) / quad;
                            if obj_diff <= obj_diff_min {
                                gmin_idx = j;
                                obj_diff_min = obj_diff;
                            }
                        }
                    }
                } else if !is_upper(alpha[j]) {
                    let grad_diff = gmax - grad[j];
                    if -grad[j] >= gmax2 {
                        gmax2 = -grad[j];
                    }
                    if grad_diff > T::zero() {
                        let quad = qd + qd + T::of(2.0) * si * qij;
                        let quad = if quad > T::zero() { quad } else { tau };
                        let obj_diff = -(grad_diff * grad_diff) / quad;
                        if obj_diff <= obj_diff_min {
                            gmin_idx = j;
                            obj_diff_min = obj_diff;
                        }
                    }
                }
            }
        }

        if gmax + gmax2 < params.tol || gmin_idx == usize::MAX {
            violation = (gmax + gmax2).to_f64_lossy();
            break;
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged {
                iterations,
                violation: (gmax + gmax2).to_f64_lossy(),
                tolerance: params.tol.to_f64_lossy(),
            });
        }
        iterations += 1;

        let (i, j) = (gmax_idx, gmin_idx);
        let (bi, bj) = (base(i), base(j));
        cache.ensure(bi, bj);
        cache.ensure(bj, bi);
        let (si, sj) = (sign(i), sign(j));
        let qij = si * sj * cache.row(bi)[bj];
        let (old_i, old_j) = (alpha[i], alpha[j]);

        if si != sj {
            let quad = qd + qd + T::of(2.0) * qij;
            let quad = if quad > T::zero() { quad } else { tau };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            // equal box bounds on both sides
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd + qd - T::of(2.0) * qij;
            let quad = if quad > T::zero() { quad } else { tau };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let ki = cache.row(bi);
        let kj = cache.row(bj);
        for t in 0..l {
            let st = sign(t);
            let bt = base(t);
            grad[t] += st * (si * ki[bt] * di + sj * kj[bt] * dj);
        }
    }

    // bias from free variables, else the midpoint of the feasible interval
    let mut ub = T::infinity();
    let mut lb = T::neg_infinity();
    let mut sum_free = T::zero();
    let mut n_free = 0usize;
    for t in 0..l {
        let yg = sign(t) * grad[t];
        let positive = t < n;
        if is_upper(alpha[t]) {
            if positive {
                lb = lb.max(yg);
            } else {
                ub = ub.min(yg);
            }
        } else if is_lower(alpha[t]) {
            if positive {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / T::of_usize(n_free)
    } else {
        (ub + lb) / T::of(2.0)
    };

    let beta = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    Ok((beta, -rho, SolveInfo { iterations, violation }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize) -> (Matrix<f64>, Vec<f64>) {
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [i as f64 / n as f64 * 6.0]).collect();
        let y = rows.iter().map(|r| r[0].sin()).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn constant_target_is_reproduced() {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [i as f64, (i * 7 % 5) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = vec![72.5; 30];
        let (m, info) = SvrRegressor::fit(&x, &y, &SvrParams::default()).unwrap();
        assert_eq!(info.iterations, 0);
        assert!(m.dual_coef.is_empty());
        for p in m.predict(&x) {
            assert!((p - 72.5).abs() < 1e-12);
        }
        assert!((m.predict_row(&[100.0, -3.0]) - 72.5).abs() < 1e-12);
    }

    #[test]
    fn fits_a_sine() {
        let (x, y) = sine(200);
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.05,
            ..SvrParams::default()
        };
        let (m, _) = SvrRegressor::fit(&x, &y, &params).unwrap();
        let pred = m.predict(&x);
        let mse = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 200.0;
        assert!(mse.sqrt() < 0.1, "rmse {}", mse.sqrt());
    }

    #[test]
    fn dual_coefficients_respect_box_and_kkt() {
        let (x, mut y) = sine(120);
        for (i, v) in y.iter_mut().enumerate() {
            *v += ((i * 37 % 11) as f64 - 5.0) * 0.05;
        }
        let params = SvrParams {
            c: 0.5,
            epsilon: 0.1,
            ..SvrParams::default()
        };
        let (m, _) = SvrRegressor::fit(&x, &y, &params).unwrap();
        assert!(m.dual_coef.iter().all(|b| b.abs() <= 0.5 + 1e-12));
        let pred = m.predict(&x);
        for i in 0..y.len() {
            if (pred[i] - y[i]).abs() > 0.1 + 1e-3 {
                assert!(m.support_indices.contains(&i), "row {i} violates the tube");
            }
        }
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let (x, y) = sine(50);
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.01,
            max_iter: 2,
            ..SvrParams::default()
        };
        match SvrRegressor::fit(&x, &y, &params) {
            Err(Error::NotConverged { iterations, violation, .. }) => {
                assert_eq!(iterations, 2);
                assert!(violation > 1e-3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn small_cache_gives_same_model() {
        let (x, y) = sine(80);
        let big = SvrParams {
            c: 5.0,
            epsilon: 0.05,
            ..SvrParams::default()
        };
        let small = SvrParams {
            cache_bytes: 0,
            ..big
        };
        let (a, _) = SvrRegressor::fit(&x, &y, &big).unwrap();
        let (b, _) = SvrRegressor::fit(&x, &y, &small).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = sine(10);
        let bad = SvrParams {
            c: 0.0,
            ..SvrParams::default()
        };
        assert!(SvrRegressor::fit(&x, &y, &bad).is_err());
    }
}
