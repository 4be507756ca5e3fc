//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use chrono::{DateTime, Timelike};
use hrgap_core::models::svr::rbf;
use hrgap_core::Matrix;
use nalgebra::{DMatrix, DVector};

/// Local wall clock via chrono, independent of the modular arithmetic in
/// `time_components`.
pub fn calendar_oracle(ts: i64, tz_minutes: i32) -> (u32, u32, u32) {
    let dt = DateTime::from_timestamp(ts + i64::from(tz_minutes) * 60, 0).unwrap();
    (dt.hour(), dt.minute(), dt.second())
}

/// Ordinary least squares with an intercept column, via Householder QR on
/// the design matrix itself. nalgebra's SVD solve was tried first and is
/// only good to ~1e-7 on these problems.
pub fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let b = DVector::from_column_slice(y);
    let qr = design.qr();
    let qtb = qr.q().transpose() * b;
    let sol = qr.r().solve_upper_triangular(&qtb).expect("full-rank design");
    sol.iter().copied().collect()
}

pub fn kernel(x: &Matrix, gamma: f64) -> Vec<Vec<f64>> {
    x.rows().map(|a| x.rows().map(|b| rbf(a, b, gamma)).collect()).collect()
}

/// Brute-force dual solver: accelerated projected gradient on
///
///   min 1/2 b'Kb - y'b + eps |b|_1   s.t.  sum b = 0,  -C <= b <= C
///
/// The proximal step is exact: for a multiplier tau on the equality
/// constraint the minimizer is clip(soft(v - tau, t eps), -C, C), which is
/// monotone in tau, so tau is found by bisection.
pub fn qp_oracle(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    // Lipschitz constant: largest eigenvalue of K, by power iteration
    let mut v = vec![1.0; n];
    let mut lmax = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = k.iter().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        lmax = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        v = w.iter().map(|a| a / lmax).collect();
    }
    let step = 1.0 / (lmax * 1.01);
    let prox = |v: &[f64]| -> Vec<f64> {
        let at = |tau: f64| -> Vec<f64> {
            v.iter()
                .map(|&vi| {
                    let s = vi - tau;
                    let soft = s.signum() * (s.abs() - step * eps).max(0.0);
                    soft.clamp(-c, c)
                })
                .collect()
        };
        // every entry is clipped to -C below lo and to C above hi
        let lo_v = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (lo_v - c - 1.0, hi_v + c + 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if at(mid).iter().sum::<f64>() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    };
    let grad = |b: &[f64]| -> Vec<f64> {
        k.iter()
            .zip(y)
            .map(|(r, yi)| r.iter().zip(b).map(|(a, bb)| a * bb).sum::<f64>() - yi)
            .collect()
    };
    let mut b = vec![0.0; n];
    let mut z = b.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = prox(&v);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&b)
            .map(|(nb, ob)| nb + (t - 1.0) / t_next * (nb - ob))
            .collect();
        b = next;
        t = t_next;
    }
    // bias from free support vectors: f(x_i) = y_i - eps sign(b_i)
    let kb: Vec<f64> = k.iter().map(|r| r.iter().zip(&b).map(|(a, bb)| a * bb).sum()).collect();
    let free: Vec<f64> = (0..n)
        .filter(|&i| b[i].abs() > 1e-6 && b[i].abs() < c - 1e-6)
        .map(|i| y[i] - eps * b[i].signum() - kb[i])
        .collect();
    assert!(!free.is_empty(), "oracle instance has no free support vector");
    let bias = free.iter().sum::<f64>() / free.len() as f64;
    (b, bias)
}
