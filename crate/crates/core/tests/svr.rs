mod support;

use hrgap_core::models::svr::rbf;
use hrgap_core::{Matrix, Svr, SvrParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{kernel, qp_oracle};

fn instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Matrix, Vec<f64>) {
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Matrix::from_vec(n, p, data).unwrap();
    let y = x
        .rows()
        .map(|r| (r[0] * 1.5).sin() * 2.0 + r.iter().sum::<f64>() * 0.3 + rng.random_range(-0.3..0.3))
        .collect();
    (x, y)
}

fn fixed_params(c: f64, eps: f64, gamma: f64) -> SvrParams {
    SvrParams {
        c,
        epsilon: eps,
        gamma: Some(gamma),
        standardize: false,
        // the default stopping tolerance (1e-3 on the KKT gap) moves
        // predictions by about that much; compare converged solutions
        tol: 1e-6,
        ..SvrParams::default()
    }
}

#[test]
fn dual_box_and_support_vector_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let n = rng.random_range(20..150);
        let p = rng.random_range(1..6);
        let (x, y) = instance(&mut rng, n, p);
        let c = [0.1, 1.0, 10.0][case % 3];
        let eps = [0.0, 0.1, 0.5][(case / 3) % 3];
        let params = SvrParams { c, epsilon: eps, ..SvrParams::default() };
        let (model, info) = Svr::fit(&x, &y, &params).unwrap();
        assert!(info.violation <= params.tol, "case {case}: {info:?}");
        for &b in &model.dual_coef {
            assert!(b >= -c - 1e-9 && b <= c + 1e-9, "case {case}: {b}");
        }
        let pred = model.predict(&x);
        for i in 0..n {
            if (y[i] - pred[i]).abs() > eps + 1e-3 {
                assert!(model.support_indices.contains(&i), "case {case}: row {i} outside tube");
            }
        }
    }
}

#[test]
fn smo_matches_brute_force_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let p = rng.random_range(1..4);
        let (x, y) = instance(&mut rng, 20, p);
        let (c, eps, gamma) = ([1.0, 5.0][case % 2], 0.1, 0.5);
        let (b, bias) = qp_oracle(&kernel(&x, gamma), &y, c, eps);
        let (model, _) = Svr::fit(&x, &y, &fixed_params(c, eps, gamma)).unwrap();

        let (probe, _) = instance(&mut rng, 30, p);
        for row in x.rows().chain(probe.rows()) {
            let oracle = x.rows().zip(&b).map(|(xi, bi)| bi * rbf(xi, row, gamma)).sum::<f64>() + bias;
            let ours = model.predict_row(row);
            assert!((ours - oracle).abs() < 1e-3, "case {case}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn wide_tube_has_no_support_vectors() {
    let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
    let y = [10.0, 10.2, 9.9, 10.1];
    let (model, _) = Svr::fit(&x, &y, &SvrParams { epsilon: 1.0, ..SvrParams::default() }).unwrap();
    assert!(model.dual_coef.is_empty());
    for p in model.predict(&x) {
        assert!((p - 10.0).abs() <= 1.0 + 1e-9);
    }
}

#[test]
fn invalid_parameters_rejected() {
    let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
    for params in [
        SvrParams { c: 0.0, ..SvrParams::default() },
        SvrParams { epsilon: -0.1, ..SvrParams::default() },
        SvrParams { gamma: Some(0.0), ..SvrParams::default() },
    ] {
        assert!(Svr::fit(&x, &[1.0, 2.0], &params).is_err());
    }
}
