use hrgap_core::models::forest::ForestParams;
use hrgap_core::models::importance::{permutation_oob, split_gain, ImportanceTable};
use hrgap_core::{Forest, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(seed: u64, n: usize, p: usize) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n * p).map(|_| rng.random_range(0.0..1.0)).collect();
    let x = Matrix::from_vec(n, p, raw).unwrap();
    let y = x
        .rows()
        .map(|r| 60.0 + 30.0 * r[0] + 10.0 * (r[1] > 0.5) as u8 as f64 + rng.random_range(-2.0..2.0))
        .collect();
    (x, y)
}

fn fit_in_pool(threads: usize, x: &Matrix, y: &[f64], params: &ForestParams) -> Forest {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| Forest::fit(x, y, params).unwrap())
}

#[test]
fn identical_across_thread_counts() {
    let (x, y) = data(1, 800, 5);
    let params = ForestParams { n_trees: 40, seed: 9, ..ForestParams::default() };
    let one = fit_in_pool(1, &x, &y, &params);
    let many = fit_in_pool(8, &x, &y, &params);
    assert_eq!(one, many);
    let (probe, _) = data(2, 300, 5);
    let a: Vec<u64> = one.predict(&probe).iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = many.predict(&probe).iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);

    let other = fit_in_pool(1, &x, &y, &ForestParams { seed: 10, ..params });
    assert_ne!(one.predict(&probe), other.predict(&probe));
}

#[test]
fn split_gain_is_normalized_and_finds_the_signal() {
    let (x, y) = data(3, 1000, 4);
    let forest = Forest::fit(&x, &y, &ForestParams { n_trees: 50, ..ForestParams::default() }).unwrap();
    let gain = split_gain(&forest);
    assert!((gain.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(gain.iter().all(|&g| g >= 0.0));
    assert!(gain[0] > gain[2] && gain[0] > gain[3]);
    assert!(gain[1] > gain[2] && gain[1] > gain[3]);

    let perm = permutation_oob(&forest, &x, &y, 5).unwrap();
    assert_eq!(perm.n_trees, 50);
    assert!(perm.raw[0] > perm.raw[2] && perm.raw[1] > perm.raw[3]);
    assert!(perm.clamped().iter().all(|&v| v >= 0.0));
}

#[test]
fn importance_table_ranks_and_checks_names() {
    let (x, y) = data(4, 500, 3);
    let forest = Forest::fit(&x, &y, &ForestParams { n_trees: 30, ..ForestParams::default() }).unwrap();
    let table = ImportanceTable::compute(&forest, &x, &y, &["a", "b", "c"], 1).unwrap();
    assert_eq!(ImportanceTable::ranking(&table.split_gain)[0], 0);
    assert!(ImportanceTable::compute(&forest, &x, &y, &["a", "b"], 1).is_err());
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn constant_target_gives_constant_predictions() {
    let (x, _) = data(5, 100, 3);
    let y = vec![72.0; 100];
    let forest = Forest::fit(&x, &y, &ForestParams { n_trees: 10, ..ForestParams::default() }).unwrap();
    assert!(forest.predict(&x).iter().all(|&p| p == 72.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_stay_within_training_range(
        seed in any::<u64>(),
        n in 10usize..200,
        probe in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 1..20),
    ) {
        let (x, y) = data(seed, n, 3);
        let params = ForestParams { n_trees: 15, min_leaf: 1, seed, ..ForestParams::default() };
        let forest = Forest::fit(&x, &y, &params).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for row in x.rows().chain(probe.iter().map(|r| r.as_slice())) {
            let p = forest.predict_row(row);
            prop_assert!(p >= lo && p <= hi, "{} outside [{}, {}]", p, lo, hi);
        }
        let gain = split_gain(&forest);
        let total: f64 = gain.iter().sum();
        prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-9);
    }
}
