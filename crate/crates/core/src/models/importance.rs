//! Random-forest feature importance: summed split gains and out-of-bag
//! permutation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::forest::{Node, RandomForest};
use crate::scalar::Scalar;

/// Summed squared-error reduction per feature over every split of every
/// tree, normalized to sum to 1. All zeros if the forest never split.
pub fn split_gain<T: Scalar>(forest: &RandomForest<T>) -> Vec<T> {
    let mut gains = vec![T::zero(); forest.n_features];
    for tree in &forest.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = node {
                gains[*feature] += *gain;
            }
        }
    }
    let total: T = gains.iter().copied().sum();
    if total > T::zero() {
        gains.iter_mut().for_each(|g| *g /= total);
    }
    gains
}

/// Out-of-bag permutation importance.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationImportance<T> {
    /// Mean over trees of (permuted OOB MSE - OOB MSE), per feature.
    pub raw: Vec<T>,
    /// Standard deviation of the per-tree increases, per feature.
    pub std: Vec<T>,
    /// Trees that had at least one OOB row.
    pub n_trees: usize,
}

impl<T: Scalar> PermutationImportance<T> {
    /// Raw values with negatives clamped to zero.
    pub fn clamped(&self) -> Vec<T> {
        self.raw.iter().map(|&v| v.max(T::zero())).collect()
    }
}

/// For every tree, permutes one feature at a time among that tree's OOB rows
/// and records the increase in OOB mean squared error.
pub fn permutation_oob<T: Scalar>(
    forest: &RandomForest<T>,
    x: &Matrix<T>,
    y: &[T],
    seed: u64,
) -> Result<PermutationImportance<T>> {
    if x.n_cols() != forest.n_features {
        return Err(Error::SchemaMismatch {
            expected: forest.n_features,
            found: x.n_cols(),
        });
    }
    if x.n_rows() != y.len() {
        return Err(Error::Data("feature rows and targets differ in length".into()));
    }
    if let Some(bad) = forest.oob_rows.iter().flatten().find(|&&r| r >= x.n_rows()) {
        return Err(Error::Data(format!(
            "OOB row {bad} outside the {} supplied rows; pass the training matrix",
            x.n_rows()
        )));
    }
    let p = forest.n_features;

    let per_tree: Vec<Vec<T>> = forest
        .trees
        .par_iter()
        .zip(&forest.oob_rows)
        .enumerate()
        .filter(|(_, (_, oob))| !oob.is_empty())
        .map(|(t, (tree, oob))| {
            let m = T::of_usize(oob.len());
            let base: T = oob
                .iter()
                .map(|&r| {
                    let e = tree.predict_row(x.row(r)) - y[r];
                    e * e
                })
                .sum::<T>()
                / m;
            let mut buf = vec![T::zero(); p];
            (0..p)
                .map(|j| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((t as u64) << 20) | j as u64);
                    let mut donors = oob.clone();
                    donors.shuffle(&mut rng);
                    let mse = oob
                        .iter()
                        .zip(&donors)
                        .map(|(&r, &d)| {
                            buf.copy_from_slice(x.row(r));
                            buf[j] = x.get(d, j);
                            let e = tree.predict_row(&buf) - y[r];
                            e * e
                        })
                        .sum::<T>()
                        / m;
                    mse - base
                })
                .collect()
        })
        .collect();

    if per_tree.is_empty() {
        return Err(Error::Data(
            "no tree has out-of-bag rows (bootstrap disabled?)".into(),
        ));
    }
    let k = T::of_usize(per_tree.len());
    let raw: Vec<T> = (0..p)
        .map(|j| per_tree.iter().map(|v| v[j]).sum::<T>() / k)
        .collect();
    let std = (0..p)
        .map(|j| {
            let var = per_tree
                .iter()
                .map(|v| (v[j] - raw[j]) * (v[j] - raw[j]))
                .sum::<T>()
                / k;
            var.sqrt()
        })
        .collect();
    Ok(PermutationImportance {
        raw,
        std,
        n_trees: per_tree.len(),
    })
}

/// Both importance estimates for named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub features: Vec<String>,
    pub split_gain: Vec<f64>,
    /// Permutation importance with negatives clamped to 0.
    pub permutation: Vec<f64>,
    pub permutation_raw: Vec<f64>,
    pub permutation_std: Vec<f64>,
}

impl ImportanceTable {
    pub fn compute<T: Scalar>(
        forest: &RandomForest<T>,
        x: &Matrix<T>,
        y: &[T],
        names: &[&str],
        seed: u64,
    ) -> Result<Self> {
        if names.len() != forest.n_features {
            return Err(Error::SchemaMismatch {
                expected: forest.n_features,
                found: names.len(),
            });
        }
        let perm = permutation_oob(forest, x, y, seed)?;
        let f = |v: Vec<T>| v.into_iter().map(Scalar::to_f64_lossy).collect::<Vec<_>>();
        Ok(Self {
            features: names.iter().map(|s| s.to_string()).collect(),
            split_gain: f(split_gain(forest)),
            permutation: f(perm.clamped()),
            permutation_raw: f(perm.raw),
            permutation_std: f(perm.std),
        })
    }

    /// Feature indices ordered by decreasing value of `column`.
    pub fn ranking(column: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..column.len()).collect();
        idx.sort_by(|&a, &b| column[b].total_cmp(&column[a]));
        idx
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "split_gain", "permutation", "permutation_raw", "permutation_std"])?;
        for i in 0..self.features.len() {
            w.write_record([
                self.features[i].clone(),
                self.split_gain[i].to_string(),
                self.permutation[i].to_string(),
                self.permutation_raw[i].to_string(),
                self.permutation_std[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<importance writer>", e))?;
        Ok(())
    }
}
