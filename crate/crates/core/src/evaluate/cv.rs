//! K-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldPolicy {
    /// Random permutation, then equal chunks.
    #[default]
    Shuffled,
    /// Contiguous chunks in row (time) order.
    Blocked,
}

impl std::str::FromStr for FoldPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffled" => Ok(Self::Shuffled),
            "blocked" => Ok(Self::Blocked),
            other => Err(Error::InvalidParameter(format!("unknown fold policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_row: Vec<usize>,
    pub k: usize,
    pub policy: FoldPolicy,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&r| self.fold_of_row[r] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&r| self.fold_of_row[r] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Splits `n_rows` rows into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n_rows: usize, k: usize, policy: FoldPolicy, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if n_rows < k {
        return Err(Error::Data(format!("{n_rows} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    if policy == FoldPolicy::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (base, extra) = (n_rows / k, n_rows % k);
    let mut fold_of_row = vec![0; n_rows];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            fold_of_row[row] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment {
        fold_of_row,
        k,
        policy,
        seed,
    })
}

/// Mixes a stream index into a seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_rows_five_folds() {
        let a = kfold_split(10, 5, FoldPolicy::Shuffled, 1).unwrap();
        assert_eq!(a.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn blocked_folds_are_contiguous() {
        let a = kfold_split(23, 5, FoldPolicy::Blocked, 0).unwrap();
        for f in 0..5 {
            let rows = a.test_rows(f);
            assert!(rows.windows(2).all(|w| w[1] == w[0] + 1));
        }
        assert!(a.fold_of_row.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn same_seed_same_assignment() {
        let a = kfold_split(100, 5, FoldPolicy::Shuffled, 9).unwrap();
        let b = kfold_split(100, 5, FoldPolicy::Shuffled, 9).unwrap();
        let c = kfold_split(100, 5, FoldPolicy::Shuffled, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.fold_of_row, c.fold_of_row);
    }

    #[test]
    fn too_few_rows() {
        assert!(kfold_split(4, 5, FoldPolicy::Shuffled, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(n in 5usize..500, seed in any::<u64>(), blocked in any::<bool>()) {
            let policy = if blocked { FoldPolicy::Blocked } else { FoldPolicy::Shuffled };
            let a = kfold_split(n, 5, policy, seed).unwrap();
            let sizes = a.fold_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().all(|&s| s == n / 5 || s == n.div_ceil(5)));
            for f in 0..5 {
                prop_assert_eq!(a.test_rows(f).len() + a.train_rows(f).len(), n);
            }
        }
    }
}
