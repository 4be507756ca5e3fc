//! Random-forest regression: bootstrap-aggregated CART trees with random
//! feature subsets at each split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 5,
            max_features: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidParameter("max_features must be >= 1".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    Leaf {
        value: T,
        n_samples: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: T,
        left: usize,
        right: usize,
        /// Reduction in summed squared error achieved by this split.
        gain: T,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionTree<T> {
    /// Arena; the root is node 0.
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => idx = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Grows a tree on the given sample (row indices may repeat).
    pub fn grow<R: Rng>(
        x: &Matrix<T>,
        y: &[T],
        sample: Vec<usize>,
        params: &ForestParams,
        rng: &mut R,
    ) -> Self {
        let mut builder = TreeBuilder {
            x,
            y,
            params,
            mtry: params.features_per_split(x.n_cols()),
            nodes: Vec::new(),
            features: (0..x.n_cols()).collect(),
            pairs: Vec::with_capacity(sample.len()),
        };
        let mut stack = vec![(0usize, sample, 0usize)];
        builder.nodes.push(Node::Leaf {
            value: T::zero(),
            n_samples: 0,
        });
        while let Some((slot, rows, depth)) = stack.pop() {
            match builder.split_node(&rows, depth, rng) {
                Some((feature, threshold, gain)) => {
                    let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| x.get(r, feature) <= threshold);
                    let left = builder.nodes.len();
                    let right = left + 1;
                    let leaf = Node::Leaf {
                        value: T::zero(),
                        n_samples: 0,
                    };
                    builder.nodes.push(leaf.clone());
                    builder.nodes.push(leaf);
                    builder.nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                        n_samples: rows.len(),
                    };
                    // right pushed first so the left subtree is built first
                    stack.push((right, r_rows, depth + 1));
                    stack.push((left, l_rows, depth + 1));
                }
                None => {
                    let value = rows.iter().map(|&r| y[r]).sum::<T>() / T::of_usize(rows.len());
                    builder.nodes[slot] = Node::Leaf {
                        value,
                        n_samples: rows.len(),
                    };
                }
            }
        }
        Self {
            nodes: builder.nodes,
        }
    }
}

struct TreeBuilder<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node<T>>,
    features: Vec<usize>,
    pairs: Vec<(T, T)>,
}

impl<T: Scalar> TreeBuilder<'_, T> {
    /// Best `(feature, threshold, gain)` for a node, or `None` for a leaf.
    fn split_node<R: Rng>(&mut self, rows: &[usize], depth: usize, rng: &mut R) -> Option<(usize, T, T)> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        if n < 2 * min_leaf || self.params.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let nf = T::of_usize(n);
        let node_mean = rows.iter().map(|&r| self.y[r]).sum::<T>() / nf;
        let sse: T = rows
            .iter()
            .map(|&r| (self.y[r] - node_mean) * (self.y[r] - node_mean))
            .sum();
        let scale = node_mean.abs().max(T::one());
        if sse <= T::epsilon() * scale * scale * nf {
            return None;
        }
        let total: T = rows.iter().map(|&r| self.y[r] - node_mean).sum();
        let base = total * total / nf;

        self.features.shuffle(rng);
        let mut best: Option<(usize, T, T)> = None;
        for k in 0..self.features.len() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            let f = self.features[k];
            self.pairs.clear();
            self.pairs
                .extend(rows.iter().map(|&r| (self.x.get(r, f), self.y[r] - node_mean)));
            self.pairs
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            let mut left_sum = T::zero();
            for i in 0..n - 1 {
                left_sum += self.pairs[i].1;
                let n_left = i + 1;
                if n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / T::of_usize(n_left)
                    + right_sum * right_sum / T::of_usize(n - n_left)
                    - base;
                if best.map_or(true, |(_, _, g)| gain > g) {
                    let mid = (lo + hi) / T::of(2.0);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, threshold, gain));
                }
            }
        }
        best.filter(|&(_, _, g)| g > T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForest<T> {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<RegressionTree<T>>,
    /// Training rows never drawn into each tree's bootstrap sample.
    pub oob_rows: Vec<Vec<usize>>,
}

/// RNG of tree `index`; independent of scheduling.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl<T: Scalar> RandomForest<T> {
    pub fn fit(x: &Matrix<T>, y: &[T], params: &ForestParams) -> Result<Self> {
        params.validate()?;
        let n = x.n_rows();
        if n != y.len() {
            return Err(Error::Data(format!("{n} feature rows but {} targets", y.len())));
        }
        if n < 2 * params.min_leaf || n == 0 {
            return Err(Error::Data(format!(
                "forest needs at least {} rows (2 x min_leaf), got {n}",
                2 * params.min_leaf
            )));
        }
        let grown: Vec<(RegressionTree<T>, Vec<usize>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(params.seed, t);
                let (sample, oob) = if params.bootstrap {
                    let mut drawn = vec![false; n];
                    let sample: Vec<usize> = (0..n)
                        .map(|_| {
                            let r = rng.random_range(0..n);
                            drawn[r] = true;
                            r
                        })
                        .collect();
                    let oob = (0..n).filter(|&r| !drawn[r]).collect();
                    (sample, oob)
                } else {
                    ((0..n).collect(), Vec::new())
                };
                (RegressionTree::grow(x, y, sample, params, &mut rng), oob)
            })
            .collect();
        let (trees, oob_rows) = grown.into_iter().unzip();
        Ok(Self {
            params: *params,
            n_features: x.n_cols(),
            trees,
            oob_rows,
        })
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<T>() / T::of_usize(self.trees.len())
    }

    pub fn predict(&self, x: &Matrix<T>) -> Vec<T> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }
}
