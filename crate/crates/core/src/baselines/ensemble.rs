use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Presorted, TreeNode, TreeParams};
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d).map(|r| self.predict_row(r)).collect()
    }
}

/// Random forest: each tree sees a bootstrap resample (when enabled) and a
/// fresh random feature subset at every split. Trees grow in parallel from
/// per-tree seeds.
pub fn forest_fit(x: &[f64], d: usize, y: &[f64], params: ForestParams, seed: u64) -> Forest {
    let presorted = Presorted::new(x, d);
    let n = y.len();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        feature_subsample: params.feature_subsample,
    };
    let trees = par::map_indexed(params.n_trees.max(1), |t| {
        let mut rng = rng::stream(seed, &[0xF0, t as u64]);
        let sorted = if params.bootstrap {
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            presorted.with_counts(&counts)
        } else {
            presorted.all()
        };
        grow_tree(x, d, y, sorted, tree_params, &mut rng)
    });
    Forest { trees }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub lr: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base: f64,
    pub lr: f64,
    pub trees: Vec<TreeNode>,
    /// Mean squared training error after each round.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.lr * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d).map(|r| self.predict_row(r)).collect()
    }
}

/// Gradient boosting with squared loss: each round fits a tree to the
/// current residuals and adds `lr` times its output.
pub fn gbt_fit(x: &[f64], d: usize, y: &[f64], params: GbtParams) -> GbtModel {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let presorted = Presorted::new(x, d);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        feature_subsample: 1.0,
    };
    let mut rng = rng::stream(0, &[0x6B7]);
    let mut pred = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
        let tree = grow_tree(x, d, &residual, presorted.all(), tree_params, &mut rng);
        for (p, row) in pred.iter_mut().zip(x.chunks(d)) {
            *p += params.lr * tree.predict_row(row);
        }
        train_loss.push(y.iter().zip(&pred).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n as f64);
        trees.push(tree);
    }
    GbtModel {
        base,
        lr: params.lr,
        trees,
        train_loss,
    }
}
