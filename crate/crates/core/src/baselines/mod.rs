//! Centralized shallow regressors and a random hyperparameter search.

mod ensemble;
mod knn;
mod linear;
mod search;
mod tree;

pub use ensemble::{forest_fit, gbt_fit, Forest, ForestParams, GbtModel, GbtParams};
pub use knn::knn_predict;
pub use linear::{ols_fit, OlsModel};
pub use search::{random_search, Candidate, HpoBudget, ParamRange, SearchOutcome, SearchSpace};
pub use tree::{cart_fit, TreeNode, TreeParams};

use serde::{Deserialize, Serialize};

use crate::eval::r_squared;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Forest,
    Gbt,
    Cart,
    Knn,
    Ols,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Forest, Family::Gbt, Family::Cart, Family::Knn, Family::Ols];

    pub fn name(self) -> &'static str {
        match self {
            Family::Forest => "random forest",
            Family::Gbt => "gradient boosting",
            Family::Cart => "decision tree",
            Family::Knn => "k-nearest neighbors",
            Family::Ols => "linear regression",
        }
    }

    /// Search ranges. OLS has no hyperparameters.
    pub fn default_space(self) -> SearchSpace {
        use ParamRange::*;
        match self {
            Family::Forest => SearchSpace::new(&[
                ("n_trees", Int { lo: 50, hi: 500 }),
                ("max_depth", Int { lo: 3, hi: 20 }),
                ("min_leaf", Int { lo: 1, hi: 10 }),
                ("feature_subsample", Uniform { lo: 0.33, hi: 1.0 }),
            ]),
            Family::Gbt => SearchSpace::new(&[
                ("n_rounds", Int { lo: 50, hi: 500 }),
                ("lr", LogUniform { lo: 0.01, hi: 0.3 }),
                ("max_depth", Int { lo: 2, hi: 8 }),
            ]),
            Family::Cart => SearchSpace::new(&[
                ("max_depth", Int { lo: 2, hi: 20 }),
                ("min_leaf", Int { lo: 1, hi: 20 }),
            ]),
            Family::Knn => SearchSpace::new(&[("k", Int { lo: 1, hi: 50 })]),
            Family::Ols => SearchSpace::new(&[]),
        }
    }

    pub fn model(self, c: &Candidate) -> Result<BaselineModel> {
        let get = |k: &str| {
            c.get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("{} candidate lacks {k}", self.name())))
        };
        let int = |k: &str| get(k).map(|v| v.round().max(0.0) as usize);
        Ok(match self {
            Family::Ols => BaselineModel::Ols,
            Family::Knn => BaselineModel::Knn { k: int("k")? },
            Family::Cart => BaselineModel::Cart {
                max_depth: int("max_depth")?,
                min_leaf: int("min_leaf")?,
            },
            Family::Forest => BaselineModel::Forest(ForestParams {
                n_trees: int("n_trees")?,
                max_depth: int("max_depth")?,
                min_leaf: int("min_leaf")?,
                feature_subsample: get("feature_subsample")?,
                bootstrap: true,
            }),
            Family::Gbt => BaselineModel::Gbt(GbtParams {
                n_rounds: int("n_rounds")?,
                lr: get("lr")?,
                max_depth: int("max_depth")?,
                min_leaf: 1,
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaselineModel {
    Ols,
    Knn { k: usize },
    Cart { max_depth: usize, min_leaf: usize },
    Forest(ForestParams),
    Gbt(GbtParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Ols(OlsModel),
    Knn { x: Vec<f64>, d: usize, y: Vec<f64>, k: usize },
    Tree { tree: TreeNode, d: usize },
    Forest { forest: Forest, d: usize },
    Gbt { model: GbtModel, d: usize },
}

impl BaselineModel {
    pub fn fit(&self, x: &[f64], d: usize, y: &[f64], seed: u64) -> Result<Fitted> {
        if y.is_empty() || x.len() != y.len() * d {
            return Err(Error::Shape(format!("{} rows of {d} features expected", y.len())));
        }
        Ok(match *self {
            BaselineModel::Ols => Fitted::Ols(ols_fit(x, d, y)?),
            BaselineModel::Knn { k } => {
                if !(1..=y.len()).contains(&k) {
                    return Err(Error::Config(format!("k = {k} must be in 1..={}", y.len())));
                }
                Fitted::Knn {
                    x: x.to_vec(),
                    d,
                    y: y.to_vec(),
                    k,
                }
            }
            BaselineModel::Cart { max_depth, min_leaf } => Fitted::Tree {
                tree: cart_fit(x, d, y, max_depth, min_leaf),
                d,
            },
            BaselineModel::Forest(p) => Fitted::Forest {
                forest: forest_fit(x, d, y, p, seed),
                d,
            },
            BaselineModel::Gbt(p) => Fitted::Gbt {
                model: gbt_fit(x, d, y, p),
                d,
            },
        })
    }
}

impl Fitted {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Fitted::Ols(m) => m.predict(x),
            Fitted::Knn { x: tx, d, y, k } => par::try_map_indexed(x.len() / d, |i| {
                knn_predict(tx, *d, y, &x[i * d..(i + 1) * d], *k)
            })?,
            Fitted::Tree { tree, d } => tree.predict(x, *d),
            Fitted::Forest { forest, d } => forest.predict(x, *d),
            Fitted::Gbt { model, d } => model.predict(x, *d),
        })
    }
}

fn gather(x: &[f64], d: usize, y: &[f64], rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let xs = rows.iter().flat_map(|&r| x[r * d..(r + 1) * d].iter().copied()).collect();
    let ys = rows.iter().map(|&r| y[r]).collect();
    (xs, ys)
}

/// Held-out R² of `model` on each (train, test) fold, folds in sequence.
pub fn fold_scores(
    model: &BaselineModel,
    x: &[f64],
    d: usize,
    y: &[f64],
    folds: &[(Vec<usize>, Vec<usize>)],
    seed: u64,
) -> Result<Vec<f64>> {
    folds
        .iter()
        .enumerate()
        .map(|(i, (train, test))| {
            let (tx, ty) = gather(x, d, y, train);
            let (vx, vy) = gather(x, d, y, test);
            let fitted = model.fit(&tx, d, &ty, crate::rng::derive(seed, &[i as u64]))?;
            r_squared(&vy, &fitted.predict(&vx)?)
        })
        .collect()
}
