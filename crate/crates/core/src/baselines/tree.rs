use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Regression tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d).map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Share of features drawn as split candidates at each node.
    pub feature_subsample: f64,
}

/// Row indices sorted by each feature, computed once per training matrix.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &[f64], d: usize) -> Self {
        let n = if d == 0 { 0 } else { x.len() / d };
        let order = (0..d)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize * d + f].total_cmp(&x[b as usize * d + f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }

    pub(crate) fn all(&self) -> Vec<Vec<u32>> {
        self.order.clone()
    }

    /// Sorted lists for a multiset of rows: row `i` appears `counts[i]` times.
    pub(crate) fn with_counts(&self, counts: &[u32]) -> Vec<Vec<u32>> {
        self.order
            .iter()
            .map(|o| {
                o.iter()
                    .flat_map(|&i| std::iter::repeat_n(i, counts[i as usize] as usize))
                    .collect()
            })
            .collect()
    }
}

struct Grower<'a> {
    x: &'a [f64],
    d: usize,
    y: &'a [f64],
    params: TreeParams,
    goes_left: Vec<bool>,
}

impl Grower<'_> {
    fn value(&self, row: u32, f: usize) -> f64 {
        self.x[row as usize * self.d + f]
    }

    fn grow(&mut self, sorted: Vec<Vec<u32>>, depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let rows = &sorted[0];
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let mean = total / n as f64;
        let leaf = TreeNode::Leaf { value: mean };
        let (lo, hi) = rows
            .iter()
            .map(|&r| self.y[r as usize])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let min_leaf = self.params.min_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf || lo == hi {
            return leaf;
        }
        let candidates: Vec<usize> = if self.params.feature_subsample < 1.0 {
            let m = ((self.params.feature_subsample * self.d as f64).round() as usize).clamp(1, self.d);
            let mut f = sample(rng, self.d, m).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..self.d).collect()
        };
        let parent = total * total / n as f64;
        let sse: f64 = rows.iter().map(|&r| (self.y[r as usize] - mean).powi(2)).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            let list = &sorted[f];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.y[list[i] as usize];
                let n_left = i + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let (a, b) = (self.value(list[i], f), self.value(list[i + 1], f));
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        let Some((score, feature, threshold)) = best else {
            return leaf;
        };
        if !(score - parent > 1e-12 * sse.max(f64::MIN_POSITIVE)) {
            return leaf;
        }
        for &r in &sorted[feature] {
            self.goes_left[r as usize] = self.value(r, feature) <= threshold;
        }
        let (mut left, mut right) = (Vec::with_capacity(self.d), Vec::with_capacity(self.d));
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
            left.push(l);
            right.push(r);
        }
        let left = self.grow(left, depth + 1, rng);
        let right = self.grow(right, depth + 1, rng);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Grows one tree on the multiset given by `sorted` (one sorted row list per
/// feature, all holding the same rows).
pub(crate) fn grow_tree(
    x: &[f64],
    d: usize,
    y: &[f64],
    sorted: Vec<Vec<u32>>,
    params: TreeParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    if sorted.first().is_none_or(|s| s.is_empty()) {
        let mean = if y.is_empty() { 0.0 } else { y.iter().sum::<f64>() / y.len() as f64 };
        return TreeNode::Leaf { value: mean };
    }
    let mut grower = Grower {
        x,
        d,
        y,
        params,
        goes_left: vec![false; y.len()],
    };
    grower.grow(sorted, 0, rng)
}

/// Greedy CART regression tree over all features, scanning every boundary
/// between distinct sorted values and splitting at the midpoint.
pub fn cart_fit(x: &[f64], d: usize, y: &[f64], max_depth: usize, min_leaf: usize) -> TreeNode {
    let params = TreeParams {
        max_depth,
        min_leaf,
        feature_subsample: 1.0,
    };
    let mut rng = crate::rng::stream(0, &[]);
    grow_tree(x, d, y, Presorted::new(x, d).all(), params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_target_is_a_leaf() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        assert_eq!(cart_fit(&x, 1, &[3.0; 20], 10, 1), TreeNode::Leaf { value: 3.0 });
    }

    #[test]
    fn recovers_single_threshold() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 5.0 { -1.0 } else { 2.0 }).collect();
        let t = cart_fit(&x, 1, &y, 5, 1);
        assert_eq!(t.depth(), 1);
        match &t {
            TreeNode::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 4.5)),
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        assert_eq!(t.predict(&x, 1), y);
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let y: Vec<f64> = x.chunks(2).map(|r| (r[0] * 0.1).sin() + r[1] * 0.01).collect();
        let t = cart_fit(&x, 2, &y, 4, 7);
        assert!(t.depth() <= 4);
        fn min_leaf_size(t: &TreeNode, x: &[f64], rows: Vec<usize>) -> usize {
            match t {
                TreeNode::Leaf { .. } => rows.len(),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i * 2 + feature] <= *threshold);
                    min_leaf_size(left, x, l).min(min_leaf_size(right, x, r))
                }
            }
        }
        assert!(min_leaf_size(&t, &x, (0..100).collect()) >= 7);
    }

    proptest! {
        #[test]
        fn predictions_within_target_range(
            rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -100.0f64..100.0), 2..80),
            depth in 1usize..8,
        ) {
            let x: Vec<f64> = rows.iter().flat_map(|r| [r.0, r.1]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let t = cart_fit(&x, 2, &y, depth, 1);
            let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            for p in t.predict(&x, 2) {
                prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
            }
        }
    }
}
