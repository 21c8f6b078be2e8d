use ndarray::ArrayView2;
use rand::Rng;

use super::{check_width, Predictor};
use crate::error::Result;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A single CART regression tree (squared-error splits, `x <= t` goes left).
#[derive(Debug, Clone)]
pub struct RegressionTree {
    p: usize,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl RegressionTree {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], rows: &[usize], params: TreeParams) -> Self {
        let mut tree = RegressionTree { p: x.ncols(), nodes: Vec::new() };
        tree.grow(x, y, rows.to_vec(), 0, params);
        tree
    }

    fn grow(&mut self, x: ArrayView2<'_, f64>, y: &[f64], rows: Vec<usize>, depth: usize, params: TreeParams) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
            return id;
        }
        let Some(best) = best_split(x, y, &rows, params.min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, best.feature]] <= best.threshold);
        let left = self.grow(x, y, l, depth + 1, params);
        let right = self.grow(x, y, r, depth + 1, params);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    id = if row(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

fn best_split(x: ArrayView2<'_, f64>, y: &[f64], rows: &[usize], min_leaf: usize) -> Option<Best> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let mut best: Option<Best> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for j in 0..x.ncols() {
        pairs.clear();
        pairs.extend(rows.iter().map(|&i| (x[[i, j]], y[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += pairs[k].1;
            let nl = k + 1;
            let nr = n - nl;
            if pairs[k].0 == pairs[k + 1].0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            // reduction in SSE relative to the parent, up to a constant
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - total * total / n as f64;
            if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Best { feature: j, threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0), gain });
            }
        }
    }
    best
}

impl Predictor for RegressionTree {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.p, &x)?;
        Ok(x.outer_iter().map(|r| self.predict_row(|j| r[j])).collect())
    }

    fn name(&self) -> &str {
        "tree"
    }
}

/// Bootstrap-aggregated regression trees.
#[derive(Debug, Clone)]
pub struct BaggedTrees {
    p: usize,
    trees: Vec<RegressionTree>,
}

impl BaggedTrees {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], n_trees: usize, params: TreeParams, seed: u64) -> Self {
        let n = x.nrows();
        let mut rng = stream_rng(seed, Stream::Learner);
        let trees = (0..n_trees)
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, &rows, params)
            })
            .collect();
        BaggedTrees { p: x.ncols(), trees }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Predictor for BaggedTrees {
    fn n_features(&self) -> usize {
        self.p
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_width(self.p, &x)?;
        let k = self.trees.len() as f64;
        Ok(x.outer_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(|j| r[j])).sum::<f64>() / k)
            .collect())
    }

    fn name(&self) -> &str {
        "bagged-trees"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn step_function_is_learned_exactly() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let rows: Vec<usize> = (0..20).collect();
        let t = RegressionTree::fit(x.view(), &y, &rows, TreeParams { max_depth: 3, min_leaf: 1 });
        assert_eq!(t.predict(x.view()).unwrap(), y);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both columns separate y identically
        let x = Array2::from_shape_fn((10, 2), |(i, _)| i as f64);
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let rows: Vec<usize> = (0..10).collect();
        let t = RegressionTree::fit(x.view(), &y, &rows, TreeParams { max_depth: 1, min_leaf: 1 });
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 4.5);
            }
            Node::Leaf(_) => panic!("expected a split"),
        }
    }

    #[test]
    fn bagging_is_seed_deterministic() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 13 + j * 7) % 29) as f64);
        let y: Vec<f64> = x.outer_iter().map(|r| r[0] - r[1]).collect();
        let p = TreeParams { max_depth: 4, min_leaf: 2 };
        let a = BaggedTrees::fit(x.view(), &y, 5, p, 9).predict(x.view()).unwrap();
        let b = BaggedTrees::fit(x.view(), &y, 5, p, 9).predict(x.view()).unwrap();
        assert_eq!(a, b);
    }
}
