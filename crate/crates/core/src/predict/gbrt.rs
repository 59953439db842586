//! Gradient-boosted regression trees under squared loss.
//!
//! Trees are grown with exact greedy splits over sorted unique feature
//! values using the variance-reduction criterion. No row or column
//! subsampling, so a fit is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::learner::{Learner, ModelKind, ModelParams, Regressor};
use crate::predict::Matrix;

/// Splits must reduce the node's squared error by more than this fraction of
/// it; smaller gains are indistinguishable from rounding.
const MIN_REL_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat node array; node 0 is the root. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl Regressor for GbrtParams {
    fn check_dim(&self, dim: usize) -> Result<()> {
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::Validation(format!("tree {t} has no nodes")));
            }
            for n in &tree.nodes {
                if let Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = *n
                {
                    if feature >= dim || left >= tree.nodes.len() || right >= tree.nodes.len() {
                        return Err(Error::Validation(format!(
                            "tree {t} references a feature or node out of range"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.shrinkage * t.predict(x))
                .sum::<f64>()
    }
}

pub struct GbrtLearner {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Learner for GbrtLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::Gbrt {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            shrinkage: self.shrinkage,
            min_leaf: self.min_leaf,
        }
    }

    fn fit(&self, x: &Matrix, y: &[f64], _seed: u64) -> Result<ModelParams> {
        self.fit_with_trace(x, y).map(|(p, _)| ModelParams::Gbrt(p))
    }
}

impl GbrtLearner {
    /// Fits and also returns the mean squared training loss before the first
    /// tree and after each one (`n_trees + 1` entries).
    pub fn fit_with_trace(&self, x: &Matrix, y: &[f64]) -> Result<(GbrtParams, Vec<f64>)> {
        let n = x.n_rows();
        if n < 2 {
            return Err(Error::InvalidInput("gbrt needs at least 2 rows".into()));
        }
        let base_score = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base_score; n];
        let loss = |pred: &[f64]| {
            pred.iter()
                .zip(y)
                .map(|(p, t)| (t - p) * (t - p))
                .sum::<f64>()
                / n as f64
        };
        let mut trace = Vec::with_capacity(self.n_trees + 1);
        trace.push(loss(&pred));

        // per-feature row order, sorted once
        let order: Vec<Vec<usize>> = (0..x.n_cols())
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut trees = Vec::with_capacity(self.n_trees);
        let mut resid = vec![0.0; n];
        for _ in 0..self.n_trees {
            for i in 0..n {
                resid[i] = y[i] - pred[i];
            }
            let tree = TreeBuilder {
                x,
                resid: &resid,
                order: &order,
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
            }
            .build();
            for (i, p) in pred.iter_mut().enumerate() {
                *p += self.shrinkage * tree.predict(x.row(i));
            }
            trace.push(loss(&pred));
            trees.push(tree);
        }
        Ok((
            GbrtParams {
                base_score,
                shrinkage: self.shrinkage,
                trees,
            },
            trace,
        ))
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    resid: &'a [f64],
    order: &'a [Vec<usize>],
    max_depth: usize,
    min_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(&self) -> Tree {
        let n = self.x.n_rows();
        let mut in_node = vec![true; n];
        let mut nodes = Vec::new();
        self.grow(&mut nodes, &mut in_node, 0);
        Tree { nodes }
    }

    /// Grows the subtree for rows flagged in `member` and returns its index.
    fn grow(&self, nodes: &mut Vec<Node>, member: &mut [bool], depth: usize) -> usize {
        let rows: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
        let sum: f64 = rows.iter().map(|&i| self.resid[i]).sum();
        let mean = sum / rows.len() as f64;
        let at = nodes.len();
        nodes.push(Node::Leaf { value: mean });
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return at;
        }
        let Some(best) = self.best_split(member, rows.len(), sum) else {
            return at;
        };

        let mut left_mask = vec![false; member.len()];
        let mut right_mask = vec![false; member.len()];
        for &i in &rows {
            if self.x.get(i, best.feature) <= best.threshold {
                left_mask[i] = true;
            } else {
                right_mask[i] = true;
            }
        }
        let left = self.grow(nodes, &mut left_mask, depth + 1);
        let right = self.grow(nodes, &mut right_mask, depth + 1);
        nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&self, member: &[bool], n: usize, sum: f64) -> Option<BestSplit> {
        let parent = sum * sum / n as f64;
        let sq: f64 = (0..member.len())
            .filter(|&i| member[i])
            .map(|i| self.resid[i] * self.resid[i])
            .sum();
        let min_gain = MIN_REL_GAIN * sq;
        let mut best: Option<BestSplit> = None;
        for (j, order) in self.order.iter().enumerate() {
            let mut left_sum = 0.0;
            let mut prev: Option<usize> = None;
            for (left_n, &i) in order.iter().filter(|&&i| member[i]).enumerate() {
                if let Some(p) = prev {
                    let (xp, xi) = (self.x.get(p, j), self.x.get(i, j));
                    let right_n = n - left_n;
                    if xp < xi && left_n >= self.min_leaf && right_n >= self.min_leaf {
                        let right_sum = sum - left_sum;
                        let gain = left_sum * left_sum / left_n as f64
                            + right_sum * right_sum / right_n as f64
                            - parent;
                        if gain > min_gain
                            && gain > 0.0
                            && best.as_ref().is_none_or(|b| gain > b.gain)
                        {
                            let mut threshold = xp + (xi - xp) / 2.0;
                            // midpoint can round up to xi when the values are adjacent floats
                            if threshold >= xi {
                                threshold = xp;
                            }
                            best = Some(BestSplit {
                                feature: j,
                                threshold,
                                gain,
                            });
                        }
                    }
                }
                left_sum += self.resid[i];
                prev = Some(i);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learner(n_trees: usize, max_depth: usize, shrinkage: f64, min_leaf: usize) -> GbrtLearner {
        GbrtLearner {
            n_trees,
            max_depth,
            shrinkage,
            min_leaf,
        }
    }

    #[test]
    fn depth_zero_is_the_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![9.0]]).unwrap();
        let y = [1.0, 2.0, 3.0, 10.0];
        let (p, _) = learner(1, 0, 1.0, 1).fit_with_trace(&x, &y).unwrap();
        for q in [-3.0, 0.5, 100.0] {
            assert!((p.predict_row(&[q]) - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_split_on_step() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [0.0, 0.0, 10.0, 10.0];
        let (p, trace) = learner(1, 1, 1.0, 1).fit_with_trace(&x, &y).unwrap();
        assert_eq!(p.trees[0].depth(), 1);
        match p.trees[0].nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(*trace.last().unwrap(), 0.0);
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0.0, 0.0, 9.0];
        let (p, _) = learner(1, 3, 1.0, 2).fit_with_trace(&x, &y).unwrap();
        assert_eq!(p.trees[0].nodes.len(), 1);
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| vec![i as f64, (i * 7 % 13) as f64])
            .collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 31) % 17) as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let (p, _) = learner(5, 2, 0.3, 1).fit_with_trace(&x, &y).unwrap();
        assert!(p.trees.iter().all(|t| t.depth() <= 2));
    }
}
