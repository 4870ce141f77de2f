//! Bagged CART ensemble with Gini impurity.
//!
//! Each tree sees a bootstrap sample and, at each node, a random subset of
//! `max_features` features (more are examined when none of those admits a
//! split). Leaves vote for their majority class; the ensemble probability is
//! the fraction of trees voting positive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("max_features must be at least 1".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        positive: bool,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, row: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive } => return positive,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// `rows` must already be in canonical order; see `FeatureMatrix::canonical_order`.
    pub fn fit(rows: &[&[f64]], labels: &[bool], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let d = rows.first().map_or(0, |r| r.len());
        if d == 0 {
            return Err(Error::Invalid("forest needs at least one feature".into()));
        }
        let mtry = params.features_per_split(d);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed, "forest-tree", &[t as u64]);
                let n = rows.len();
                let samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                TreeBuilder {
                    rows,
                    labels,
                    params,
                    mtry,
                    perm: (0..d).collect(),
                    rng,
                }
                .build(samples)
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            trees,
        })
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.vote(row)).count();
        votes as f64 / self.trees.len() as f64
    }
}

struct TreeBuilder<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [bool],
    params: &'a ForestParams,
    mtry: usize,
    perm: Vec<usize>,
    rng: ChaCha8Rng,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// n · Gini impurity of a two-class node.
fn weighted_gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64;
    let q = (n - pos) as f64;
    n as f64 - (p * p + q * q) / n as f64
}

impl TreeBuilder<'_> {
    fn build(mut self, samples: Vec<usize>) -> Tree {
        let mut nodes = vec![Node::Leaf { positive: false }];
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((id, samples, depth)) = stack.pop() {
            let pos = samples.iter().filter(|&&i| self.labels[i]).count();
            let n = samples.len();
            let leaf = Node::Leaf {
                positive: 2 * pos > n,
            };
            let too_deep = self.params.max_depth.is_some_and(|m| depth >= m);
            if pos == 0 || pos == n || too_deep || n < 2 * self.params.min_samples_leaf {
                nodes[id] = leaf;
                continue;
            }
            let Some(best) = self.best_split(&samples) else {
                nodes[id] = leaf;
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) = samples
                .into_iter()
                .partition(|&i| self.rows[i][best.feature] <= best.threshold);
            let l = nodes.len();
            nodes.push(Node::Leaf { positive: false });
            nodes.push(Node::Leaf { positive: false });
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: l,
                right: l + 1,
            };
            stack.push((l + 1, right, depth + 1));
            stack.push((l, left, depth + 1));
        }
        Tree { nodes }
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<BestSplit> {
        let d = self.perm.len();
        let min_leaf = self.params.min_samples_leaf;
        let n = samples.len();
        let total_pos = samples.iter().filter(|&&i| self.labels[i]).count();
        let mut best: Option<BestSplit> = None;
        let mut values: Vec<(f64, bool)> = Vec::with_capacity(n);
        for k in 0..d {
            if k >= self.mtry && best.is_some() {
                break;
            }
            // lazy Fisher-Yates: draw the next feature without replacement
            let j = self.rng.gen_range(k..d);
            self.perm.swap(k, j);
            let feature = self.perm[k];

            values.clear();
            values.extend(samples.iter().map(|&i| (self.rows[i][feature], self.labels[i])));
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            if values[0].0 == values[n - 1].0 {
                continue;
            }
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += usize::from(values[i].1);
                let left_n = i + 1;
                if values[i].0 == values[i + 1].0 || left_n < min_leaf || n - left_n < min_leaf {
                    continue;
                }
                let impurity = weighted_gini(left_pos, left_n)
                    + weighted_gini(total_pos - left_pos, n - left_n);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let (a, b) = (values[i].0, values[i + 1].0);
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}
