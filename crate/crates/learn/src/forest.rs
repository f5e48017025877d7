//! Bagged Gini decision trees with per-split feature sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use retassess_core::dataset::CLASS_COUNT;
use retassess_core::seed;

use crate::{Dataset, LearnError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features examined per split (capped at the input width).
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: 12,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_features == 0 || self.min_leaf == 0 {
            return Err(LearnError::Hyper(
                "forest needs n_trees, max_features and min_leaf >= 1".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(LearnError::Hyper("forest max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf(u8),
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub(crate) trees: Vec<Tree>,
}

fn majority(counts: &[usize; CLASS_COUNT]) -> u8 {
    let mut best = 0;
    for c in 1..CLASS_COUNT {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best as u8
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Best {
    /// Higher score wins; near-ties go to the lower feature, then the lower threshold.
    fn beats(&self, other: &Option<Best>) -> bool {
        match other {
            None => true,
            Some(o) => {
                if self.score > o.score + 1e-9 {
                    true
                } else if self.score < o.score - 1e-9 {
                    false
                } else {
                    (self.feature, self.threshold) < (o.feature, o.threshold)
                }
            }
        }
    }
}

struct Builder<'a, R> {
    data: &'a Dataset,
    params: &'a ForestParams,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let y = self.data.labels();
        let mut counts = [0usize; CLASS_COUNT];
        for &r in rows.iter() {
            counts[y[r] as usize] += 1;
        }
        let at = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(majority(&counts)));
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let deep = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || deep || rows.len() < 2 * self.params.min_leaf {
            return at;
        }
        let Some(best) = self.best_split(rows, &counts) else {
            return at;
        };
        let f = best.feature;
        let x = |r: usize| self.data.row(r)[f];
        rows.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
        let cut = rows.partition_point(|&r| x(r) <= best.threshold);
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at as usize] = Node::Split {
            feature: f as u32,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&mut self, rows: &[usize], total: &[usize; CLASS_COUNT]) -> Option<Best> {
        let d = self.data.n_features();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        let y = self.data.labels();
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Best> = None;
        let mut visited = 0;
        let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);
        for f in features {
            if visited >= self.params.max_features {
                break;
            }
            column.clear();
            column.extend(rows.iter().map(|&r| (self.data.row(r)[f], y[r])));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[n - 1].0 {
                // Constant features do not count toward the budget.
                continue;
            }
            visited += 1;
            let mut left = [0usize; CLASS_COUNT];
            let mut right = *total;
            let (mut sl, mut sr): (f64, f64) =
                (0.0, total.iter().map(|&c| (c * c) as f64).sum());
            for k in 0..n - 1 {
                let c = column[k].1 as usize;
                sl += (2 * left[c] + 1) as f64;
                sr -= (2 * right[c] - 1) as f64;
                left[c] += 1;
                right[c] -= 1;
                let (nl, nr) = (k + 1, n - k - 1);
                if column[k].0 == column[k + 1].0 || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (column[k].0, column[k + 1].0);
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                let cand = Best {
                    score: sl / nl as f64 + sr / nr as f64,
                    feature: f,
                    threshold,
                };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Fit one tree on `rows` (duplicates allowed, as produced by bootstrapping).
pub fn grow_tree<R: Rng>(data: &Dataset, params: &ForestParams, rows: &mut [usize], rng: R) -> Tree {
    let mut b = Builder {
        data,
        params,
        rng,
        nodes: Vec::new(),
    };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

impl Forest {
    pub fn fit(data: &Dataset, params: &ForestParams, seed: u64) -> Result<Forest> {
        params.validate()?;
        let n = data.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed, &[0xf0, t as u64]);
                let mut rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow_tree(data, params, &mut rows, rng)
            })
            .collect();
        Ok(Forest { trees })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Majority vote over trees; ties go to the lowest class.
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut votes = [0usize; CLASS_COUNT];
        for t in &self.trees {
            votes[t.predict(row) as usize] += 1;
        }
        majority(&votes)
    }
}
