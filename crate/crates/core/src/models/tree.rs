//! CART classification trees (Gini), random forests, and the two-layer
//! TLEL ensemble built from them.
//!
//! Splits are `x <= threshold` where the threshold is an observed value,
//! so predictions are unchanged when a feature column is multiplied by a
//! positive constant.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        p: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_mass(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    total * 2.0 * p * (1.0 - p)
}

impl DecisionTree {
    /// Fits on the rows listed in `rows` (duplicates act as weights).
    pub fn fit(x: &[Vec<f64>], y: &[u8], rows: &[usize], params: &TreeParams, rng: &mut ChaCha8Rng) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut nodes = vec![Node::Leaf { p: 0.0 }];
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let pos = idx.iter().filter(|&&i| y[i] == 1).count();
            let p = if idx.is_empty() {
                0.0
            } else {
                pos as f64 / idx.len() as f64
            };
            let pure = pos == 0 || pos == idx.len();
            let depth_done = params.max_depth.is_some_and(|m| depth >= m);
            if pure || depth_done || idx.len() < params.min_samples_split.max(2) || d == 0 {
                nodes[slot] = Node::Leaf { p };
                continue;
            }
            let features: Vec<usize> = match params.max_features {
                Some(m) if m < d => sample(rng, d, m.max(1)).into_vec(),
                _ => (0..d).collect(),
            };
            let Some(best) = best_split(x, y, &idx, &features) else {
                nodes[slot] = Node::Leaf { p };
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| x[i][best.feature] <= best.threshold);
            let l = nodes.len();
            nodes.push(Node::Leaf { p: 0.0 });
            nodes.push(Node::Leaf { p: 0.0 });
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: l,
                right: l + 1,
            };
            stack.push((l + 1, right, depth + 1));
            stack.push((l, left, depth + 1));
        }
        Self { nodes }
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p } => return *p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

fn best_split(x: &[Vec<f64>], y: &[u8], idx: &[usize], features: &[usize]) -> Option<BestSplit> {
    let total = idx.len() as f64;
    let total_pos = idx.iter().filter(|&&i| y[i] == 1).count() as f64;
    let parent = gini_mass(total_pos, total);
    let mut best: Option<BestSplit> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_pos = 0.0;
        for k in 0..order.len() - 1 {
            left_pos += f64::from(y[order[k]]);
            let (here, next) = (x[order[k]][f], x[order[k + 1]][f]);
            if here == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let impurity = gini_mass(left_pos, nl) + gini_mass(total_pos - left_pos, total - nl);
            if impurity < parent - 1e-12 && best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: here,
                    impurity,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn predict_one(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict_one(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlelParams {
    pub forests: usize,
    pub trees_per_forest: usize,
    pub tree: TreeParams,
    pub seed: u64,
}

impl Default for TlelParams {
    fn default() -> Self {
        Self {
            forests: 10,
            trees_per_forest: 10,
            tree: TreeParams::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tlel {
    pub forests: Vec<RandomForest>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn bootstrap(rng: &mut ChaCha8Rng, pool: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

impl Tlel {
    /// Each forest sees a bootstrap with equal class counts (the minority
    /// size); each of its trees a bootstrap of that sample with
    /// `sqrt(d)` features per split unless `params.tree` says otherwise.
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: &TlelParams) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut tree_params = params.tree;
        if tree_params.max_features.is_none() {
            tree_params.max_features = Some(((d as f64).sqrt().floor() as usize).max(1));
        }
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
        let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
        let m = pos.len().min(neg.len()).max(1);
        let mut forests = Vec::with_capacity(params.forests);
        for f in 0..params.forests {
            let mut rng = rng_for(params.seed, (f * (params.trees_per_forest + 1)) as u64);
            let mut balanced = Vec::with_capacity(2 * m);
            for class in [&pos, &neg] {
                if !class.is_empty() {
                    balanced.extend(bootstrap(&mut rng, class, m));
                }
            }
            let trees = (0..params.trees_per_forest)
                .map(|t| {
                    let mut rng = rng_for(params.seed, (f * (params.trees_per_forest + 1) + t + 1) as u64);
                    let rows = bootstrap(&mut rng, &balanced, balanced.len());
                    DecisionTree::fit(x, y, &rows, &tree_params, &mut rng)
                })
                .collect();
            forests.push(RandomForest { trees });
        }
        Self { forests }
    }

    pub fn predict_one(&self, row: &[f64]) -> f64 {
        if self.forests.is_empty() {
            return 0.0;
        }
        self.forests.iter().map(|f| f.predict_one(row)).sum::<f64>() / self.forests.len() as f64
    }
}
