use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Hyperparameters, MethodSpec};
use crate::error::{Error, Result};

pub const REGISTERED_LEARNERS: [&str; 3] = ["decision_tree", "random_forest", "logistic_regression"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    fn impurity(self, pos: f64, n: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        let p = pos / n;
        match self {
            Criterion::Gini => 2.0 * p * (1.0 - p),
            Criterion::Entropy => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_features: f64,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: Criterion::Gini,
            max_features: 1.0,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

fn bad(param: &str, message: &str) -> Error {
    Error::HyperparameterRange {
        param: param.to_string(),
        message: message.to_string(),
    }
}

fn get_usize(hp: &Hyperparameters, key: &str, min: i64) -> Result<Option<usize>> {
    match hp.get(key) {
        None => Ok(None),
        Some(v) => match v.as_i64() {
            Some(i) if i >= min => Ok(Some(i as usize)),
            _ => Err(bad(key, &format!("expected an integer ≥ {min}, got {v}"))),
        },
    }
}

fn get_f64(hp: &Hyperparameters, key: &str) -> Result<Option<f64>> {
    match hp.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| bad(key, &format!("expected a number, got {v}"))),
    }
}

impl TreeParams {
    pub fn from_hyperparameters(hp: &Hyperparameters) -> Result<TreeParams> {
        let mut p = TreeParams::default();
        if let Some(c) = hp.get("criterion") {
            p.criterion = match c.as_str() {
                Some("gini") => Criterion::Gini,
                Some("entropy") => Criterion::Entropy,
                _ => return Err(bad("criterion", "expected `gini` or `entropy`")),
            };
        }
        if let Some(f) = get_f64(hp, "max_features")? {
            if !(f > 0.0 && f <= 1.0) {
                return Err(bad("max_features", "must lie in (0, 1]"));
            }
            p.max_features = f;
        }
        p.max_depth = get_usize(hp, "max_depth", 1)?;
        p.min_samples_split = get_usize(hp, "min_samples_split", 2)?.unwrap_or(2);
        p.min_samples_leaf = get_usize(hp, "min_samples_leaf", 1)?.unwrap_or(1);
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        score: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART tree; `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub importances: Vec<f64>,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    params: TreeParams,
    n_features: usize,
    k: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importances: Vec<f64>,
    total: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        self.nodes.push(Node::Leaf {
            score: pos as f64 / rows.len() as f64,
            n: rows.len(),
        });
        self.nodes.len() - 1
    }

    fn candidates(&mut self) -> Vec<usize> {
        if self.k >= self.n_features {
            (0..self.n_features).collect()
        } else {
            let mut c = sample(&mut self.rng, self.n_features, self.k).into_vec();
            c.sort_unstable();
            c
        }
    }

    /// Best (gain, feature, threshold) over the candidate features.
    fn best_split(&mut self, rows: &[usize]) -> Option<(f64, usize, f64)> {
        let n = rows.len() as f64;
        let pos_total = rows.iter().filter(|&&r| self.y[r]).count() as f64;
        let parent = self.params.criterion.impurity(pos_total, n);
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in self.candidates() {
            let mut sorted: Vec<(f64, bool)> = rows.iter().map(|&r| (self.x[r][f], self.y[r])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0.0;
            for i in 0..sorted.len() - 1 {
                if sorted[i].1 {
                    left_pos += 1.0;
                }
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = n - nl;
                if (i + 1) < min_leaf || sorted.len() - (i + 1) < min_leaf {
                    continue;
                }
                let child = (nl * self.params.criterion.impurity(left_pos, nl)
                    + nr * self.params.criterion.impurity(pos_total - left_pos, nr))
                    / n;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    let threshold = sorted[i].0 + (sorted[i + 1].0 - sorted[i].0) / 2.0;
                    best = Some((gain, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let pure = pos == 0 || pos == rows.len();
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || rows.len() < self.params.min_samples_split {
            return self.leaf(&rows);
        }
        let Some((gain, feature, threshold)) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        self.importances[feature] += gain * rows.len() as f64 / self.total;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { score: 0.0, n: 0 });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl Tree {
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: TreeParams, seed: u64) -> Tree {
        let n_features = x.first().map_or(0, Vec::len);
        let k = ((params.max_features * n_features as f64).floor() as usize).clamp(1, n_features.max(1));
        let mut b = TreeBuilder {
            x,
            y,
            params,
            n_features,
            k,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            importances: vec![0.0; n_features],
            total: x.len() as f64,
        };
        b.grow((0..x.len()).collect(), 0);
        let sum: f64 = b.importances.iter().sum();
        if sum > 0.0 {
            for v in &mut b.importances {
                *v /= sum;
            }
        }
        Tree {
            nodes: b.nodes,
            importances: b.importances,
        }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { score, .. } => return *score,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

/// A trained model, serializable as plain JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum FittedLearner {
    DecisionTree {
        tree: Tree,
    },
    RandomForest {
        trees: Vec<Tree>,
    },
    LogisticRegression {
        mean: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    },
}

impl FittedLearner {
    pub fn predict_scores(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|row| self.score(row)).collect()
    }

    fn score(&self, row: &[f64]) -> f64 {
        match self {
            FittedLearner::DecisionTree { tree } => tree.score(row),
            FittedLearner::RandomForest { trees } => {
                trees.iter().map(|t| t.score(row)).sum::<f64>() / trees.len() as f64
            }
            FittedLearner::LogisticRegression {
                mean,
                scale,
                weights,
                bias,
            } => {
                let z = bias
                    + row
                        .iter()
                        .zip(mean.iter().zip(scale).zip(weights))
                        .map(|(x, ((m, s), w))| w * (x - m) / s)
                        .sum::<f64>();
                sigmoid(z)
            }
        }
    }

    /// Normalized impurity-decrease importances (trees) or |standardized weight| shares.
    pub fn feature_importances(&self) -> Vec<f64> {
        match self {
            FittedLearner::DecisionTree { tree } => tree.importances.clone(),
            FittedLearner::RandomForest { trees } => {
                let p = trees.first().map_or(0, |t| t.importances.len());
                (0..p)
                    .map(|j| trees.iter().map(|t| t.importances[j]).sum::<f64>() / trees.len() as f64)
                    .collect()
            }
            FittedLearner::LogisticRegression { weights, .. } => {
                let s: f64 = weights.iter().map(|w| w.abs()).sum();
                weights
                    .iter()
                    .map(|w| if s > 0.0 { w.abs() / s } else { 0.0 })
                    .collect()
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn fit_forest(x: &[Vec<f64>], y: &[bool], hp: &Hyperparameters, seed: u64) -> Result<FittedLearner> {
    let params = TreeParams::from_hyperparameters(hp)?;
    let n_estimators = get_usize(hp, "n_estimators", 1)?.unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut trees = Vec::with_capacity(n_estimators);
    for _ in 0..n_estimators {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let by: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        trees.push(Tree::fit(&bx, &by, params, rng.random()));
    }
    Ok(FittedLearner::RandomForest { trees })
}

fn fit_logistic(x: &[Vec<f64>], y: &[bool], hp: &Hyperparameters) -> Result<FittedLearner> {
    let l2 = get_f64(hp, "l2")?.unwrap_or(1e-4);
    let lr = get_f64(hp, "learning_rate")?.unwrap_or(0.1);
    let iters = get_usize(hp, "max_iter", 1)?.unwrap_or(500);
    if l2 < 0.0 {
        return Err(bad("l2", "must be non-negative"));
    }
    if lr <= 0.0 {
        return Err(bad("learning_rate", "must be positive"));
    }
    let n = x.len() as f64;
    let p = x.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - mean[j]) / scale[j]).collect())
        .collect();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    for _ in 0..iters {
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for (row, &label) in z.iter().zip(y) {
            let pred = sigmoid(b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
            let err = pred - if label { 1.0 } else { 0.0 };
            for j in 0..p {
                gw[j] += err * row[j];
            }
            gb += err;
        }
        for j in 0..p {
            w[j] -= lr * (gw[j] / n + l2 * w[j]);
        }
        b -= lr * gb / n;
    }
    Ok(FittedLearner::LogisticRegression {
        mean,
        scale,
        weights: w,
        bias: b,
    })
}

/// Fits a registered learner. When `spec` is given, the hyperparameters must
/// lie within its ranges.
pub fn fit_learner(
    method_key: &str,
    hp: &Hyperparameters,
    x: &[Vec<f64>],
    y: &[bool],
    seed: u64,
    spec: Option<&MethodSpec>,
) -> Result<FittedLearner> {
    if !REGISTERED_LEARNERS.contains(&method_key) {
        return Err(Error::UnknownMethod(method_key.to_string()));
    }
    if let Some(spec) = spec {
        spec.check(hp)?;
    }
    if x.len() != y.len() {
        return Err(Error::Learner(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.is_empty() || y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::Degenerate("training labels must contain both classes".into()));
    }
    match method_key {
        "decision_tree" => Ok(FittedLearner::DecisionTree {
            tree: Tree::fit(x, y, TreeParams::from_hyperparameters(hp)?, seed),
        }),
        "random_forest" => fit_forest(x, y, hp, seed),
        _ => fit_logistic(x, y, hp),
    }
}

pub fn predict_scores(learner: &FittedLearner, x: &[Vec<f64>]) -> Vec<f64> {
    learner.predict_scores(x)
}
