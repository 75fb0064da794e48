use std::cmp::Ordering;
use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::artifact::{ModelArtifact, ResultRecord};
use super::cost::CostFunction;
use super::learner::fit_learner;
use super::metrics::{compute_metrics, decide, Metrics};
use super::preprocess::Preprocessor;
use super::spec::{hyperparameters_key, Hyperparameters, MethodSpec};
use crate::entityset::EntitySet;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::time::Duration;

/// A learner plus the space its hyperparameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub method_key: String,
    pub spec: MethodSpec,
}

/// Either an exact number of configurations or a soft wall-clock cap checked
/// between configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum Budget {
    Configurations(usize),
    Time(Duration),
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Configurations(n) => s.serialize_u64(*n as u64),
            Budget::Time(d) => d.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|n| Budget::Configurations(n as usize))
                .ok_or_else(|| serde::de::Error::custom("budget count must be a non-negative integer")),
            serde_json::Value::String(s) => Duration::parse(&s).map(Budget::Time).map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("budget must be a count or a duration")),
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Configurations(n) => write!(f, "{n} configurations"),
            Budget::Time(d) => f.write_str(d.text()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutomlMethod {
    #[default]
    Random,
    Grid,
}

fn default_k() -> usize {
    3
}

fn default_step() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub methods: Vec<MethodEntry>,
    pub budget: Budget,
    #[serde(default)]
    pub automl_method: AutomlMethod,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k_repeats: usize,
    #[serde(default = "default_step")]
    pub threshold_grid_step: f64,
}

impl SearchParams {
    pub fn new(methods: Vec<MethodEntry>, budget: Budget) -> Self {
        SearchParams {
            methods,
            budget,
            automl_method: AutomlMethod::Random,
            seed: 0,
            k_repeats: default_k(),
            threshold_grid_step: default_step(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParams("no methods to search".into()));
        }
        for m in &self.methods {
            m.spec.validate()?;
        }
        match &self.budget {
            Budget::Configurations(0) => return Err(Error::InvalidParams("budget must be positive".into())),
            Budget::Time(d) if d.seconds() <= 0 => return Err(Error::InvalidParams("budget must be positive".into())),
            _ => {}
        }
        if self.k_repeats == 0 {
            return Err(Error::InvalidParams("k_repeats must be at least 1".into()));
        }
        if !(self.threshold_grid_step > 0.0 && self.threshold_grid_step <= 1.0) {
            return Err(Error::InvalidParams("threshold_grid_step must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Candidate thresholds `i / n` for `i = 0..=n`, `n = round(1 / step)`.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round().max(1.0) as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Grid argmin of the cost; ties go to the lowest threshold.
pub fn tune_threshold(
    g: &dyn CostFunction,
    scores: &[f64],
    labels: &[bool],
    row_data: &[f64],
    step: f64,
) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for theta in threshold_grid(step) {
        let c = g.cost(&decide(scores, theta), labels, row_data);
        if c < best.1 {
            best = (theta, c);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub random_seed: u64,
    pub threshold: f64,
    pub tune_cost: f64,
    pub test_cost: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum EntryStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub config_id: usize,
    pub method_key: String,
    pub method_order: usize,
    pub hyperparameters: Hyperparameters,
    pub status: EntryStatus,
    pub seeds: Vec<SeedResult>,
    pub mean_test_cost: Option<f64>,
    pub std_test_cost: Option<f64>,
}

fn compare_entries(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    let key = |e: &LeaderboardEntry| (e.status != EntryStatus::Ok, e.mean_test_cost, e.std_test_cost);
    let (fa, ma, sa) = key(a);
    let (fb, mb, sb) = key(b);
    fa.cmp(&fb)
        .then_with(|| ma.unwrap_or(f64::INFINITY).total_cmp(&mb.unwrap_or(f64::INFINITY)))
        .then_with(|| sa.unwrap_or(f64::INFINITY).total_cmp(&sb.unwrap_or(f64::INFINITY)))
        .then_with(|| a.method_order.cmp(&b.method_order))
        .then_with(|| hyperparameters_key(&a.hyperparameters).cmp(&hyperparameters_key(&b.hyperparameters)))
        .then_with(|| a.config_id.cmp(&b.config_id))
}

/// Leaderboard as CSV, best first.
pub fn leaderboard_csv(entries: &[LeaderboardEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank",
        "config_id",
        "method_key",
        "hyperparameters",
        "status",
        "mean_test_cost",
        "std_test_cost",
        "thresholds",
    ])
    .expect("in-memory write");
    let num = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for e in entries {
        let status = match &e.status {
            EntryStatus::Ok => "ok".to_string(),
            EntryStatus::Failed(m) => format!("failed: {m}"),
        };
        let thresholds: Vec<String> = e.seeds.iter().map(|s| s.threshold.to_string()).collect();
        w.write_record([
            e.rank.to_string(),
            e.config_id.to_string(),
            e.method_key.clone(),
            hyperparameters_key(&e.hyperparameters),
            status,
            num(e.mean_test_cost),
            num(e.std_test_cost),
            thresholds.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

struct Sampler<'a> {
    methods: &'a [MethodEntry],
    method: AutomlMethod,
    rng: ChaCha8Rng,
    grids: Vec<Vec<Hyperparameters>>,
    grid_pos: Vec<usize>,
    turn: usize,
}

impl<'a> Sampler<'a> {
    fn new(params: &'a SearchParams) -> Self {
        let grids = match params.automl_method {
            AutomlMethod::Grid => params.methods.iter().map(|m| m.spec.grid()).collect(),
            AutomlMethod::Random => Vec::new(),
        };
        Sampler {
            methods: &params.methods,
            method: params.automl_method,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            grid_pos: vec![0; params.methods.len()],
            grids,
            turn: 0,
        }
    }

    /// Next (method index, configuration), methods taken round-robin.
    fn next(&mut self) -> Option<(usize, Hyperparameters)> {
        let m = self.methods.len();
        match self.method {
            AutomlMethod::Random => {
                let i = self.turn % m;
                self.turn += 1;
                Some((i, self.methods[i].spec.sample(&mut self.rng)))
            }
            AutomlMethod::Grid => {
                for _ in 0..m {
                    let i = self.turn % m;
                    self.turn += 1;
                    if self.grid_pos[i] < self.grids[i].len() {
                        self.grid_pos[i] += 1;
                        return Some((i, self.grids[i][self.grid_pos[i] - 1].clone()));
                    }
                }
                None
            }
        }
    }
}

/// One split ready for learning.
pub struct PreparedSplit {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub row_data: Vec<f64>,
}

fn bool_labels(m: &FeatureMatrix, split: &str) -> Result<Vec<bool>> {
    let labels = m
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidParams(format!("{split} matrix has no labels")))?;
    labels
        .iter()
        .map(|l| {
            l.as_bool()
                .ok_or_else(|| Error::InvalidParams(format!("{split} label `{l}` is not boolean")))
        })
        .collect()
}

pub fn prepare_split(
    pre: &Preprocessor,
    g: &dyn CostFunction,
    es: Option<&EntitySet>,
    target_entity: &str,
    m: &FeatureMatrix,
    split: &str,
) -> Result<PreparedSplit> {
    Ok(PreparedSplit {
        x: pre.transform(m)?,
        y: bool_labels(m, split)?,
        row_data: g.prepare(es, target_entity, &m.instance_ids)?,
    })
}

fn both_classes(y: &[bool]) -> bool {
    y.iter().any(|&v| v) && y.iter().any(|&v| !v)
}

/// The train, threshold-tuning and test feature matrices (labels attached).
#[derive(Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a FeatureMatrix,
    pub tune: &'a FeatureMatrix,
    pub test: &'a FeatureMatrix,
}

pub struct SearchOutcome {
    pub artifact: ModelArtifact,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Winner's seed-0 scores on the test split.
    pub test_scores: Vec<f64>,
    pub configurations_evaluated: usize,
    pub elapsed_seconds: f64,
}

fn evaluate(
    entry: &MethodEntry,
    hp: &Hyperparameters,
    g: &dyn CostFunction,
    data: &[PreparedSplit; 3],
    params: &SearchParams,
) -> std::result::Result<Vec<SeedResult>, String> {
    let [train, tune, test] = data;
    (0..params.k_repeats as u64)
        .map(|seed| {
            let model = fit_learner(&entry.method_key, hp, &train.x, &train.y, seed, Some(&entry.spec))
                .map_err(|e| e.to_string())?;
            let tune_scores = model.predict_scores(&tune.x);
            let (threshold, tune_cost) =
                tune_threshold(g, &tune_scores, &tune.y, &tune.row_data, params.threshold_grid_step);
            let test_scores = model.predict_scores(&test.x);
            let test_cost = g.cost(&decide(&test_scores, threshold), &test.y, &test.row_data);
            if !test_cost.is_finite() {
                return Err(format!("cost is not finite ({test_cost})"));
            }
            Ok(SeedResult {
                random_seed: seed,
                threshold,
                tune_cost,
                test_cost,
                metrics: compute_metrics(&test_scores, &test.y, threshold),
            })
        })
        .collect()
}

fn entry_for(
    config_id: usize,
    method: usize,
    params: &SearchParams,
    hp: Hyperparameters,
    outcome: std::result::Result<Vec<SeedResult>, String>,
) -> LeaderboardEntry {
    let (status, seeds) = match outcome {
        Ok(s) => (EntryStatus::Ok, s),
        Err(m) => (EntryStatus::Failed(m), Vec::new()),
    };
    let costs: Vec<f64> = seeds.iter().map(|s| s.test_cost).collect();
    let (mean, std) = if costs.is_empty() {
        (None, None)
    } else {
        let n = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / n;
        let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    LeaderboardEntry {
        rank: 0,
        config_id,
        method_key: params.methods[method].method_key.clone(),
        method_order: method,
        hyperparameters: hp,
        status,
        seeds,
        mean_test_cost: mean,
        std_test_cost: std,
    }
}

/// Budgeted model search: every configuration is trained on the train split
/// once per seed, its threshold tuned on the tuning split, and scored on the
/// test split. The winner has the lowest mean test cost.
pub fn search_model(
    g: &dyn CostFunction,
    es: Option<&EntitySet>,
    target_entity: &str,
    splits: Splits<'_>,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    params.validate()?;
    let started = Instant::now();
    let pre = Preprocessor::fit(splits.train);
    let data = [
        prepare_split(&pre, g, es, target_entity, splits.train, "train")?,
        prepare_split(&pre, g, es, target_entity, splits.tune, "threshold-tuning")?,
        prepare_split(&pre, g, es, target_entity, splits.test, "test")?,
    ];
    for (y, name) in [(&data[0].y, "train"), (&data[2].y, "test")] {
        if !both_classes(y) {
            return Err(Error::Degenerate(format!("{name} split needs both classes")));
        }
    }

    let mut sampler = Sampler::new(params);
    let mut leaderboard: Vec<LeaderboardEntry> = match &params.budget {
        Budget::Configurations(n) => {
            let configs: Vec<(usize, Hyperparameters)> = std::iter::from_fn(|| sampler.next()).take(*n).collect();
            configs
                .into_par_iter()
                .enumerate()
                .map(|(id, (m, hp))| {
                    let outcome = evaluate(&params.methods[m], &hp, g, &data, params);
                    entry_for(id, m, params, hp, outcome)
                })
                .collect()
        }
        Budget::Time(limit) => {
            let mut out = Vec::new();
            while started.elapsed().as_secs_f64() < limit.seconds() as f64 {
                let Some((m, hp)) = sampler.next() else { break };
                let outcome = evaluate(&params.methods[m], &hp, g, &data, params);
                out.push(entry_for(out.len(), m, params, hp, outcome));
            }
            out
        }
    };
    leaderboard.sort_by(compare_entries);
    for (i, e) in leaderboard.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    let configurations_evaluated = leaderboard.len();
    let Some(winner) = leaderboard.first().filter(|e| e.status == EntryStatus::Ok).cloned() else {
        return Err(Error::BudgetExhausted { leaderboard });
    };

    let entry = &params.methods[winner.method_order];
    let learner = fit_learner(
        &entry.method_key,
        &winner.hyperparameters,
        &data[0].x,
        &data[0].y,
        0,
        Some(&entry.spec),
    )?;
    let test_scores = learner.predict_scores(&data[2].x);
    let seed0 = &winner.seeds[0];
    let artifact = ModelArtifact {
        method_key: entry.method_key.clone(),
        method_name: entry.spec.name.clone(),
        hyperparameters: winner.hyperparameters.clone(),
        learner,
        threshold: seed0.threshold,
        preprocessor: pre,
        results: winner
            .seeds
            .iter()
            .map(|s| ResultRecord {
                random_seed: s.random_seed,
                threshold: s.threshold,
                precision: s.metrics.precision,
                recall: s.metrics.recall,
                fpr: s.metrics.fpr,
                auc: s.metrics.auc,
            })
            .collect(),
        mean_test_cost: winner.mean_test_cost.expect("ok entry has costs"),
        cost_function: g.describe(),
        feature_list_sha256: String::new(),
    };
    Ok(SearchOutcome {
        artifact,
        leaderboard,
        test_scores,
        configurations_evaluated,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
