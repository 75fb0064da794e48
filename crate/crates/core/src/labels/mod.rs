//! Prediction engineering: turning a labeling function into label-times.
//!
//! For every instance of the target entity, candidate prediction windows are
//! laid on a fixed grid (`start + k * offset`). A window starting at `t`
//! yields the training example `(instance, f(window), t - lead)` subject to
//! the `min_training_data`, `gap` and `examples_per_instance` constraints.

mod function;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use function::{BuiltinLabeler, FnLabeler, Label, LabelContext, LabelingFunction};

use crate::entityset::{EntitySet, Snapshot};
use crate::error::{Error, Result};
use crate::time::{Duration, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Fixed,
    Random,
}

fn zero_days() -> Duration {
    Duration::parse("0 days").expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSearchParams {
    pub prediction_window: Duration,
    #[serde(default = "zero_days")]
    pub lead: Duration,
    #[serde(default = "zero_days")]
    pub gap: Duration,
    /// `None` means unlimited.
    #[serde(default)]
    pub examples_per_instance: Option<usize>,
    #[serde(default = "zero_days")]
    pub min_training_data: Duration,
    #[serde(default)]
    pub strategy: Strategy,
    pub offset: Duration,
    #[serde(default)]
    pub seed: u64,
}

impl LabelSearchParams {
    pub fn new(prediction_window: Duration, offset: Duration) -> Self {
        LabelSearchParams {
            prediction_window,
            lead: zero_days(),
            gap: zero_days(),
            examples_per_instance: None,
            min_training_data: zero_days(),
            strategy: Strategy::Fixed,
            offset,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prediction_window.seconds() <= 0 {
            return Err(Error::InvalidParams("prediction_window must be positive".into()));
        }
        if self.offset.seconds() <= 0 {
            return Err(Error::InvalidParams("offset must be positive".into()));
        }
        if self.examples_per_instance == Some(0) {
            return Err(Error::InvalidParams("examples_per_instance must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies per-split overrides given as a JSON object of the same fields.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<LabelSearchParams> {
        let mut base = serde_json::to_value(self)?;
        if let (Some(b), Some(o)) = (base.as_object_mut(), overrides.as_object()) {
            for (k, v) in o {
                b.insert(k.clone(), v.clone());
            }
        }
        serde_json::from_value(base).map_err(|e| Error::InvalidParams(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub instance_id: String,
    pub label: Label,
    pub cutoff_time: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTimes {
    pub target_entity: String,
    pub rows: Vec<LabelRow>,
    pub search_params: Option<LabelSearchParams>,
}

impl LabelTimes {
    pub fn new(target_entity: impl Into<String>, rows: Vec<LabelRow>) -> Self {
        LabelTimes {
            target_entity: target_entity.into(),
            rows,
            search_params: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `instance_id,label,cutoff_time`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance_id", "label", "cutoff_time"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.instance_id.clone(), r.label.to_string(), r.cutoff_time.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, target_entity: &str) -> Result<LabelTimes> {
        let table = crate::entityset::RawTable::read_csv(path)?;
        if table.header != ["instance_id", "label", "cutoff_time"] {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: "expected header instance_id,label,cutoff_time".into(),
            });
        }
        let rows = table
            .records
            .iter()
            .map(|r| {
                Ok(LabelRow {
                    instance_id: r[0].clone(),
                    label: Label::parse(&r[1]),
                    cutoff_time: Timestamp::parse(&r[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelTimes::new(target_entity, rows))
    }
}

fn target_index(es: &EntitySet, target_entity: &str) -> Result<usize> {
    es.entity_index(target_entity)
        .ok_or_else(|| Error::UnknownEntity(target_entity.to_string()))
}

fn window_snapshot(es: &EntitySet, start: Timestamp, params: &LabelSearchParams) -> Snapshot {
    es.snapshot(Some(start + &params.prediction_window), Some(start))
}

fn run_labeler(
    es: &EntitySet,
    f: &dyn LabelingFunction,
    target: usize,
    row: usize,
    start: Timestamp,
    params: &LabelSearchParams,
    snapshot: &Snapshot,
) -> Result<Option<Label>> {
    let ctx = LabelContext::new(es, target, row, start, start + &params.prediction_window, snapshot);
    f.label(&ctx).map_err(|message| Error::LabelingFailed {
        instance: es.entity_at(target).id(row).to_string(),
        window_start: start.to_string(),
        message,
    })
}

/// Evaluates `f` for one instance with its window starting at `timestamp`.
/// Returns the label (if any) and the cutoff `timestamp - lead`.
pub fn apply_labeling_function(
    es: &EntitySet,
    f: &dyn LabelingFunction,
    target_entity: &str,
    instance_id: &str,
    timestamp: Timestamp,
    params: &LabelSearchParams,
) -> Result<(Option<Label>, Timestamp)> {
    params.validate()?;
    let target = target_index(es, target_entity)?;
    let row = es
        .entity_at(target)
        .row_of(instance_id)
        .ok_or_else(|| Error::UnknownInstance {
            entity: target_entity.to_string(),
            id: instance_id.to_string(),
        })?;
    let snap = window_snapshot(es, timestamp, params);
    let label = run_labeler(es, f, target, row, timestamp, params, &snap)?;
    Ok((label, timestamp - &params.lead))
}

/// Earliest effective time among the instance's own row and its descendants.
pub fn first_event_time(es: &EntitySet, target: usize, row: usize) -> Option<Timestamp> {
    let own = es.effective_time(target, row);
    let mut first = own;
    for path in es.descendant_paths(target) {
        let end = es.relationship_ends(*path.last().expect("non-empty")).1;
        for r in es.descend(&path, row, |_, _| true) {
            if let Some(t) = es.effective_time(end, r) {
                first = Some(first.map_or(t, |f| f.min(t)));
            }
        }
    }
    first
}

pub(crate) fn instance_seed(seed: u64, key: &str) -> u64 {
    // FNV-1a, stable across platforms and runs
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Window starts `start + k * offset` that fit entirely before `end`.
pub fn candidate_grid(start: Timestamp, end: Timestamp, params: &LabelSearchParams) -> Vec<Timestamp> {
    let mut out = Vec::new();
    let mut t = start;
    while t.seconds() + params.prediction_window.seconds() <= end.seconds() {
        out.push(t);
        t = t + &params.offset;
    }
    out
}

/// Searches every instance of `target_entity` for training examples whose
/// prediction window starts in `[start, end - prediction_window]`.
pub fn search_training_examples(
    es: &EntitySet,
    f: &dyn LabelingFunction,
    target_entity: &str,
    params: &LabelSearchParams,
    start: Timestamp,
    end: Timestamp,
) -> Result<LabelTimes> {
    params.validate()?;
    if start >= end {
        return Err(Error::InvalidParams(format!("empty search range [{start}, {end})")));
    }
    let target = target_index(es, target_entity)?;
    let has_time = es.entity_at(target).time_index().is_some()
        || es.descendant_paths(target).iter().any(|p| {
            es.entity_at(es.relationship_ends(*p.last().expect("non-empty")).1)
                .time_index()
                .is_some()
        });
    if !has_time {
        return Err(Error::InvalidParams(format!(
            "`{target_entity}` has no time index and no time-indexed descendants"
        )));
    }

    let grid = candidate_grid(start, end, params);
    let snapshots: Vec<Snapshot> = grid.par_iter().map(|&t| window_snapshot(es, t, params)).collect();
    let n = es.entity_at(target).n_rows();
    let cap = params.examples_per_instance.unwrap_or(usize::MAX);

    let per_instance: Vec<Vec<LabelRow>> = (0..n)
        .into_par_iter()
        .map(|row| -> Result<Vec<LabelRow>> {
            let id = es.entity_at(target).id(row);
            let mut order: Vec<usize> = (0..grid.len()).collect();
            if params.strategy == Strategy::Random {
                let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(params.seed, id));
                order.shuffle(&mut rng);
            }
            let first = if params.min_training_data.is_zero() {
                None
            } else {
                first_event_time(es, target, row)
            };
            let mut emitted: Vec<LabelRow> = Vec::new();
            for k in order {
                if emitted.len() >= cap {
                    break;
                }
                let t = grid[k];
                let cutoff = t - &params.lead;
                if !params.min_training_data.is_zero() {
                    match first {
                        Some(first) if cutoff - first >= params.min_training_data.seconds() => {}
                        _ => continue,
                    }
                }
                if emitted
                    .iter()
                    .any(|r| (cutoff - r.cutoff_time).abs() < params.gap.seconds())
                {
                    continue;
                }
                if let Some(label) = run_labeler(es, f, target, row, t, params, &snapshots[k])? {
                    emitted.push(LabelRow {
                        instance_id: id.to_string(),
                        label,
                        cutoff_time: cutoff,
                    });
                }
            }
            Ok(emitted)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<LabelRow> = per_instance.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.cutoff_time, &a.instance_id).cmp(&(b.cutoff_time, &b.instance_id)));
    Ok(LabelTimes {
        target_entity: target_entity.to_string(),
        rows,
        search_params: Some(params.clone()),
    })
}
