use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::definition::{AggInput, FeatureDefinition};
use super::dfs::FeatureList;
use super::primitive::{percentile_ranks, Primitive};
use crate::entityset::{EntitySet, RawTable, Snapshot, Value};
use crate::error::{Error, Result};
use crate::labels::{Label, LabelTimes};
use crate::metadata::SemanticType;
use crate::time::{Duration, Timestamp};

/// One row per (instance, cutoff), one column per feature, labels optional.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub feature_types: Vec<SemanticType>,
    pub instance_ids: Vec<String>,
    pub cutoffs: Vec<Timestamp>,
    pub values: Vec<Vec<Value>>,
    pub labels: Option<Vec<Label>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// All-numeric matrix with synthetic ids `r0, r1, ...` and a shared cutoff.
    pub fn from_numeric(names: &[String], rows: &[Vec<f64>], labels: Option<&[bool]>) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: names.to_vec(),
            feature_types: vec![SemanticType::Numeric; names.len()],
            instance_ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            cutoffs: vec![Timestamp::from_seconds(0); rows.len()],
            values: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&x| if x.is_nan() { Value::Null } else { Value::Number(x) })
                        .collect()
                })
                .collect(),
            labels: labels.map(|l| l.iter().map(|&b| Label::Bool(b)).collect()),
        }
    }

    pub fn column(&self, j: usize) -> Vec<Value> {
        self.values.iter().map(|r| r[j].clone()).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<Value>> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.column(j))
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| Error::InvalidParams(format!("no column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            feature_names: names.to_vec(),
            feature_types: idx.iter().map(|&j| self.feature_types[j]).collect(),
            instance_ids: self.instance_ids.clone(),
            cutoffs: self.cutoffs.clone(),
            values: self
                .values
                .iter()
                .map(|r| idx.iter().map(|&j| r[j].clone()).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// Header is the feature names plus `label` when labels are present;
    /// null cells are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).expect("in-memory write");
        for (i, row) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(Value::to_string).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a matrix written by [`FeatureMatrix::write_csv`]. Row keys come
    /// from the label-times the matrix was computed for.
    pub fn read_csv(path: &Path, types: &[SemanticType], keys: &[(String, Timestamp)]) -> Result<FeatureMatrix> {
        let table = RawTable::read_csv(path)?;
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let has_label = table.header.last().is_some_and(|h| h == "label");
        let n_feat = table.header.len() - usize::from(has_label);
        if n_feat != types.len() {
            return Err(bad(format!("expected {} feature columns, found {n_feat}", types.len())));
        }
        if table.records.len() != keys.len() {
            return Err(bad(format!(
                "expected {} rows, found {}",
                keys.len(),
                table.records.len()
            )));
        }
        let mut values = Vec::with_capacity(keys.len());
        let mut labels = Vec::new();
        for (i, rec) in table.records.iter().enumerate() {
            let row = rec[..n_feat]
                .iter()
                .zip(types)
                .enumerate()
                .map(|(j, (cell, t))| {
                    parse_cell(cell, *t)
                        .ok_or_else(|| bad(format!("row {}, column {}: bad value `{cell}`", i + 1, j + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
            if has_label {
                labels.push(Label::parse(&rec[n_feat]));
            }
        }
        Ok(FeatureMatrix {
            feature_names: table.header[..n_feat].to_vec(),
            feature_types: types.to_vec(),
            instance_ids: keys.iter().map(|k| k.0.clone()).collect(),
            cutoffs: keys.iter().map(|k| k.1).collect(),
            values,
            labels: has_label.then_some(labels),
        })
    }
}

fn parse_cell(cell: &str, t: SemanticType) -> Option<Value> {
    if cell.is_empty() {
        return Some(Value::Null);
    }
    match t {
        SemanticType::Boolean => match cell {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            _ => None,
        },
        SemanticType::Categorical => Some(match cell.parse::<f64>() {
            Ok(x) => Value::Number(x),
            Err(_) => Value::Text(cell.to_string()),
        }),
        _ => cell.parse::<f64>().ok().map(Value::Number),
    }
}

/// A feature resolved against one EntitySet version.
#[derive(Debug)]
enum Bound {
    Column {
        entity: usize,
        pos: usize,
    },
    Transform {
        primitive: Primitive,
        entity: usize,
        pos: usize,
    },
    Percentile {
        slot: usize,
    },
    Aggregation {
        primitive: Primitive,
        entity: usize,
        path: Vec<usize>,
        input: Option<Box<Bound>>,
    },
}

struct PercentileSlot {
    entity: usize,
    pos: usize,
    /// Population is existing rows (target entity) or visible rows.
    existing: bool,
}

struct Binder<'a> {
    es: &'a EntitySet,
    target: usize,
    slots: Vec<PercentileSlot>,
}

impl Binder<'_> {
    fn column(&self, entity: usize, name: &str) -> Result<usize> {
        let e = self.es.entity_at(entity);
        e.position(name).ok_or_else(|| Error::UnknownVariable {
            entity: e.name().to_string(),
            variable: name.to_string(),
        })
    }

    fn bind(&mut self, f: &FeatureDefinition, base: usize) -> Result<Bound> {
        match f {
            FeatureDefinition::Transform {
                primitive,
                entity,
                column,
            } => {
                let e = self
                    .es
                    .entity_index(entity)
                    .ok_or_else(|| Error::UnknownEntity(entity.clone()))?;
                let pos = self.column(e, column)?;
                if *primitive == Primitive::Percentile {
                    let slot = self.slots.len();
                    self.slots.push(PercentileSlot {
                        entity: e,
                        pos,
                        existing: e == self.target,
                    });
                    Ok(Bound::Percentile { slot })
                } else {
                    Ok(Bound::Transform {
                        primitive: *primitive,
                        entity: e,
                        pos,
                    })
                }
            }
            FeatureDefinition::Aggregation {
                primitive,
                entity,
                input,
            } => {
                let e = self
                    .es
                    .entity_index(entity)
                    .ok_or_else(|| Error::UnknownEntity(entity.clone()))?;
                let path = self.es.unique_path(base, e).ok_or_else(|| {
                    Error::InvalidParams(format!(
                        "`{entity}` is not reachable from `{}` by a unique path",
                        self.es.entity_at(base).name()
                    ))
                })?;
                let input = match input {
                    AggInput::Rows => None,
                    AggInput::Column(c) => Some(Box::new(Bound::Column {
                        entity: e,
                        pos: self.column(e, c)?,
                    })),
                    AggInput::Feature(inner) => Some(Box::new(self.bind(inner, e)?)),
                };
                Ok(Bound::Aggregation {
                    primitive: *primitive,
                    entity: e,
                    path,
                    input,
                })
            }
        }
    }
}

struct Evaluator<'a> {
    es: &'a EntitySet,
    snap: &'a Snapshot,
    percentiles: Vec<Vec<Option<f64>>>,
}

impl Evaluator<'_> {
    fn eval(&self, b: &Bound, row: usize) -> Value {
        match b {
            Bound::Column { entity, pos } => self.es.entity_at(*entity).column_at(*pos).get(row),
            Bound::Transform { primitive, entity, pos } => {
                primitive.transform(&self.es.entity_at(*entity).column_at(*pos).get(row))
            }
            Bound::Percentile { slot } => self.percentiles[*slot][row].map_or(Value::Null, Value::Number),
            Bound::Aggregation {
                primitive,
                entity,
                path,
                input,
            } => {
                let rows = self.es.descend(path, row, |e, r| self.snap.visible(e, r));
                let items: Vec<(Value, Option<Timestamp>)> = rows
                    .iter()
                    .map(|&r| {
                        let v = input.as_ref().map_or(Value::Null, |inner| self.eval(inner, r));
                        (v, self.es.effective_time(*entity, r))
                    })
                    .collect();
                primitive.aggregate(&items)
            }
        }
    }
}

fn percentile_population(es: &EntitySet, snap: &Snapshot, slot: &PercentileSlot) -> Vec<Option<f64>> {
    let col = es.entity_at(slot.entity).column_at(slot.pos);
    let values: Vec<Option<f64>> = (0..col.len())
        .map(|r| {
            let keep = if slot.existing {
                snap.exists(slot.entity, r)
            } else {
                snap.visible(slot.entity, r)
            };
            if keep {
                col.number(r)
            } else {
                None
            }
        })
        .collect();
    percentile_ranks(&values)
}

/// Computes every feature for every `(instance, cutoff)` pair using only data
/// strictly before the cutoff and, when `training_window` is set, not before
/// `cutoff - training_window`.
pub fn calculate_feature_matrix(
    es: &EntitySet,
    target_entity: &str,
    rows: &[(String, Timestamp)],
    feature_list: &FeatureList,
    training_window: Option<&Duration>,
) -> Result<FeatureMatrix> {
    if feature_list.is_empty() {
        return Err(Error::InvalidParams("feature list is empty".into()));
    }
    let target = es
        .entity_index(target_entity)
        .ok_or_else(|| Error::UnknownEntity(target_entity.to_string()))?;
    let feature_types = feature_list.types(es, target_entity)?;
    let mut binder = Binder {
        es,
        target,
        slots: Vec::new(),
    };
    let bound = feature_list
        .features
        .iter()
        .map(|f| binder.bind(f, target))
        .collect::<Result<Vec<_>>>()?;
    let slots = binder.slots;

    let ent = es.entity_at(target);
    let target_rows = rows
        .iter()
        .map(|(id, _)| {
            ent.row_of(id).ok_or_else(|| Error::UnknownInstance {
                entity: target_entity.to_string(),
                id: id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_cutoff: BTreeMap<Timestamp, Vec<usize>> = BTreeMap::new();
    for (i, (_, c)) in rows.iter().enumerate() {
        by_cutoff.entry(*c).or_default().push(i);
    }

    let n_feat = bound.len();
    let groups: Vec<(Timestamp, Vec<usize>)> = by_cutoff.into_iter().collect();
    let computed: Vec<Vec<(usize, Vec<Value>)>> = groups
        .par_iter()
        .map(|(cutoff, members)| {
            let lower = training_window.map(|w| *cutoff - w);
            let snap = es.snapshot(Some(*cutoff), lower);
            let ev = Evaluator {
                es,
                snap: &snap,
                percentiles: slots.iter().map(|s| percentile_population(es, &snap, s)).collect(),
            };
            members
                .par_iter()
                .map(|&i| {
                    let row = target_rows[i];
                    let vals = if snap.exists(target, row) {
                        bound.iter().map(|b| ev.eval(b, row)).collect()
                    } else {
                        vec![Value::Null; n_feat]
                    };
                    (i, vals)
                })
                .collect()
        })
        .collect();

    let mut values = vec![Vec::new(); rows.len()];
    for (i, v) in computed.into_iter().flatten() {
        values[i] = v;
    }
    Ok(FeatureMatrix {
        feature_names: feature_list.names(),
        feature_types,
        instance_ids: rows.iter().map(|r| r.0.clone()).collect(),
        cutoffs: rows.iter().map(|r| r.1).collect(),
        values,
        labels: None,
    })
}

/// Feature matrix aligned with `label_times`, labels appended.
pub fn calculate_for_label_times(
    es: &EntitySet,
    label_times: &LabelTimes,
    feature_list: &FeatureList,
    training_window: Option<&Duration>,
) -> Result<FeatureMatrix> {
    let rows: Vec<(String, Timestamp)> = label_times
        .rows
        .iter()
        .map(|r| (r.instance_id.clone(), r.cutoff_time))
        .collect();
    let mut m = calculate_feature_matrix(es, &label_times.target_entity, &rows, feature_list, training_window)?;
    m.labels = Some(label_times.rows.iter().map(|r| r.label.clone()).collect());
    Ok(m)
}
