use std::fmt;

use serde::{Deserialize, Serialize};

use crate::entityset::{EntitySet, Snapshot, Value};
use crate::error::{Error, Result};
use crate::time::Timestamp;

/// Outcome produced by a labeling function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Bool(bool),
    Category(String),
}

impl Label {
    pub fn parse(s: &str) -> Label {
        match s {
            "true" => Label::Bool(true),
            "false" => Label::Bool(false),
            other => Label::Category(other.to_string()),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Label::Bool(b) => Some(*b),
            Label::Category(_) => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Bool(b) => write!(f, "{b}"),
            Label::Category(s) => f.write_str(s),
        }
    }
}

/// What a labeling function may look at: one instance and the rows related
/// to it whose effective time falls inside `[window_start, window_end)`.
pub struct LabelContext<'a> {
    es: &'a EntitySet,
    target: usize,
    row: usize,
    window_start: Timestamp,
    window_end: Timestamp,
    snapshot: &'a Snapshot,
}

impl<'a> LabelContext<'a> {
    pub(crate) fn new(
        es: &'a EntitySet,
        target: usize,
        row: usize,
        window_start: Timestamp,
        window_end: Timestamp,
        snapshot: &'a Snapshot,
    ) -> Self {
        LabelContext {
            es,
            target,
            row,
            window_start,
            window_end,
            snapshot,
        }
    }

    pub fn entityset(&self) -> &'a EntitySet {
        self.es
    }

    pub fn instance_id(&self) -> &'a str {
        self.es.entity_at(self.target).id(self.row)
    }

    pub fn window_start(&self) -> Timestamp {
        self.window_start
    }

    pub fn window_end(&self) -> Timestamp {
        self.window_end
    }

    /// Rows of `entity` belonging to this instance inside the window. The
    /// entity is the target itself or a descendant reachable by one path.
    pub fn events(&self, entity: &str) -> Result<Vec<usize>> {
        let idx = self
            .es
            .entity_index(entity)
            .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
        if idx == self.target {
            return Ok(if self.snapshot.visible(idx, self.row) {
                vec![self.row]
            } else {
                vec![]
            });
        }
        let path = self.es.unique_path(self.target, idx).ok_or_else(|| {
            Error::InvalidParams(format!(
                "`{entity}` is not reachable by a unique path from `{}`",
                self.es.entity_at(self.target).name()
            ))
        })?;
        Ok(self.es.descend(&path, self.row, |e, r| self.snapshot.visible(e, r)))
    }

    pub fn value(&self, entity: &str, row: usize, variable: &str) -> Result<Value> {
        self.es
            .entity(entity)?
            .value(row, variable)
            .ok_or_else(|| Error::UnknownVariable {
                entity: entity.to_string(),
                variable: variable.to_string(),
            })
    }
}

/// A user-supplied definition of the outcome of interest.
///
/// Returning `Ok(None)` means "no label for this window"; an `Err` aborts the
/// search.
pub trait LabelingFunction: Send + Sync {
    fn name(&self) -> String;

    fn label(&self, ctx: &LabelContext<'_>) -> std::result::Result<Option<Label>, String>;

    /// `(entity, variable)` pairs this function reads beyond keys and time indices.
    fn fields_used(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    /// Entities whose rows this function inspects.
    fn entities_used(&self) -> Vec<String> {
        Vec::new()
    }

    /// Configuration echo for provenance.
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "name": self.name() })
    }
}

/// Built-in labeling functions, selectable by name from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinLabeler {
    /// True iff the instance has at least one row of `entity` in the window.
    ExistsEvent { entity: String },
    /// True iff the instance has at least `threshold` rows of `entity`.
    CountEventsThreshold { entity: String, threshold: usize },
    /// True iff the window's non-null `column` values of `entity` sum to at least `threshold`.
    SumColumnThreshold {
        entity: String,
        column: String,
        threshold: f64,
    },
}

impl LabelingFunction for BuiltinLabeler {
    fn name(&self) -> String {
        match self {
            BuiltinLabeler::ExistsEvent { .. } => "exists_event",
            BuiltinLabeler::CountEventsThreshold { .. } => "count_events_threshold",
            BuiltinLabeler::SumColumnThreshold { .. } => "sum_column_threshold",
        }
        .to_string()
    }

    fn label(&self, ctx: &LabelContext<'_>) -> std::result::Result<Option<Label>, String> {
        let events = |entity: &str| ctx.events(entity).map_err(|e| e.to_string());
        let label = match self {
            BuiltinLabeler::ExistsEvent { entity } => !events(entity)?.is_empty(),
            BuiltinLabeler::CountEventsThreshold { entity, threshold } => events(entity)?.len() >= *threshold,
            BuiltinLabeler::SumColumnThreshold {
                entity,
                column,
                threshold,
            } => {
                let mut total = 0.0;
                for row in events(entity)? {
                    match ctx.value(entity, row, column).map_err(|e| e.to_string())? {
                        Value::Number(x) => total += x,
                        Value::Null => {}
                        other => return Err(format!("`{entity}.{column}` is not numeric: {other:?}")),
                    }
                }
                total >= *threshold
            }
        };
        Ok(Some(Label::Bool(label)))
    }

    fn fields_used(&self) -> Vec<(String, String)> {
        match self {
            BuiltinLabeler::SumColumnThreshold { entity, column, .. } => vec![(entity.clone(), column.clone())],
            _ => Vec::new(),
        }
    }

    fn entities_used(&self) -> Vec<String> {
        match self {
            BuiltinLabeler::ExistsEvent { entity }
            | BuiltinLabeler::CountEventsThreshold { entity, .. }
            | BuiltinLabeler::SumColumnThreshold { entity, .. } => vec![entity.clone()],
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("builtin labeler serializes")
    }
}

/// Adapts a closure into a [`LabelingFunction`].
pub struct FnLabeler<F> {
    name: String,
    f: F,
}

impl<F> FnLabeler<F>
where
    F: Fn(&LabelContext<'_>) -> std::result::Result<Option<Label>, String> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnLabeler { name: name.into(), f }
    }
}

impl<F> LabelingFunction for FnLabeler<F>
where
    F: Fn(&LabelContext<'_>) -> std::result::Result<Option<Label>, String> + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn label(&self, ctx: &LabelContext<'_>) -> std::result::Result<Option<Label>, String> {
        (self.f)(ctx)
    }
}
