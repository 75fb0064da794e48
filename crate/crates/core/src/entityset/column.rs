use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::SemanticType;
use crate::time::Timestamp;

/// A single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Number(f64),
    Time(Timestamp),
    Text(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_time(&self) -> Option<Timestamp> {
        match self {
            Value::Time(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Parses a CSV cell written by [`fmt::Display`] back into a value,
    /// guessing the kind: empty → null, `true`/`false`, number, timestamp, text.
    pub fn infer(cell: &str) -> Value {
        if cell.is_empty() {
            return Value::Null;
        }
        match cell {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            _ => {}
        }
        if let Ok(x) = cell.parse::<f64>() {
            return Value::Number(x);
        }
        if cell.len() == 20 && cell.ends_with('Z') {
            if let Ok(t) = Timestamp::parse(cell) {
                return Value::Time(t);
            }
        }
        Value::Text(cell.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => Ok(()),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(x) => write!(f, "{x}"),
            Value::Time(t) => write!(f, "{t}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "yes" | "y" => Some(true),
        "false" | "f" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Typed storage for one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Number(Vec<Option<f64>>),
    Bool(Vec<Option<bool>>),
    Time(Vec<Option<Timestamp>>),
    Text(Vec<Option<String>>),
}

impl Column {
    pub fn for_type(t: SemanticType) -> Column {
        match t {
            SemanticType::Numeric | SemanticType::Latitude | SemanticType::Longitude => Column::Number(Vec::new()),
            SemanticType::Boolean => Column::Bool(Vec::new()),
            SemanticType::Datetime | SemanticType::TimeIndex => Column::Time(Vec::new()),
            SemanticType::Index | SemanticType::Id | SemanticType::Categorical | SemanticType::Text => {
                Column::Text(Vec::new())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Number(v) => v.len(),
            Column::Bool(v) => v.len(),
            Column::Time(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Number(v) => v[row].map_or(Value::Null, Value::Number),
            Column::Bool(v) => v[row].map_or(Value::Null, Value::Bool),
            Column::Time(v) => v[row].map_or(Value::Null, Value::Time),
            Column::Text(v) => v[row].clone().map_or(Value::Null, Value::Text),
        }
    }

    pub fn number(&self, row: usize) -> Option<f64> {
        match self {
            Column::Number(v) => v[row],
            _ => None,
        }
    }

    pub fn time(&self, row: usize) -> Option<Timestamp> {
        match self {
            Column::Time(v) => v[row],
            _ => None,
        }
    }

    pub fn text(&self, row: usize) -> Option<&str> {
        match self {
            Column::Text(v) => v[row].as_deref(),
            _ => None,
        }
    }

    /// Parses and appends a raw cell; an empty cell is null. On failure the
    /// column is unchanged.
    pub(crate) fn push_cell(&mut self, cell: &str) -> std::result::Result<(), &'static str> {
        if cell.is_empty() {
            self.push_null();
            return Ok(());
        }
        match self {
            Column::Number(v) => v.push(Some(cell.trim().parse::<f64>().map_err(|_| "a number")?)),
            Column::Bool(v) => v.push(Some(parse_bool(cell.trim()).ok_or("a boolean")?)),
            Column::Time(v) => v.push(Some(Timestamp::parse(cell).map_err(|_| "a timestamp")?)),
            Column::Text(v) => v.push(Some(cell.to_string())),
        }
        Ok(())
    }

    fn push_null(&mut self) {
        match self {
            Column::Number(v) => v.push(None),
            Column::Bool(v) => v.push(None),
            Column::Time(v) => v.push(None),
            Column::Text(v) => v.push(None),
        }
    }

    pub(crate) fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Number(v) => Column::Number(rows.iter().map(|&r| v[r]).collect()),
            Column::Bool(v) => Column::Bool(rows.iter().map(|&r| v[r]).collect()),
            Column::Time(v) => Column::Time(rows.iter().map(|&r| v[r]).collect()),
            Column::Text(v) => Column::Text(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }

    pub(crate) fn extend(&mut self, other: &Column) {
        match (self, other) {
            (Column::Number(a), Column::Number(b)) => a.extend_from_slice(b),
            (Column::Bool(a), Column::Bool(b)) => a.extend_from_slice(b),
            (Column::Time(a), Column::Time(b)) => a.extend_from_slice(b),
            (Column::Text(a), Column::Text(b)) => a.extend_from_slice(b),
            _ => panic!("column kinds differ"),
        }
    }

    pub(crate) fn set(&mut self, row: usize, value: Value) -> Result<()> {
        let mismatch = || Error::InvalidParams(format!("value {value:?} does not fit column kind"));
        match (&mut *self, &value) {
            (Column::Number(v), Value::Number(x)) => v[row] = Some(*x),
            (Column::Bool(v), Value::Bool(b)) => v[row] = Some(*b),
            (Column::Time(v), Value::Time(t)) => v[row] = Some(*t),
            (Column::Text(v), Value::Text(s)) => v[row] = Some(s.clone()),
            (Column::Number(v), Value::Null) => v[row] = None,
            (Column::Bool(v), Value::Null) => v[row] = None,
            (Column::Time(v), Value::Null) => v[row] = None,
            (Column::Text(v), Value::Null) => v[row] = None,
            _ => return Err(mismatch()),
        }
        Ok(())
    }
}
