use std::collections::BTreeSet;
use std::fmt;

use crate::entityset::Value;
use crate::metadata::SemanticType;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveKind {
    Aggregation,
    Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Count,
    Sum,
    Mean,
    Min,
    Max,
    Std,
    NumUnique,
    Percent,
    Trend,
    Weekend,
    Day,
    Month,
    Weekday,
    Percentile,
}

impl Primitive {
    pub const ALL: [Primitive; 14] = [
        Primitive::Count,
        Primitive::Sum,
        Primitive::Mean,
        Primitive::Min,
        Primitive::Max,
        Primitive::Std,
        Primitive::NumUnique,
        Primitive::Percent,
        Primitive::Trend,
        Primitive::Weekend,
        Primitive::Day,
        Primitive::Month,
        Primitive::Weekday,
        Primitive::Percentile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Count => "COUNT",
            Primitive::Sum => "SUM",
            Primitive::Mean => "MEAN",
            Primitive::Min => "MIN",
            Primitive::Max => "MAX",
            Primitive::Std => "STD",
            Primitive::NumUnique => "NUM_UNIQUE",
            Primitive::Percent => "PERCENT",
            Primitive::Trend => "TREND",
            Primitive::Weekend => "WEEKEND",
            Primitive::Day => "DAY",
            Primitive::Month => "MONTH",
            Primitive::Weekday => "WEEKDAY",
            Primitive::Percentile => "PERCENTILE",
        }
    }

    pub fn parse(name: &str) -> Option<Primitive> {
        Primitive::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(name))
    }

    pub fn kind(self) -> PrimitiveKind {
        match self {
            Primitive::Weekend | Primitive::Day | Primitive::Month | Primitive::Weekday | Primitive::Percentile => {
                PrimitiveKind::Transform
            }
            _ => PrimitiveKind::Aggregation,
        }
    }

    /// Whether a value of type `t` is a valid input. COUNT takes rows, not values.
    pub fn accepts(self, t: SemanticType) -> bool {
        match self {
            Primitive::Count => false,
            Primitive::Sum
            | Primitive::Mean
            | Primitive::Min
            | Primitive::Max
            | Primitive::Std
            | Primitive::Trend
            | Primitive::Percentile => t.is_numeric(),
            Primitive::NumUnique => t == SemanticType::Categorical,
            Primitive::Percent => t == SemanticType::Boolean,
            Primitive::Weekend | Primitive::Day | Primitive::Month | Primitive::Weekday => t.is_temporal(),
        }
    }

    pub fn output_type(self) -> SemanticType {
        match self {
            Primitive::Weekend => SemanticType::Boolean,
            Primitive::Day | Primitive::Month | Primitive::Weekday => SemanticType::Categorical,
            _ => SemanticType::Numeric,
        }
    }

    /// Applies a non-PERCENTILE transform to one value.
    pub fn transform(self, v: &Value) -> Value {
        let Some(t) = v.as_time() else { return Value::Null };
        match self {
            Primitive::Weekend => Value::Bool(t.is_weekend()),
            Primitive::Day => Value::Number(f64::from(t.day())),
            Primitive::Month => Value::Number(f64::from(t.month())),
            Primitive::Weekday => Value::Number(f64::from(t.weekday())),
            other => panic!("{} is not a row-wise transform", other.name()),
        }
    }

    /// Aggregates the values of the rows in one group. `items` pairs each
    /// row's input value with the row's effective time.
    pub fn aggregate(self, items: &[(Value, Option<Timestamp>)]) -> Value {
        if self == Primitive::Count {
            return Value::Number(items.len() as f64);
        }
        let numbers = || items.iter().filter_map(|(v, _)| v.as_f64());
        let n = numbers().count();
        match self {
            Primitive::Sum | Primitive::Mean | Primitive::Std | Primitive::Min | Primitive::Max if n == 0 => {
                Value::Null
            }
            Primitive::Sum => Value::Number(numbers().sum()),
            Primitive::Mean => Value::Number(numbers().sum::<f64>() / n as f64),
            Primitive::Min => Value::Number(numbers().fold(f64::INFINITY, f64::min)),
            Primitive::Max => Value::Number(numbers().fold(f64::NEG_INFINITY, f64::max)),
            Primitive::Std => {
                let mean = numbers().sum::<f64>() / n as f64;
                let var = numbers().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                Value::Number(var.sqrt())
            }
            Primitive::NumUnique => {
                let distinct: BTreeSet<String> = items
                    .iter()
                    .filter(|(v, _)| !v.is_null())
                    .map(|(v, _)| v.to_string())
                    .collect();
                if distinct.is_empty() {
                    Value::Null
                } else {
                    Value::Number(distinct.len() as f64)
                }
            }
            Primitive::Percent => {
                let bools: Vec<bool> = items.iter().filter_map(|(v, _)| v.as_bool()).collect();
                if bools.is_empty() {
                    Value::Null
                } else {
                    Value::Number(bools.iter().filter(|&&b| b).count() as f64 / bools.len() as f64)
                }
            }
            Primitive::Trend => {
                let pts: Vec<(f64, f64)> = items
                    .iter()
                    .filter_map(|(v, t)| Some((t.as_ref()?.seconds() as f64, v.as_f64()?)))
                    .collect();
                trend(&pts).map_or(Value::Null, Value::Number)
            }
            other => panic!("{} is not an aggregation", other.name()),
        }
    }
}

fn trend(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let xm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - xm)).sum();
    Some(sxy / sxx)
}

/// Fractional rank of each value among the non-null values, average rank
/// for ties, in (0, 1]. Nulls stay null.
pub fn percentile_ranks(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let n = order.len() as f64;
    let mut out = vec![None; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            out[k] = Some(avg / n);
        }
        i = j + 1;
    }
    out
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
