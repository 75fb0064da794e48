use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use crate::entityset::{EntitySet, Value};
use crate::error::{Error, Result};

/// A domain-specific loss over decisions and true labels; lower is better.
///
/// `prepare` runs once per split and may look up per-row data in the
/// EntitySet (for instance transaction amounts); its output is handed back
/// to every `cost` call for that split.
pub trait CostFunction: Send + Sync {
    fn name(&self) -> String;

    fn prepare(&self, _es: Option<&EntitySet>, _target_entity: &str, _instance_ids: &[String]) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    fn cost(&self, decisions: &[bool], labels: &[bool], row_data: &[f64]) -> f64;

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "name": self.name() })
    }
}

/// Built-in cost functions, selectable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinCost {
    /// 1 − F1; F1 counts as 1 when there are no positives and no errors.
    F1Cost,
    /// (fp_weight·FP + fn_weight·FN) / n.
    WeightedCost { fp_weight: f64, fn_weight: f64 },
    /// Sum of `entity.column` over missed positives, looked up by instance id.
    ValueWeightedCost { entity: String, column: String },
}

pub fn f1_score(c: &Confusion) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

impl CostFunction for BuiltinCost {
    fn name(&self) -> String {
        match self {
            BuiltinCost::F1Cost => "f1_cost",
            BuiltinCost::WeightedCost { .. } => "weighted_cost",
            BuiltinCost::ValueWeightedCost { .. } => "value_weighted_cost",
        }
        .to_string()
    }

    fn prepare(&self, es: Option<&EntitySet>, _target_entity: &str, instance_ids: &[String]) -> Result<Vec<f64>> {
        let BuiltinCost::ValueWeightedCost { entity, column } = self else {
            return Ok(Vec::new());
        };
        let es = es.ok_or_else(|| Error::Cost("value_weighted_cost needs the entity set".into()))?;
        let e = es
            .entity(entity)
            .map_err(|_| Error::Cost(format!("amount entity `{entity}` not found")))?;
        if e.variable(column).is_none() {
            return Err(Error::Cost(format!("amount column `{entity}.{column}` not found")));
        }
        instance_ids
            .iter()
            .map(|id| {
                let row = e
                    .row_of(id)
                    .ok_or_else(|| Error::Cost(format!("no `{entity}` row for instance `{id}`")))?;
                match e.value(row, column).expect("checked") {
                    Value::Number(x) => Ok(x),
                    Value::Null => Ok(0.0),
                    other => Err(Error::Cost(format!("`{entity}.{column}` is not numeric: {other}"))),
                }
            })
            .collect()
    }

    fn cost(&self, decisions: &[bool], labels: &[bool], row_data: &[f64]) -> f64 {
        match self {
            BuiltinCost::F1Cost => 1.0 - f1_score(&Confusion::from_decisions(decisions, labels)),
            BuiltinCost::WeightedCost { fp_weight, fn_weight } => {
                if labels.is_empty() {
                    return 0.0;
                }
                let c = Confusion::from_decisions(decisions, labels);
                (fp_weight * c.fp as f64 + fn_weight * c.fn_ as f64) / labels.len() as f64
            }
            BuiltinCost::ValueWeightedCost { .. } => decisions
                .iter()
                .zip(labels)
                .zip(row_data)
                .filter(|((&d, &l), _)| l && !d)
                .map(|(_, a)| a)
                .sum(),
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("builtin cost serializes")
    }
}
