use serde::{Deserialize, Serialize};

use super::document::ProvenanceDocument;
use crate::entityset::{EntitySet, Value};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DriftEntry {
    OutOfRange {
        row: usize,
        instance_id: String,
        cutoff_time: String,
        feature: String,
        value: f64,
        min: f64,
        max: f64,
    },
    MissingField {
        entity: String,
        variable: String,
    },
}

/// Advisory; never blocks prediction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub entries: Vec<DriftEntry>,
}

impl DriftReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn out_of_range(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, DriftEntry::OutOfRange { .. }))
            .count()
    }

    pub fn missing_fields(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, DriftEntry::MissingField { .. }))
            .count()
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("drift entry serializes") + "\n")
            .collect()
    }
}

/// Numeric view used for range checks; booleans count as 0/1.
pub(crate) fn range_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(x) => Some(*x),
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        _ => None,
    }
}

/// Values outside the declared training ranges, plus declared data fields
/// the current EntitySet no longer has. Features without a declared range
/// and null cells are not checked.
pub fn check_drift(doc: &ProvenanceDocument, matrix: &FeatureMatrix, es: Option<&EntitySet>) -> DriftReport {
    let iv = &doc.deployment.integration_and_validation;
    let mut entries = Vec::new();
    let checked: Vec<(usize, &str, f64, f64)> = matrix
        .feature_names
        .iter()
        .enumerate()
        .filter_map(|(j, name)| {
            iv.expected_feature_value_ranges
                .get(name)
                .map(|r| (j, name.as_str(), r.min, r.max))
        })
        .collect();
    for (i, row) in matrix.values.iter().enumerate() {
        for &(j, name, min, max) in &checked {
            let Some(x) = range_value(&row[j]) else { continue };
            if !(min..=max).contains(&x) {
                entries.push(DriftEntry::OutOfRange {
                    row: i,
                    instance_id: matrix.instance_ids[i].clone(),
                    cutoff_time: matrix.cutoffs[i].to_string(),
                    feature: name.to_string(),
                    value: x,
                    min,
                    max,
                });
            }
        }
    }
    if let Some(es) = es {
        for (entity, vars) in &iv.data_fields_used {
            let e = es.entity(entity).ok();
            for v in vars {
                if e.is_none_or(|e| e.variable(v).is_none()) {
                    entries.push(DriftEntry::MissingField {
                        entity: entity.clone(),
                        variable: v.clone(),
                    });
                }
            }
        }
    }
    DriftReport { entries }
}
