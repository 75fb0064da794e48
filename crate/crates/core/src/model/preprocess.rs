use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entityset::Value;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metadata::SemanticType;

/// Per-column imputation and encoding learned from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnPrep {
    /// Nulls become the training median.
    Numeric { fill: f64 },
    /// true = 1, false = 0; nulls become the training mode.
    Boolean { fill: f64 },
    /// Codes index `vocabulary`; unseen values get `vocabulary.len()`;
    /// nulls become the code of the training mode.
    Categorical { vocabulary: Vec<String>, fill: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub feature_names: Vec<String>,
    pub columns: Vec<ColumnPrep>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        xs[m - 1] + (xs[m] - xs[m - 1]) / 2.0
    }
}

impl Preprocessor {
    pub fn fit(train: &FeatureMatrix) -> Preprocessor {
        let columns = (0..train.n_features())
            .map(|j| {
                let col = train.column(j);
                match train.feature_types[j] {
                    SemanticType::Boolean => {
                        let t = col.iter().filter(|v| v.as_bool() == Some(true)).count();
                        let f = col.iter().filter(|v| v.as_bool() == Some(false)).count();
                        ColumnPrep::Boolean {
                            fill: if t > f { 1.0 } else { 0.0 },
                        }
                    }
                    SemanticType::Categorical => {
                        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                        for v in col.iter().filter(|v| !v.is_null()) {
                            *counts.entry(v.to_string()).or_default() += 1;
                        }
                        let vocabulary: Vec<String> = counts.keys().cloned().collect();
                        // most frequent, earliest in vocabulary order on ties
                        let mode = counts
                            .values()
                            .enumerate()
                            .fold(None, |best: Option<(usize, usize)>, (i, &c)| match best {
                                Some((_, bc)) if bc >= c => best,
                                _ => Some((i, c)),
                            })
                            .map_or(0, |(i, _)| i);
                        ColumnPrep::Categorical {
                            vocabulary,
                            fill: mode as f64,
                        }
                    }
                    _ => ColumnPrep::Numeric {
                        fill: median(col.iter().filter_map(Value::as_f64).collect()),
                    },
                }
            })
            .collect();
        Preprocessor {
            feature_names: train.feature_names.clone(),
            columns,
        }
    }

    /// Fails on the first column whose name differs from training.
    pub fn check_columns(&self, names: &[String]) -> Result<()> {
        let n = self.feature_names.len().max(names.len());
        for i in 0..n {
            let expected = self.feature_names.get(i).map_or("<none>", String::as_str);
            let found = names.get(i).map_or("<none>", String::as_str);
            if expected != found {
                return Err(Error::ColumnMismatch {
                    position: i,
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }
        Ok(())
    }

    fn encode(&self, j: usize, v: &Value) -> f64 {
        match &self.columns[j] {
            ColumnPrep::Numeric { fill } => v.as_f64().unwrap_or(*fill),
            ColumnPrep::Boolean { fill } => match v {
                Value::Bool(true) => 1.0,
                Value::Bool(false) => 0.0,
                Value::Number(x) => *x,
                _ => *fill,
            },
            ColumnPrep::Categorical { vocabulary, fill } => {
                if v.is_null() {
                    *fill
                } else {
                    let s = v.to_string();
                    vocabulary.binary_search(&s).map_or(vocabulary.len(), |i| i) as f64
                }
            }
        }
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_columns(&m.feature_names)?;
        Ok(m.values
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, v)| self.encode(j, v)).collect())
            .collect())
    }
}
