use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::features::DfsParams;
use crate::labels::{BuiltinLabeler, LabelSearchParams};
use crate::model::{AutomlMethod, Budget, BuiltinCost};
use crate::time::Timestamp;

pub const SPLIT_IDS: [&str; 3] = ["train", "threshold-tuning", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub target_entity: String,
    pub labeling_function: BuiltinLabeler,
    /// Label search parameters shared by every split; splits may override.
    #[serde(flatten)]
    pub search: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSelectionConfig {
    #[serde(default = "default_selection_method")]
    pub method: String,
    pub n_features: usize,
}

fn default_selection_method() -> String {
    "random_forest_importance".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method_key: String,
    /// Path to the method's search-space JSON.
    pub spec: PathBuf,
}

fn default_k() -> usize {
    3
}

fn default_step() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelingConfig {
    pub methods: Vec<MethodConfig>,
    /// Echoed verbatim into provenance.
    pub budget: Value,
    #[serde(default)]
    pub automl_method: AutomlMethod,
    #[serde(default = "default_k")]
    pub k_repeats: usize,
    #[serde(default = "default_step")]
    pub threshold_grid_step: f64,
    pub cost_function: BuiltinCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub id: String,
    pub start_time: String,
    pub end_time: String,
    #[serde(default)]
    pub label_search_parameters: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    /// Directory of `<entity>.csv` batches added before serving.
    #[serde(default)]
    pub new_data: Option<PathBuf>,
    /// Shared cutoff for `test` and `predict`.
    #[serde(default)]
    pub current_time: Option<String>,
    /// (instance, cutoff) pairs for `validate`; defaults to the test split's label times.
    #[serde(default)]
    pub validation_timestamps: Option<Vec<(String, String)>>,
}

/// One declarative run: where the data is, how to label, which features,
/// which models, how to split, and what to serve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub metadata: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub prediction_engineering: PredictionConfig,
    pub feature_engineering: Map<String, Value>,
    pub modeling: ModelingConfig,
    pub data_splits: Vec<SplitConfig>,
    #[serde(default)]
    pub deployment: DeploymentConfig,
}

fn config_err(at: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("{at}: {message}"))
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut c: RunConfig = serde_json::from_str(text).map_err(|e| config_err("run config", e))?;
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        c.data_dir = abs(&c.data_dir);
        c.metadata = abs(&c.metadata);
        c.output_dir = c.output_dir.as_ref().map(abs);
        for m in &mut c.modeling.methods {
            m.spec = abs(&m.spec);
        }
        c.deployment.new_data = c.deployment.new_data.as_ref().map(abs);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let ids: Vec<&str> = self.data_splits.iter().map(|s| s.id.as_str()).collect();
        if ids != SPLIT_IDS {
            return Err(config_err(
                "data_splits",
                format!("expected splits {SPLIT_IDS:?} in order, found {ids:?}"),
            ));
        }
        let mut prev_end: Option<Timestamp> = None;
        for (i, s) in self.data_splits.iter().enumerate() {
            let (start, end) = self.split_range(i)?;
            if start >= end {
                return Err(config_err(
                    &format!("data_splits[{i}]"),
                    "end_time must follow start_time",
                ));
            }
            if prev_end.is_some_and(|p| start < p) {
                return Err(config_err(
                    &format!("data_splits[{i}]"),
                    format!("split `{}` overlaps the previous split", s.id),
                ));
            }
            prev_end = Some(end);
            self.label_params(i)?;
        }
        self.dfs_params()?;
        if self.modeling.methods.is_empty() {
            return Err(config_err("modeling.methods", "no methods configured"));
        }
        self.budget()?;
        if self.modeling.k_repeats == 0 {
            return Err(config_err("modeling.k_repeats", "must be at least 1"));
        }
        if let Some(t) = &self.deployment.current_time {
            Timestamp::parse(t).map_err(|e| config_err("deployment.current_time", e))?;
        }
        for (i, (_, t)) in self.deployment.validation_timestamps.iter().flatten().enumerate() {
            Timestamp::parse(t).map_err(|e| config_err(&format!("deployment.validation_timestamps[{i}]"), e))?;
        }
        Ok(())
    }

    pub fn split_range(&self, i: usize) -> Result<(Timestamp, Timestamp)> {
        let s = &self.data_splits[i];
        let at = |f: &str| format!("data_splits[{i}].{f}");
        Ok((
            Timestamp::parse(&s.start_time).map_err(|e| config_err(&at("start_time"), e))?,
            Timestamp::parse(&s.end_time).map_err(|e| config_err(&at("end_time"), e))?,
        ))
    }

    /// Shared parameters, then the split's overrides, then the run seed
    /// unless the split sets its own.
    pub fn label_params(&self, i: usize) -> Result<LabelSearchParams> {
        let mut merged = self.prediction_engineering.search.clone();
        merged.entry("seed").or_insert(Value::from(self.seed));
        for (k, v) in &self.data_splits[i].label_search_parameters {
            merged.insert(k.clone(), v.clone());
        }
        let p: LabelSearchParams = serde_json::from_value(Value::Object(merged))
            .map_err(|e| config_err(&format!("data_splits[{i}].label_search_parameters"), e))?;
        p.validate()
            .map_err(|e| config_err(&format!("data_splits[{i}].label_search_parameters"), e))?;
        Ok(p)
    }

    pub fn dfs_params(&self) -> Result<DfsParams> {
        let mut m = self.feature_engineering.clone();
        m.remove("feature_selection");
        m.insert(
            "target_entity".into(),
            Value::from(self.prediction_engineering.target_entity.clone()),
        );
        serde_json::from_value(Value::Object(m)).map_err(|e| config_err("feature_engineering", e))
    }

    pub fn feature_selection(&self) -> Result<Option<FeatureSelectionConfig>> {
        self.feature_engineering
            .get("feature_selection")
            .map(|v| {
                serde_json::from_value(v.clone()).map_err(|e| config_err("feature_engineering.feature_selection", e))
            })
            .transpose()
    }

    pub fn budget(&self) -> Result<Budget> {
        let b: Budget =
            serde_json::from_value(self.modeling.budget.clone()).map_err(|e| config_err("modeling.budget", e))?;
        match &b {
            Budget::Configurations(0) => Err(config_err("modeling.budget", "must be positive")),
            Budget::Time(d) if d.is_zero() => Err(config_err("modeling.budget", "must be positive")),
            _ => Ok(b),
        }
    }
}
