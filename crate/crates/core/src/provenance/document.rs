use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::schema::check_document;
use crate::error::{Error, Result};
use crate::json::{to_canonical_string, FloatStyle};
use crate::model::ResultRecord;
use crate::time::Duration;

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEngineering {
    pub labeling_function: String,
    pub prediction_window: Duration,
    pub min_training_data: Duration,
    pub lead: Duration,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub method: String,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEngineering {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_window: Option<Duration>,
    #[serde(default)]
    pub aggregate_primitives: Vec<String>,
    #[serde(default)]
    pub transform_primitives: Vec<String>,
    #[serde(default)]
    pub ignore_variables: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_selection: Option<FeatureSelection>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelingMethod {
    pub method: String,
    pub hyperparameter_options: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modeling {
    pub methods: Vec<ModelingMethod>,
    /// As configured: a duration string or a configuration count.
    pub budget: Value,
    pub automl_method: String,
    pub cost_function: String,
    /// Wall-clock seconds the search actually took.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub id: String,
    pub start_time: String,
    pub end_time: String,
    #[serde(default)]
    pub label_search_parameters: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupStage {
    pub data_split_id: String,
    pub validation_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetup {
    pub training: SetupStage,
    pub tuning: SetupStage,
    pub testing: SetupStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub test: Vec<ResultRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentParameters {
    pub feature_list_path: String,
    pub model_path: String,
    pub threshold: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationAndValidation {
    pub data_fields_used: BTreeMap<String, Vec<String>>,
    pub expected_feature_value_ranges: BTreeMap<String, ValueRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub deployment_executable: String,
    pub deployment_parameters: DeploymentParameters,
    pub integration_and_validation: IntegrationAndValidation,
}

/// The run record: configuration of every stage, splits, per-seed test
/// results and what deployment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceDocument {
    pub metadata: String,
    pub prediction_engineering: PredictionEngineering,
    pub feature_engineering: Vec<FeatureEngineering>,
    pub modeling: Modeling,
    pub data_splits: Vec<DataSplit>,
    pub training_setup: TrainingSetup,
    pub results: Results,
    pub deployment: Deployment,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ProvenanceDocument {
    /// Every file path the document points at, with its JSON pointer.
    pub fn paths(&self) -> Vec<(String, &str)> {
        let mut out = vec![
            ("/metadata".to_string(), self.metadata.as_str()),
            (
                "/prediction_engineering/labeling_function".to_string(),
                self.prediction_engineering.labeling_function.as_str(),
            ),
        ];
        for (i, m) in self.modeling.methods.iter().enumerate() {
            out.push((
                format!("/modeling/methods/{i}/hyperparameter_options"),
                m.hyperparameter_options.as_str(),
            ));
        }
        out.push(("/modeling/automl_method".into(), self.modeling.automl_method.as_str()));
        out.push(("/modeling/cost_function".into(), self.modeling.cost_function.as_str()));
        let s = &self.training_setup;
        for (name, stage) in [
            ("training", &s.training),
            ("tuning", &s.tuning),
            ("testing", &s.testing),
        ] {
            out.push((
                format!("/training_setup/{name}/validation_method"),
                stage.validation_method.as_str(),
            ));
        }
        let d = &self.deployment;
        out.push((
            "/deployment/deployment_executable".into(),
            d.deployment_executable.as_str(),
        ));
        out.push((
            "/deployment/deployment_parameters/feature_list_path".into(),
            d.deployment_parameters.feature_list_path.as_str(),
        ));
        out.push((
            "/deployment/deployment_parameters/model_path".into(),
            d.deployment_parameters.model_path.as_str(),
        ));
        out
    }

    /// Canonical text: sorted keys, two-space indent, six significant digits.
    pub fn emit(&self) -> String {
        to_canonical_string(
            &serde_json::to_value(self).expect("provenance serializes"),
            FloatStyle::Rounded,
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.emit()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<ProvenanceDocument> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        validate_provenance(&text)
    }
}

/// Parses and validates; schema errors carry a JSON pointer.
pub fn validate_provenance(text: &str) -> Result<ProvenanceDocument> {
    let value: Value = serde_json::from_str(text)?;
    check_document(&value)?;
    serde_json::from_value(value).map_err(|e| Error::schema("", e.to_string()))
}
