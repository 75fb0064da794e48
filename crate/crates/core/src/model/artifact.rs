use std::path::Path;

use serde::{Deserialize, Serialize};

use super::learner::FittedLearner;
use super::preprocess::Preprocessor;
use super::spec::Hyperparameters;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::json::{to_canonical_string, FloatStyle};

/// Per-seed test results in the provenance layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub random_seed: u64,
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
}

/// Everything needed to score new feature matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub method_key: String,
    pub method_name: String,
    pub hyperparameters: Hyperparameters,
    pub learner: FittedLearner,
    pub threshold: f64,
    pub preprocessor: Preprocessor,
    pub results: Vec<ResultRecord>,
    pub mean_test_cost: f64,
    pub cost_function: serde_json::Value,
    /// Hex SHA-256 of the serialized feature list the model was trained on.
    pub feature_list_sha256: String,
}

impl ModelArtifact {
    pub fn feature_names(&self) -> &[String] {
        &self.preprocessor.feature_names
    }

    pub fn predict_scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        let x = self.preprocessor.transform(m)?;
        Ok(self.learner.predict_scores(&x))
    }

    pub fn to_json(&self) -> String {
        to_canonical_string(
            &serde_json::to_value(self).expect("artifact serializes"),
            FloatStyle::Shortest,
        )
    }

    pub fn from_json(text: &str) -> Result<ModelArtifact> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelArtifact> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelArtifact::from_json(&text)
    }
}
