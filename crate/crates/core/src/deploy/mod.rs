//! Serving and production checks with the same operations used in training:
//! add new data, compute features at a cutoff, score with the stored model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::entityset::EntitySet;
use crate::error::{Error, Result};
use crate::features::{
    calculate_feature_matrix, parse_feature_list, serialize_feature_list, FeatureList, FeatureMatrix,
};
use crate::labels::{apply_labeling_function, LabelSearchParams, LabelingFunction};
use crate::metadata::{parse_metadata, MetadataDocument};
use crate::model::{compute_metrics, CostFunction, Metrics, ModelArtifact, ResultRecord};
use crate::provenance::{round_emitted, ProvenanceDocument};
use crate::time::{Duration, Timestamp};

pub fn feature_list_sha256(fl: &FeatureList) -> String {
    hex::encode(Sha256::digest(serialize_feature_list(fl).as_bytes()))
}

/// A model with everything needed to rebuild its inputs.
#[derive(Debug, Clone)]
pub struct DeploymentBundle {
    pub model: ModelArtifact,
    pub feature_list: FeatureList,
    pub metadata: MetadataDocument,
    pub provenance: ProvenanceDocument,
    pub threshold: f64,
}

fn mismatch(message: String) -> Error {
    Error::Config(format!("deployment bundle is inconsistent: {message}"))
}

impl DeploymentBundle {
    pub fn new(
        model: ModelArtifact,
        feature_list: FeatureList,
        metadata: MetadataDocument,
        provenance: ProvenanceDocument,
    ) -> Result<Self> {
        let hash = feature_list_sha256(&feature_list);
        if hash != model.feature_list_sha256 {
            return Err(mismatch(format!(
                "feature list hash {hash} differs from the one recorded at training ({})",
                model.feature_list_sha256
            )));
        }
        let declared = provenance.deployment.deployment_parameters.threshold;
        if round_emitted(model.threshold) != declared {
            return Err(mismatch(format!(
                "model threshold {} differs from the provenance threshold {declared}",
                model.threshold
            )));
        }
        if feature_list.params.is_none() {
            return Err(mismatch("feature list carries no DFS parameters".into()));
        }
        model.preprocessor.check_columns(&feature_list.names())?;
        let threshold = model.threshold;
        Ok(DeploymentBundle {
            model,
            feature_list,
            metadata,
            provenance,
            threshold,
        })
    }

    /// Loads a bundle from a provenance file; relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(provenance_path: &Path) -> Result<Self> {
        let provenance = ProvenanceDocument::load(provenance_path)?;
        let base = provenance_path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| -> PathBuf { base.join(p) };
        let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| Error::io(p, e));
        let dp = &provenance.deployment.deployment_parameters;
        let model = ModelArtifact::from_json(&read(resolve(&dp.model_path))?)?;
        let feature_list = parse_feature_list(&read(resolve(&dp.feature_list_path))?)?;
        let metadata = parse_metadata(&read(resolve(&provenance.metadata))?)?;
        DeploymentBundle::new(model, feature_list, metadata, provenance)
    }

    pub fn target_entity(&self) -> &str {
        &self
            .feature_list
            .params
            .as_ref()
            .expect("checked at construction")
            .target_entity
    }

    pub fn training_window(&self) -> Option<&Duration> {
        self.feature_list
            .params
            .as_ref()
            .and_then(|p| p.training_window.as_ref())
    }

    pub fn feature_matrix(&self, es: &EntitySet, rows: &[(String, Timestamp)]) -> Result<FeatureMatrix> {
        calculate_feature_matrix(
            es,
            self.target_entity(),
            rows,
            &self.feature_list,
            self.training_window(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub cutoff_time: Timestamp,
    pub score: f64,
    pub decision: bool,
}

/// Scores every row; positive iff `score >= threshold`.
pub fn generate_predictions(bundle: &DeploymentBundle, matrix: &FeatureMatrix) -> Result<Vec<Prediction>> {
    let scores = bundle.model.predict_scores(matrix)?;
    Ok(scores
        .into_iter()
        .enumerate()
        .map(|(i, score)| Prediction {
            instance_id: matrix.instance_ids[i].clone(),
            cutoff_time: matrix.cutoffs[i],
            score,
            decision: score >= bundle.threshold,
        })
        .collect())
}

/// `instance_id,cutoff_time,score,decision`
pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance_id", "cutoff_time", "score", "decision"])
        .expect("in-memory write");
    for p in predictions {
        w.write_record([
            p.instance_id.clone(),
            p.cutoff_time.to_string(),
            p.score.to_string(),
            p.decision.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessStep {
    pub step: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub passed: bool,
    pub current_time: Timestamp,
    pub steps: Vec<HarnessStep>,
    pub predictions: Vec<Prediction>,
    /// Version of the entity set the predictions were computed on.
    pub entityset_version: Option<u64>,
}

/// Adds the new data (if any), computes features for `instances` (default:
/// every target instance) at one shared `current_time`, and scores them. A
/// failing step stops the harness and leaves no predictions.
pub fn integration_test(
    bundle: &DeploymentBundle,
    es: &EntitySet,
    new_data_path: Option<&Path>,
    instances: Option<&[String]>,
    current_time: Timestamp,
) -> IntegrationReport {
    let mut steps = Vec::new();
    let report = |steps: Vec<HarnessStep>, predictions, version| IntegrationReport {
        passed: steps.iter().all(|s: &HarnessStep| s.passed),
        current_time,
        steps,
        predictions,
        entityset_version: version,
    };
    let record = |steps: &mut Vec<HarnessStep>, name: &str, r: &std::result::Result<(), String>| {
        steps.push(HarnessStep {
            step: name.to_string(),
            passed: r.is_ok(),
            message: r.as_ref().err().cloned(),
        });
    };

    let updated;
    let es_now = match new_data_path {
        None => es,
        Some(path) => match es.add_new_data(path, &bundle.metadata) {
            Ok(next) => {
                record(&mut steps, "add_new_data", &Ok(()));
                updated = next;
                &updated
            }
            Err(e) => {
                record(&mut steps, "add_new_data", &Err(e.to_string()));
                return report(steps, Vec::new(), None);
            }
        },
    };
    let ids: Vec<String> = match instances {
        Some(ids) => ids.to_vec(),
        None => match es_now.entity(bundle.target_entity()) {
            Ok(e) => e.ids().map(str::to_string).collect(),
            Err(e) => {
                record(&mut steps, "calculate_feature_matrix", &Err(e.to_string()));
                return report(steps, Vec::new(), Some(es_now.version()));
            }
        },
    };
    let rows: Vec<(String, Timestamp)> = ids.into_iter().map(|id| (id, current_time)).collect();
    let matrix = match bundle.feature_matrix(es_now, &rows) {
        Ok(m) => {
            record(&mut steps, "calculate_feature_matrix", &Ok(()));
            m
        }
        Err(e) => {
            record(&mut steps, "calculate_feature_matrix", &Err(e.to_string()));
            return report(steps, Vec::new(), Some(es_now.version()));
        }
    };
    match generate_predictions(bundle, &matrix) {
        Ok(p) => {
            record(&mut steps, "generate_predictions", &Ok(()));
            report(steps, p, Some(es_now.version()))
        }
        Err(e) => {
            record(&mut steps, "generate_predictions", &Err(e.to_string()));
            report(steps, Vec::new(), Some(es_now.version()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub instance_id: String,
    pub cutoff_time: Timestamp,
    pub score: f64,
    pub decision: bool,
    /// None when the label window runs past the latest data.
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub threshold: f64,
    pub n_requested: usize,
    pub n_labeled: usize,
    pub n_unlabelable: usize,
    pub cost: Option<f64>,
    pub metrics: Metrics,
    /// Per-seed test results recorded at training time.
    pub training_results: Vec<ResultRecord>,
    pub rows: Vec<ValidationRow>,
}

/// For each (instance, cutoff): features at the cutoff, the true label over
/// the window starting at `cutoff + lead`, the prediction, then cost and
/// metrics over the labelable rows.
pub fn validate_in_production(
    bundle: &DeploymentBundle,
    es: &EntitySet,
    f: &dyn LabelingFunction,
    label_params: &LabelSearchParams,
    rows: &[(String, Timestamp)],
    g: &dyn CostFunction,
) -> Result<ValidationReport> {
    label_params.validate()?;
    let matrix = bundle.feature_matrix(es, rows)?;
    let predictions = generate_predictions(bundle, &matrix)?;
    let latest = es.latest_time();
    let mut out = Vec::with_capacity(rows.len());
    for ((id, cutoff), p) in rows.iter().zip(predictions) {
        let start = *cutoff + &label_params.lead;
        let end = start + &label_params.prediction_window;
        let label = if latest.is_none_or(|l| end > l) {
            None
        } else {
            let (label, _) = apply_labeling_function(es, f, bundle.target_entity(), id, start, label_params)?;
            match label {
                None => None,
                Some(l) => Some(
                    l.as_bool()
                        .ok_or_else(|| Error::InvalidParams(format!("label `{l}` for `{id}` is not boolean")))?,
                ),
            }
        };
        out.push(ValidationRow {
            instance_id: id.clone(),
            cutoff_time: *cutoff,
            score: p.score,
            decision: p.decision,
            label,
        });
    }
    let labeled: Vec<&ValidationRow> = out.iter().filter(|r| r.label.is_some()).collect();
    let scores: Vec<f64> = labeled.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = labeled.iter().map(|r| r.label.expect("filtered")).collect();
    let decisions: Vec<bool> = labeled.iter().map(|r| r.decision).collect();
    let ids: Vec<String> = labeled.iter().map(|r| r.instance_id.clone()).collect();
    let (cost, metrics) = if labeled.is_empty() {
        (
            None,
            Metrics {
                precision: None,
                recall: None,
                fpr: None,
                auc: None,
            },
        )
    } else {
        let row_data = g.prepare(Some(es), bundle.target_entity(), &ids)?;
        (
            Some(g.cost(&decisions, &labels, &row_data)),
            compute_metrics(&scores, &labels, bundle.threshold),
        )
    };
    Ok(ValidationReport {
        threshold: bundle.threshold,
        n_requested: rows.len(),
        n_labeled: labeled.len(),
        n_unlabelable: rows.len() - labeled.len(),
        cost,
        metrics,
        training_results: bundle.model.results.clone(),
        rows: out,
    })
}
