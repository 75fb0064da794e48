use std::collections::{BTreeMap, BTreeSet};

use super::document::{
    DataSplit, Deployment, DeploymentParameters, FeatureEngineering, FeatureSelection, IntegrationAndValidation,
    Modeling, PredictionEngineering, ProvenanceDocument, Results, TrainingSetup, ValueRange,
};
use super::drift::range_value;
use crate::error::{Error, Result};
use crate::features::{DfsParams, FeatureMatrix};
use crate::json::{format_rounded, format_with_decimals, rounded_decimals};
use crate::labels::LabelSearchParams;
use crate::model::{ModelArtifact, ResultRecord};

/// The value the rounded emission will read back as.
pub fn round_emitted(x: f64) -> f64 {
    format_rounded(x).parse().expect("formatted float parses")
}

fn round_outward(x: f64, up: bool) -> f64 {
    let d = rounded_decimals(x);
    let scale = 10f64.powi(d as i32);
    let mut k = if up { (x * scale).ceil() } else { (x * scale).floor() };
    loop {
        let v: f64 = format_with_decimals(k / scale, d)
            .parse()
            .expect("formatted float parses");
        let v = round_emitted(v);
        if (up && v >= x) || (!up && v <= x) {
            return v;
        }
        k += if up { 1.0 } else { -1.0 };
    }
}

/// Smallest emitted-precision value that is `>=` (up) or `<=` (down) `x`.
pub fn round_down(x: f64) -> f64 {
    round_outward(x, false)
}

pub fn round_up(x: f64) -> f64 {
    round_outward(x, true)
}

/// Per-feature [min, max] over the training matrix, widened outward to the
/// emitted precision. Features with no numeric values get no range.
pub fn expected_ranges(train: &FeatureMatrix) -> BTreeMap<String, ValueRange> {
    let mut out = BTreeMap::new();
    for (j, name) in train.feature_names.iter().enumerate() {
        let vals: Vec<f64> = train.values.iter().filter_map(|r| range_value(&r[j])).collect();
        if vals.is_empty() {
            continue;
        }
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.insert(
            name.clone(),
            ValueRange {
                min: round_down(min),
                max: round_up(max),
            },
        );
    }
    out
}

/// Everything a finished run hands to provenance. Absent pieces are
/// reported by block name.
#[derive(Default)]
pub struct RunRecord<'a> {
    pub metadata: Option<String>,
    pub labeling_function: Option<String>,
    pub label_params: Option<&'a LabelSearchParams>,
    pub dfs_params: Option<&'a DfsParams>,
    pub feature_selection: Option<FeatureSelection>,
    pub modeling: Option<Modeling>,
    pub data_splits: Option<Vec<DataSplit>>,
    pub training_setup: Option<TrainingSetup>,
    pub artifact: Option<&'a ModelArtifact>,
    pub deployment_executable: Option<String>,
    pub feature_list_path: Option<String>,
    pub model_path: Option<String>,
    pub training_matrix: Option<&'a FeatureMatrix>,
    pub data_fields_used: Option<BTreeMap<String, BTreeSet<String>>>,
}

fn need<T>(v: Option<T>, block: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingBlock(block.to_string()))
}

fn rounded_record(r: &ResultRecord) -> ResultRecord {
    ResultRecord {
        random_seed: r.random_seed,
        threshold: round_emitted(r.threshold),
        precision: r.precision.map(round_emitted),
        recall: r.recall.map(round_emitted),
        fpr: r.fpr.map(round_emitted),
        auc: r.auc.map(round_emitted),
    }
}

pub fn assemble_provenance(run: RunRecord<'_>) -> Result<ProvenanceDocument> {
    let metadata = need(run.metadata, "metadata")?;
    let lp = need(run.label_params, "prediction_engineering")?;
    let labeling_function = need(run.labeling_function, "prediction_engineering/labeling_function")?;
    let dfs = need(run.dfs_params, "feature_engineering")?;
    let modeling = need(run.modeling, "modeling")?;
    let data_splits = need(run.data_splits, "data_splits")?;
    let training_setup = need(run.training_setup, "training_setup")?;
    let artifact = need(run.artifact, "results")?;
    let train = need(run.training_matrix, "deployment/integration_and_validation")?;
    let fields = need(
        run.data_fields_used,
        "deployment/integration_and_validation/data_fields_used",
    )?;

    Ok(ProvenanceDocument {
        metadata,
        prediction_engineering: PredictionEngineering {
            labeling_function,
            prediction_window: lp.prediction_window.clone(),
            min_training_data: lp.min_training_data.clone(),
            lead: lp.lead.clone(),
            extra: BTreeMap::new(),
        },
        feature_engineering: vec![FeatureEngineering {
            method: "Deep Feature Synthesis".into(),
            target_entity: Some(dfs.target_entity.clone()),
            training_window: dfs.training_window.clone(),
            aggregate_primitives: dfs.aggregation_primitives.clone(),
            transform_primitives: dfs.transform_primitives.clone(),
            ignore_variables: dfs.ignore_variables.clone(),
            max_depth: Some(dfs.max_depth),
            feature_selection: run.feature_selection,
            extra: BTreeMap::new(),
        }],
        modeling,
        data_splits,
        training_setup,
        results: Results {
            test: artifact.results.iter().map(rounded_record).collect(),
        },
        deployment: Deployment {
            deployment_executable: need(run.deployment_executable, "deployment/deployment_executable")?,
            deployment_parameters: DeploymentParameters {
                feature_list_path: need(
                    run.feature_list_path,
                    "deployment/deployment_parameters/feature_list_path",
                )?,
                model_path: need(run.model_path, "deployment/deployment_parameters/model_path")?,
                threshold: round_emitted(artifact.threshold),
                extra: BTreeMap::new(),
            },
            integration_and_validation: IntegrationAndValidation {
                data_fields_used: fields.into_iter().map(|(e, v)| (e, v.into_iter().collect())).collect(),
                expected_feature_value_ranges: expected_ranges(train),
            },
        },
        extra: BTreeMap::new(),
    })
}
