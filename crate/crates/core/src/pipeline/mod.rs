//! End-to-end runs driven by one [`RunConfig`]. Each command reads the
//! previous command's artifacts from the output directory.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{
    DeploymentConfig, FeatureSelectionConfig, MethodConfig, ModelingConfig, PredictionConfig, RunConfig, SplitConfig,
    SPLIT_IDS,
};

use crate::deploy::{
    feature_list_sha256, generate_predictions, integration_test, predictions_csv, validate_in_production,
    DeploymentBundle, IntegrationReport, Prediction, ValidationReport,
};
use crate::entityset::{load_entityset, EntitySet};
use crate::error::{Error, Result};
use crate::features::{
    calculate_for_label_times, create_features, parse_feature_list, select_features, serialize_feature_list,
    FeatureList, FeatureMatrix,
};
use crate::json::{to_canonical_string, FloatStyle};
use crate::labels::{search_training_examples, LabelTimes, LabelingFunction};
use crate::metadata::{emit_metadata, parse_metadata, MetadataDocument};
use crate::model::{
    leaderboard_csv, search_model, LeaderboardEntry, MethodEntry, MethodSpec, ModelArtifact, SearchParams, Splits,
};
use crate::provenance::{
    assemble_provenance, check_drift, validate_provenance, DataSplit, DriftReport, FeatureSelection, Modeling,
    ModelingMethod, RunRecord, SetupStage, TrainingSetup,
};
use crate::time::Timestamp;

pub const FEATURE_LIST: &str = "feature_list.json";
pub const MODEL: &str = "model.json";
pub const LEADERBOARD: &str = "leaderboard.csv";
pub const PROVENANCE: &str = "model_provenance.json";
pub const INTEGRATION_REPORT: &str = "integration_report.json";
pub const VALIDATION_REPORT: &str = "validation_report.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const DRIFT_REPORT: &str = "drift_report.jsonl";

pub fn label_times_file(split: &str) -> String {
    format!("label_times_{split}.csv")
}

pub fn feature_matrix_file(split: &str) -> String {
    format!("feature_matrix_{split}.csv")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn canonical(v: &Value) -> String {
    to_canonical_string(v, FloatStyle::Shortest)
}

/// Entity/variable pairs read by the final features and the labeling
/// function, including join keys and time indices.
pub fn data_fields_used(
    es: &EntitySet,
    features: &FeatureList,
    target: &str,
    f: &dyn LabelingFunction,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut out = features.fields_used(es, target);
    let mut add = |e: &str, v: &str| {
        out.entry(e.to_string()).or_default().insert(v.to_string());
    };
    for (e, v) in f.fields_used() {
        add(&e, &v);
    }
    let Some(t) = es.entity_index(target) else { return out };
    for name in f.entities_used() {
        let Some(ei) = es.entity_index(&name) else { continue };
        for rel in es.unique_path(t, ei).unwrap_or_default() {
            let r = &es.relationships()[rel];
            add(&r.parent_entity, &r.parent_variable);
            add(&r.child_entity, &r.child_variable);
        }
        if let Some(ti) = es.entity_at(ei).time_index() {
            add(&name, ti);
        }
    }
    out
}

pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Seed-0 scores of the deployed model on the test split.
    pub test_scores: Vec<f64>,
    pub test_matrix: FeatureMatrix,
}

pub struct ValidationOutcome {
    pub report: ValidationReport,
    pub drift: DriftReport,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub output_dir: PathBuf,
}

impl Pipeline {
    pub fn new(config: RunConfig, output_dir: PathBuf) -> Result<Pipeline> {
        std::fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
        Ok(Pipeline { config, output_dir })
    }

    /// Output directory precedence: explicit, then the config's own.
    pub fn from_config(config: RunConfig, output_dir: Option<PathBuf>) -> Result<Pipeline> {
        let dir = output_dir.or_else(|| config.output_dir.clone()).ok_or_else(|| {
            Error::Config(
                "no output directory: pass --output-dir, set CHRONOFORGE_OUTPUT or add output_dir to the run config"
                    .into(),
            )
        })?;
        Pipeline::new(config, dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p,
                producer: producer.to_string(),
            })
        }
    }

    fn target(&self) -> &str {
        &self.config.prediction_engineering.target_entity
    }

    pub fn metadata(&self) -> Result<MetadataDocument> {
        parse_metadata(&read(&self.config.metadata)?)
    }

    pub fn entityset(&self) -> Result<EntitySet> {
        load_entityset(&self.config.data_dir, &self.metadata()?)
    }

    /// The entity set after the configured new data batch, if any.
    fn serving_entityset(&self, bundle: &DeploymentBundle) -> Result<EntitySet> {
        let es = self.entityset()?;
        match &self.config.deployment.new_data {
            Some(p) => es.add_new_data(p, &bundle.metadata),
            None => Ok(es),
        }
    }

    fn current_time(&self) -> Result<Timestamp> {
        let t = self
            .config
            .deployment
            .current_time
            .as_ref()
            .ok_or_else(|| Error::Config("deployment.current_time is not set".into()))?;
        Timestamp::parse(t)
    }

    fn bundle(&self) -> Result<DeploymentBundle> {
        DeploymentBundle::load(&self.require(PROVENANCE, "train")?)
    }

    fn read_label_times(&self, split: &str) -> Result<LabelTimes> {
        LabelTimes::read_csv(&self.require(&label_times_file(split), "labels")?, self.target())
    }

    /// Label times for each split.
    pub fn labels(&self) -> Result<Vec<LabelTimes>> {
        let es = self.entityset()?;
        let f = &self.config.prediction_engineering.labeling_function;
        let mut out = Vec::new();
        for (i, split) in SPLIT_IDS.iter().enumerate() {
            let params = self.config.label_params(i)?;
            let (start, end) = self.config.split_range(i)?;
            let lt = search_training_examples(&es, f, self.target(), &params, start, end)?;
            lt.write_csv(&self.path(&label_times_file(split)))?;
            out.push(lt);
        }
        Ok(out)
    }

    /// Feature list (after optional selection) and one matrix per split.
    pub fn features(&self) -> Result<(FeatureList, Vec<FeatureMatrix>)> {
        let es = self.entityset()?;
        let label_times: Vec<LabelTimes> = SPLIT_IDS
            .iter()
            .map(|s| self.read_label_times(s))
            .collect::<Result<_>>()?;
        let dfs = self.config.dfs_params()?;
        let mut fl = create_features(&es, &dfs)?;
        if fl.is_empty() {
            return Err(Error::InvalidParams("DFS produced no features".into()));
        }
        let window = dfs.training_window.as_ref();
        let mut matrices: Vec<FeatureMatrix> = label_times
            .iter()
            .map(|lt| calculate_for_label_times(&es, lt, &fl, window))
            .collect::<Result<_>>()?;
        if let Some(sel) = self.config.feature_selection()? {
            if sel.method != "random_forest_importance" {
                return Err(Error::Config(format!(
                    "unknown feature selection method `{}`",
                    sel.method
                )));
            }
            let n = sel.n_features.min(fl.len());
            let keep = select_features(&matrices[0], n)?;
            fl = fl.subset(&keep)?;
            matrices = matrices
                .iter()
                .map(|m| m.select_columns(&keep))
                .collect::<Result<_>>()?;
        }
        write(&self.path(FEATURE_LIST), &serialize_feature_list(&fl))?;
        for (split, m) in SPLIT_IDS.iter().zip(&matrices) {
            m.write_csv(&self.path(&feature_matrix_file(split)))?;
        }
        Ok((fl, matrices))
    }

    fn load_matrices(&self, es: &EntitySet, fl: &FeatureList) -> Result<Vec<FeatureMatrix>> {
        let types = fl.types(es, self.target())?;
        SPLIT_IDS
            .iter()
            .map(|split| {
                let lt = self.read_label_times(split)?;
                let keys: Vec<(String, Timestamp)> =
                    lt.rows.iter().map(|r| (r.instance_id.clone(), r.cutoff_time)).collect();
                FeatureMatrix::read_csv(&self.require(&feature_matrix_file(split), "features")?, &types, &keys)
            })
            .collect()
    }

    fn method_entries(&self) -> Result<Vec<MethodEntry>> {
        self.config
            .modeling
            .methods
            .iter()
            .map(|m| {
                let text =
                    read(&m.spec).map_err(|e| Error::Config(format!("method spec for `{}`: {e}", m.method_key)))?;
                Ok(MethodEntry {
                    method_key: m.method_key.clone(),
                    spec: MethodSpec::parse(&text)?,
                })
            })
            .collect()
    }

    /// Model search, model file, leaderboard and provenance.
    pub fn train(&self) -> Result<TrainOutcome> {
        let fl_path = self.require(FEATURE_LIST, "features")?;
        let es = self.entityset()?;
        let fl = parse_feature_list(&read(&fl_path)?)?;
        let mut matrices = self.load_matrices(&es, &fl)?;
        let cfg = &self.config.modeling;
        let methods = self.method_entries()?;
        let mut params = SearchParams::new(methods.clone(), self.config.budget()?);
        params.automl_method = cfg.automl_method;
        params.seed = self.config.seed;
        params.k_repeats = cfg.k_repeats;
        params.threshold_grid_step = cfg.threshold_grid_step;
        let splits = Splits {
            train: &matrices[0],
            tune: &matrices[1],
            test: &matrices[2],
        };
        let outcome = match search_model(&cfg.cost_function, Some(&es), self.target(), splits, &params) {
            Err(Error::BudgetExhausted { leaderboard }) => {
                write(&self.path(LEADERBOARD), &leaderboard_csv(&leaderboard))?;
                return Err(Error::BudgetExhausted { leaderboard });
            }
            other => other?,
        };
        let mut artifact = outcome.artifact;
        artifact.feature_list_sha256 = feature_list_sha256(&fl);
        artifact.save(&self.path(MODEL))?;
        write(&self.path(LEADERBOARD), &leaderboard_csv(&outcome.leaderboard))?;

        // files the provenance document points at
        write(&self.path("metadata.json"), &emit_metadata(&self.metadata()?))?;
        let f = &self.config.prediction_engineering.labeling_function;
        write(&self.path("labeling_function.json"), &canonical(&f.describe()))?;
        let mut modeling_methods = Vec::new();
        for (i, m) in methods.iter().enumerate() {
            let name = format!("method_{i}_{}.json", m.method_key);
            write(&self.path(&name), &canonical(&serde_json::to_value(&m.spec)?))?;
            modeling_methods.push(ModelingMethod {
                method: m.method_key.clone(),
                hyperparameter_options: name,
            });
        }
        write(
            &self.path("automl.json"),
            &canonical(&json!({
                "automl_method": cfg.automl_method,
                "seed": self.config.seed,
                "k_repeats": cfg.k_repeats,
                "threshold_grid_step": cfg.threshold_grid_step,
            })),
        )?;
        write(&self.path("cost_function.json"), &canonical(&artifact.cost_function))?;
        let stage = |file: &str, split: &str| -> Result<SetupStage> {
            write(
                &self.path(file),
                &canonical(&json!({"data_split_id": split, "method": "chronological holdout"})),
            )?;
            Ok(SetupStage {
                data_split_id: split.to_string(),
                validation_method: file.to_string(),
            })
        };
        let training_setup = TrainingSetup {
            training: stage("validation_spec_train.json", "train")?,
            tuning: stage("validation_spec_tune.json", "threshold-tuning")?,
            testing: stage("validation_spec_test.json", "test")?,
        };
        write(
            &self.path("predict.sh"),
            "#!/bin/sh\nexec chronoforge predict --output-dir \"$(dirname \"$0\")\" \"$@\"\n",
        )?;

        let label_params = self.config.label_params(0)?;
        let dfs = fl.params.clone().unwrap_or(self.config.dfs_params()?);
        let doc = assemble_provenance(RunRecord {
            metadata: Some("metadata.json".into()),
            labeling_function: Some("labeling_function.json".into()),
            label_params: Some(&label_params),
            dfs_params: Some(&dfs),
            feature_selection: self.config.feature_selection()?.map(|s| FeatureSelection {
                method: s.method,
                n_features: s.n_features,
            }),
            modeling: Some(Modeling {
                methods: modeling_methods,
                budget: cfg.budget.clone(),
                automl_method: "automl.json".into(),
                cost_function: "cost_function.json".into(),
                elapsed: Some(outcome.elapsed_seconds),
                extra: BTreeMap::new(),
            }),
            data_splits: Some(
                self.config
                    .data_splits
                    .iter()
                    .map(|s| DataSplit {
                        id: s.id.clone(),
                        start_time: s.start_time.clone(),
                        end_time: s.end_time.clone(),
                        label_search_parameters: s.label_search_parameters.clone(),
                    })
                    .collect(),
            ),
            training_setup: Some(training_setup),
            artifact: Some(&artifact),
            deployment_executable: Some("predict.sh".into()),
            feature_list_path: Some(FEATURE_LIST.into()),
            model_path: Some(MODEL.into()),
            training_matrix: Some(&matrices[0]),
            data_fields_used: Some(data_fields_used(&es, &fl, self.target(), f)),
        })?;
        let text = doc.emit();
        validate_provenance(&text)?;
        for (pointer, p) in doc.paths() {
            if !self.path(p).is_file() {
                return Err(Error::schema(pointer, format!("referenced file `{p}` was not written")));
            }
        }
        write(&self.path(PROVENANCE), &text)?;
        Ok(TrainOutcome {
            artifact,
            leaderboard: outcome.leaderboard,
            test_scores: outcome.test_scores,
            test_matrix: matrices.swap_remove(2),
        })
    }

    /// Integration harness at the configured current time.
    pub fn test(&self) -> Result<IntegrationReport> {
        let bundle = self.bundle()?;
        let es = self.entityset()?;
        let report = integration_test(
            &bundle,
            &es,
            self.config.deployment.new_data.as_deref(),
            None,
            self.current_time()?,
        );
        write(
            &self.path(INTEGRATION_REPORT),
            &canonical(&serde_json::to_value(&report)?),
        )?;
        Ok(report)
    }

    /// Production validation over explicit timestamps, or the test split's
    /// label times, plus a drift check on the same rows.
    pub fn validate(&self) -> Result<ValidationOutcome> {
        let bundle = self.bundle()?;
        let es = self.serving_entityset(&bundle)?;
        let rows: Vec<(String, Timestamp)> = match &self.config.deployment.validation_timestamps {
            Some(list) => list
                .iter()
                .map(|(id, t)| Ok((id.clone(), Timestamp::parse(t)?)))
                .collect::<Result<_>>()?,
            None => self
                .read_label_times("test")?
                .rows
                .into_iter()
                .map(|r| (r.instance_id, r.cutoff_time))
                .collect(),
        };
        let report = validate_in_production(
            &bundle,
            &es,
            &self.config.prediction_engineering.labeling_function,
            &self.config.label_params(2)?,
            &rows,
            &self.config.modeling.cost_function,
        )?;
        let drift = check_drift(&bundle.provenance, &bundle.feature_matrix(&es, &rows)?, Some(&es));
        write(
            &self.path(VALIDATION_REPORT),
            &canonical(&json!({"validation": report, "drift": drift.entries})),
        )?;
        Ok(ValidationOutcome { report, drift })
    }

    /// Scores every target instance at the configured current time.
    pub fn predict(&self) -> Result<(Vec<Prediction>, DriftReport)> {
        let bundle = self.bundle()?;
        let es = self.serving_entityset(&bundle)?;
        let t = self.current_time()?;
        let rows: Vec<(String, Timestamp)> = es
            .entity(bundle.target_entity())?
            .ids()
            .map(|id| (id.to_string(), t))
            .collect();
        let matrix = bundle.feature_matrix(&es, &rows)?;
        let predictions = generate_predictions(&bundle, &matrix)?;
        let drift = check_drift(&bundle.provenance, &matrix, Some(&es));
        write(&self.path(PREDICTIONS), &predictions_csv(&predictions))?;
        write(&self.path(DRIFT_REPORT), &drift.to_jsonl())?;
        Ok((predictions, drift))
    }
}
