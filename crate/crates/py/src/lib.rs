//! Python bindings. Structured inputs (labeling functions, search
//! parameters, DFS parameters, cost functions) are passed as dicts with the
//! same fields as the JSON run configuration; structured outputs come back as
//! plain dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde_json::{json, Value as Json};

use chronoforge_core::deploy::{generate_predictions, DeploymentBundle as CoreBundle};
use chronoforge_core::entityset::{load_entityset, EntitySet as CoreEntitySet};
use chronoforge_core::features::{
    calculate_feature_matrix, create_features, parse_feature_list, serialize_feature_list, DfsParams,
    FeatureList as CoreFeatureList, FeatureMatrix,
};
use chronoforge_core::labels::{search_training_examples, BuiltinLabeler, LabelSearchParams};
use chronoforge_core::metadata::{parse_metadata, MetadataDocument};
use chronoforge_core::model::{compute_metrics, tune_threshold as core_tune, BuiltinCost};
use chronoforge_core::pipeline::{Pipeline as CorePipeline, RunConfig};
use chronoforge_core::provenance::validate_provenance as core_validate;
use chronoforge_core::time::{Duration, Timestamp};

create_exception!(chronoforge, ChronoforgeError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ChronoforgeError::new_err(e.to_string())
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Json> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn from_json<'py>(py: Python<'py>, v: &Json) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn parse_as<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_value(to_json(obj)?).map_err(err)
}

fn parse_time(s: &str) -> PyResult<Timestamp> {
    Timestamp::parse(s).map_err(err)
}

fn parse_rows(rows: Vec<(String, String)>) -> PyResult<Vec<(String, Timestamp)>> {
    rows.into_iter().map(|(id, t)| Ok((id, parse_time(&t)?))).collect()
}

fn matrix_json(m: &FeatureMatrix) -> Json {
    json!({
        "feature_names": m.feature_names,
        "instance_ids": m.instance_ids,
        "cutoff_times": m.cutoffs.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "values": m.values,
        "labels": m.labels.as_ref().map(|l| l.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
    })
}

/// Relational data with time indices.
#[pyclass(module = "chronoforge")]
struct EntitySet {
    inner: CoreEntitySet,
    metadata: MetadataDocument,
}

#[pymethods]
impl EntitySet {
    /// Loads `<entity>.csv` files from `data_dir` described by a metadata JSON file.
    #[staticmethod]
    fn load(data_dir: PathBuf, metadata_path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&metadata_path).map_err(err)?;
        let metadata = parse_metadata(&text).map_err(err)?;
        let inner = load_entityset(&data_dir, &metadata).map_err(err)?;
        Ok(EntitySet { inner, metadata })
    }

    /// A new entity set with a batch of rows appended.
    fn add_new_data(&self, path: PathBuf) -> PyResult<Self> {
        Ok(EntitySet {
            inner: self.inner.add_new_data(&path, &self.metadata).map_err(err)?,
            metadata: self.metadata.clone(),
        })
    }

    fn entity_names(&self) -> Vec<String> {
        self.inner.entities().iter().map(|e| e.name().to_string()).collect()
    }

    fn n_rows(&self, entity: &str) -> PyResult<usize> {
        Ok(self.inner.entity(entity).map_err(err)?.n_rows())
    }

    fn ids(&self, entity: &str) -> PyResult<Vec<String>> {
        Ok(self
            .inner
            .entity(entity)
            .map_err(err)?
            .ids()
            .map(str::to_string)
            .collect())
    }

    fn latest_time(&self) -> Option<String> {
        self.inner.latest_time().map(|t| t.to_string())
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version()
    }

    fn __repr__(&self) -> String {
        format!("EntitySet({:?}, version={})", self.inner.name(), self.inner.version())
    }
}

/// Feature definitions produced by deep feature synthesis.
#[pyclass(module = "chronoforge")]
struct FeatureList {
    inner: CoreFeatureList,
}

#[pymethods]
impl FeatureList {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(FeatureList {
            inner: parse_feature_list(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serialize_feature_list(&self.inner)
    }

    fn names(&self) -> Vec<String> {
        self.inner.names()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Label search: returns `(instance_id, label, cutoff_time)` tuples.
#[pyfunction]
fn search_labels(
    es: &EntitySet,
    labeling_function: &Bound<'_, PyAny>,
    target_entity: &str,
    params: &Bound<'_, PyAny>,
    start: &str,
    end: &str,
) -> PyResult<Vec<(String, String, String)>> {
    let f: BuiltinLabeler = parse_as(labeling_function)?;
    let p: LabelSearchParams = parse_as(params)?;
    let lt = search_training_examples(&es.inner, &f, target_entity, &p, parse_time(start)?, parse_time(end)?)
        .map_err(err)?;
    Ok(lt
        .rows
        .into_iter()
        .map(|r| (r.instance_id, r.label.to_string(), r.cutoff_time.to_string()))
        .collect())
}

#[pyfunction]
fn dfs(es: &EntitySet, params: &Bound<'_, PyAny>) -> PyResult<FeatureList> {
    let p: DfsParams = parse_as(params)?;
    Ok(FeatureList {
        inner: create_features(&es.inner, &p).map_err(err)?,
    })
}

/// Feature values for `(instance_id, cutoff_time)` pairs as a dict of lists.
#[pyfunction]
#[pyo3(signature = (es, features, rows, training_window=None))]
fn feature_matrix<'py>(
    py: Python<'py>,
    es: &EntitySet,
    features: &FeatureList,
    rows: Vec<(String, String)>,
    training_window: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let target = features
        .inner
        .params
        .as_ref()
        .map(|p| p.target_entity.clone())
        .ok_or_else(|| err("feature list carries no target entity"))?;
    let window = training_window.map(Duration::parse).transpose().map_err(err)?;
    let m = calculate_feature_matrix(&es.inner, &target, &parse_rows(rows)?, &features.inner, window.as_ref())
        .map_err(err)?;
    from_json(py, &matrix_json(&m))
}

/// Best threshold on the grid `i * step` and its cost.
#[pyfunction]
#[pyo3(signature = (scores, labels, cost, step=0.001))]
fn tune_threshold(scores: Vec<f64>, labels: Vec<bool>, cost: &Bound<'_, PyAny>, step: f64) -> PyResult<(f64, f64)> {
    let g: BuiltinCost = parse_as(cost)?;
    if scores.len() != labels.len() {
        return Err(err("scores and labels differ in length"));
    }
    Ok(core_tune(&g, &scores, &labels, &[], step))
}

/// precision, recall, fpr and auc; each is None when undefined.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<bool>, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
    if scores.len() != labels.len() {
        return Err(err("scores and labels differ in length"));
    }
    from_json(
        py,
        &serde_json::to_value(compute_metrics(&scores, &labels, threshold)).map_err(err)?,
    )
}

/// Parses and checks a provenance document; returns it as a dict.
#[pyfunction]
fn validate_provenance<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let doc = core_validate(text).map_err(err)?;
    from_json(py, &serde_json::from_str(&doc.emit()).map_err(err)?)
}

/// A trained model with its feature list, metadata and provenance.
#[pyclass(module = "chronoforge")]
struct DeploymentBundle {
    inner: CoreBundle,
}

#[pymethods]
impl DeploymentBundle {
    #[staticmethod]
    fn load(provenance_path: PathBuf) -> PyResult<Self> {
        Ok(DeploymentBundle {
            inner: CoreBundle::load(&provenance_path).map_err(err)?,
        })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn target_entity(&self) -> String {
        self.inner.target_entity().to_string()
    }

    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_list.names()
    }

    /// `(instance_id, cutoff_time, score, decision)` for each requested row.
    fn predict(&self, es: &EntitySet, rows: Vec<(String, String)>) -> PyResult<Vec<(String, String, f64, bool)>> {
        let m = self.inner.feature_matrix(&es.inner, &parse_rows(rows)?).map_err(err)?;
        Ok(generate_predictions(&self.inner, &m)
            .map_err(err)?
            .into_iter()
            .map(|p| (p.instance_id, p.cutoff_time.to_string(), p.score, p.decision))
            .collect())
    }
}

/// The six pipeline commands over one run configuration.
#[pyclass(module = "chronoforge")]
struct Pipeline {
    inner: CorePipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config_path, output_dir=None))]
    fn new(config_path: PathBuf, output_dir: Option<PathBuf>) -> PyResult<Self> {
        let config = RunConfig::load(&config_path).map_err(err)?;
        Ok(Pipeline {
            inner: CorePipeline::from_config(config, output_dir).map_err(err)?,
        })
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    /// Number of label times per split.
    fn labels(&self) -> PyResult<Vec<usize>> {
        Ok(self.inner.labels().map_err(err)?.iter().map(|lt| lt.len()).collect())
    }

    /// Feature names after selection.
    fn features(&self) -> PyResult<Vec<String>> {
        Ok(self.inner.features().map_err(err)?.0.names())
    }

    fn train<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = self.inner.train().map_err(err)?;
        let a = &out.artifact;
        from_json(
            py,
            &json!({
                "method_key": a.method_key,
                "hyperparameters": a.hyperparameters,
                "threshold": a.threshold,
                "mean_test_cost": a.mean_test_cost,
                "results": a.results,
                "configurations": out.leaderboard.len(),
                "test_scores": out.test_scores,
            }),
        )
    }

    fn test<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &serde_json::to_value(self.inner.test().map_err(err)?).map_err(err)?)
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let v = self.inner.validate().map_err(err)?;
        from_json(py, &json!({"validation": v.report, "drift": v.drift.entries}))
    }

    /// `(instance_id, cutoff_time, score, decision)` tuples.
    fn predict(&self) -> PyResult<Vec<(String, String, f64, bool)>> {
        let (preds, _) = self.inner.predict().map_err(err)?;
        Ok(preds
            .into_iter()
            .map(|p| (p.instance_id, p.cutoff_time.to_string(), p.score, p.decision))
            .collect())
    }
}

#[pymodule]
pub fn chronoforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ChronoforgeError", m.py().get_type::<ChronoforgeError>())?;
    m.add_class::<EntitySet>()?;
    m.add_class::<FeatureList>()?;
    m.add_class::<DeploymentBundle>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(search_labels, m)?)?;
    m.add_function(wrap_pyfunction!(dfs, m)?)?;
    m.add_function(wrap_pyfunction!(feature_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(tune_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(validate_provenance, m)?)?;
    Ok(())
}
