use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::{fit_learner, HyperValue, Hyperparameters, Preprocessor};

const SELECTION_TREES: i64 = 25;

/// Keeps the `n_features` columns with the highest mean impurity-decrease
/// importance under a seed-0 random forest fit on the imputed matrix. Ties go
/// to the lexicographically smaller name. The result preserves column order.
pub fn select_features(m: &FeatureMatrix, n_features: usize) -> Result<Vec<String>> {
    if n_features == 0 || n_features > m.n_features() {
        return Err(Error::InvalidParams(format!(
            "n_features must lie in 1..={}, got {n_features}",
            m.n_features()
        )));
    }
    let labels = m
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("feature selection needs labels".into()))?;
    let y: Vec<bool> = labels
        .iter()
        .map(|l| {
            l.as_bool()
                .ok_or_else(|| Error::InvalidParams(format!("label `{l}` is not boolean")))
        })
        .collect::<Result<_>>()?;
    if !(y.iter().any(|&v| v) && y.iter().any(|&v| !v)) {
        return Err(Error::Degenerate(
            "labels have a single class; skip feature selection for this run".into(),
        ));
    }
    if n_features == m.n_features() {
        return Ok(m.feature_names.clone());
    }
    let x = Preprocessor::fit(m).transform(m)?;
    let mut hp = Hyperparameters::new();
    hp.insert("n_estimators".into(), HyperValue::Int(SELECTION_TREES));
    let importances = fit_learner("random_forest", &hp, &x, &y, 0, None)?.feature_importances();

    let mut order: Vec<usize> = (0..m.n_features()).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .total_cmp(&importances[a])
            .then_with(|| m.feature_names[a].cmp(&m.feature_names[b]))
    });
    let mut keep = order[..n_features].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|j| m.feature_names[j].clone()).collect())
}
