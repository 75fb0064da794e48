use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};

use super::*;
use crate::entityset::fixtures::retail_tiny;
use crate::entityset::Value;
use crate::error::Error;
use crate::features::FeatureMatrix;

const EXAMPLE: &str = include_str!("../../fixtures/provenance_example.json");

fn example() -> ProvenanceDocument {
    validate_provenance(EXAMPLE).unwrap()
}

fn pointer_of(text: &str) -> String {
    match validate_provenance(text) {
        Err(Error::Schema { pointer, .. }) => pointer,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn example_document_is_valid() {
    let d = example();
    assert_eq!(d.prediction_engineering.prediction_window.text(), "56 days");
    assert_eq!(d.deployment.deployment_parameters.threshold, 0.212);
    assert_eq!(d.results.test.len(), 2);
    assert_eq!(d.results.test[1].threshold, 0.214);
    let r = d.deployment.integration_and_validation.expected_feature_value_ranges["MEAN(orders_products.Price)"];
    assert_eq!((r.min, r.max), (9.5, 332.3));
    assert_eq!(
        d.feature_engineering[0].feature_selection.as_ref().unwrap().n_features,
        20
    );
    assert_eq!(d.modeling.budget, serde_json::json!("2 hours"));
}

#[test]
fn emission_round_trips() {
    let d = example();
    let text = d.emit();
    assert!(text.contains("\"prediction_window\": \"56 days\""));
    assert!(text.contains("\"min\": 9.50"));
    assert!(text.contains("\"max\": 332.30"));
    assert!(text.contains("\"threshold\": 0.212"));
    assert!(text.contains("\"start_time\": \"2014/01/01\""));
    let back = validate_provenance(&text).unwrap();
    assert_eq!(back, d);
    assert_eq!(back.emit(), text);
}

#[test]
fn missing_metric_is_located() {
    let text = EXAMPLE.replacen("\"auc\": 0.890", "\"auc_\": 0.890", 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["results"]["test"][0].get("auc").is_none());
    assert_eq!(pointer_of(&text), "/results/test/0/auc");
}

#[test]
fn results_field_set_is_closed() {
    let text = EXAMPLE.replacen("\"fpr\": 0.102,", "\"fpr\": 0.102, \"f1\": 0.5,", 1);
    assert_eq!(pointer_of(&text), "/results/test/0/f1");
}

#[test]
fn metrics_must_lie_in_unit_interval() {
    let text = EXAMPLE.replacen("\"precision\": 0.702", "\"precision\": 1.702", 1);
    assert_eq!(pointer_of(&text), "/results/test/1/precision");
}

#[test]
fn bad_duration_and_split_order_are_located() {
    let text = EXAMPLE.replacen("\"56 days\"", "\"56 fortnights\"", 1);
    assert_eq!(pointer_of(&text), "/prediction_engineering/prediction_window");
    let text = EXAMPLE.replacen("\"2014/06/02\"", "\"2014/05/02\"", 1);
    assert_eq!(pointer_of(&text), "/data_splits/1/start_time");
    let text = EXAMPLE.replacen("\"feature_list_path\"", "\"feature_list\"", 1);
    assert_eq!(pointer_of(&text), "/deployment/deployment_parameters/feature_list_path");
}

#[test]
fn optional_feature_selection_is_omitted() {
    let mut d = example();
    d.feature_engineering[0].feature_selection = None;
    assert!(!d.emit().contains("feature_selection"));
    assert_eq!(validate_provenance(&d.emit()).unwrap(), d);
}

#[test]
fn every_path_is_listed() {
    let d = example();
    let paths: Vec<&str> = d.paths().into_iter().map(|p| p.1).collect();
    assert_eq!(paths.len(), 12);
    assert!(paths.contains(&"/path/to/serialized_fitted_model.p"));
    assert!(paths.contains(&"/path/to/validation_spec_tune.json"));
}

fn price_matrix(values: &[f64]) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    FeatureMatrix::from_numeric(&["MEAN(orders_products.Price)".into()], &rows, None)
}

#[test]
fn ranges_from_training_values() {
    let r = expected_ranges(&price_matrix(&[12.0, 9.5, 332.3, 100.0]));
    assert_eq!(r["MEAN(orders_products.Price)"], ValueRange { min: 9.5, max: 332.3 });
    let r = expected_ranges(&price_matrix(&[0.1234567, 0.7654321]));
    assert_eq!(
        r["MEAN(orders_products.Price)"],
        ValueRange {
            min: 0.123456,
            max: 0.765433
        }
    );
}

#[test]
fn drift_flags_one_out_of_range_value() {
    let d = example();
    let es = retail_tiny();
    let ok = price_matrix(&[9.5, 100.0, 332.3]);
    assert!(check_drift(&d, &ok, Some(&es)).is_empty());
    let bad = price_matrix(&[9.5, 400.0, 100.0]);
    let report = check_drift(&d, &bad, Some(&es));
    assert_eq!(report.entries.len(), 1);
    match &report.entries[0] {
        DriftEntry::OutOfRange { row, value, max, .. } => assert_eq!((*row, *value, *max), (1, 400.0, 332.3)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(report.to_jsonl().starts_with("{\"kind\":\"OutOfRange\""));
}

#[test]
fn drift_flags_removed_column() {
    let d = example();
    let es = retail_tiny();
    let m = price_matrix(&[10.0]);
    let base = check_drift(&d, &m, Some(&es));
    let dropped = es.drop_variable("orders_products", "Discount").unwrap();
    let report = check_drift(&d, &m, Some(&dropped));
    assert_eq!(report.missing_fields(), base.missing_fields() + 1);
    assert!(report.entries.contains(&DriftEntry::MissingField {
        entity: "orders_products".into(),
        variable: "Discount".into()
    }));
}

#[test]
fn nulls_and_booleans_in_drift() {
    let mut d = example();
    d.deployment.integration_and_validation.expected_feature_value_ranges =
        [("W".to_string(), ValueRange { min: 0.0, max: 0.0 })]
            .into_iter()
            .collect();
    let mut m = price_matrix(&[f64::NAN, f64::NAN]);
    m.feature_names = vec!["W".into()];
    m.values[1][0] = Value::Bool(true);
    let r = check_drift(&d, &m, None);
    assert_eq!(r.out_of_range(), 1);
}

#[test]
fn missing_block_is_named() {
    match assemble_provenance(RunRecord::default()) {
        Err(Error::MissingBlock(b)) => assert_eq!(b, "metadata"),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn training_values_never_drift(vals in prop::collection::vec(-1e6f64..1e6, 1..30)) {
        let m = price_matrix(&vals);
        let r = expected_ranges(&m);
        let mut d = example();
        d.deployment.integration_and_validation.expected_feature_value_ranges = r;
        let d = validate_provenance(&d.emit()).unwrap();
        prop_assert!(check_drift(&d, &m, None).is_empty());
    }

    #[test]
    fn outward_rounding_brackets(x in -1e9f64..1e9) {
        prop_assert!(round_down(x) <= x);
        prop_assert!(round_up(x) >= x);
        prop_assert!(round_emitted(round_down(x)) == round_down(x));
    }
}
