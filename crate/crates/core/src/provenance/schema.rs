use serde_json::Value;

use crate::error::{Error, Result};
use crate::time::{Duration, Timestamp};

enum Shape {
    Str,
    DurationText,
    TimeText,
    Uint,
    Number,
    /// A number in [0, 1].
    Unit,
    /// A number in [0, 1] or null.
    UnitOrNull,
    /// A configuration count or a duration string.
    Budget,
    Array(Box<Shape>),
    /// String keys, uniform values.
    Map(Box<Shape>),
    /// Declared fields (name, required, shape); `open` allows undeclared ones.
    Object {
        fields: Vec<(&'static str, bool, Shape)>,
        open: bool,
    },
}

use Shape::*;

fn obj(fields: Vec<(&'static str, bool, Shape)>) -> Shape {
    Object { fields, open: true }
}

fn closed(fields: Vec<(&'static str, bool, Shape)>) -> Shape {
    Object { fields, open: false }
}

fn arr(s: Shape) -> Shape {
    Array(Box::new(s))
}

fn map(s: Shape) -> Shape {
    Map(Box::new(s))
}

fn stage() -> Shape {
    obj(vec![("data_split_id", true, Str), ("validation_method", true, Str)])
}

fn document() -> Shape {
    obj(vec![
        ("metadata", true, Str),
        (
            "prediction_engineering",
            true,
            obj(vec![
                ("labeling_function", true, Str),
                ("prediction_window", true, DurationText),
                ("min_training_data", true, DurationText),
                ("lead", true, DurationText),
            ]),
        ),
        (
            "feature_engineering",
            true,
            arr(obj(vec![
                ("method", true, Str),
                ("target_entity", false, Str),
                ("training_window", false, DurationText),
                ("aggregate_primitives", false, arr(Str)),
                ("transform_primitives", false, arr(Str)),
                ("ignore_variables", false, map(arr(Str))),
                ("max_depth", false, Uint),
                (
                    "feature_selection",
                    false,
                    obj(vec![("method", true, Str), ("n_features", true, Uint)]),
                ),
            ])),
        ),
        (
            "modeling",
            true,
            obj(vec![
                (
                    "methods",
                    true,
                    arr(obj(vec![("method", true, Str), ("hyperparameter_options", true, Str)])),
                ),
                ("budget", true, Budget),
                ("automl_method", true, Str),
                ("cost_function", true, Str),
                ("elapsed", false, Number),
            ]),
        ),
        (
            "data_splits",
            true,
            arr(obj(vec![
                ("id", true, Str),
                ("start_time", true, TimeText),
                ("end_time", true, TimeText),
                ("label_search_parameters", false, obj(vec![])),
            ])),
        ),
        (
            "training_setup",
            true,
            obj(vec![
                ("training", true, stage()),
                ("tuning", true, stage()),
                ("testing", true, stage()),
            ]),
        ),
        (
            "results",
            true,
            obj(vec![(
                "test",
                true,
                arr(closed(vec![
                    ("random_seed", true, Uint),
                    ("threshold", true, Unit),
                    ("precision", true, UnitOrNull),
                    ("recall", true, UnitOrNull),
                    ("fpr", true, UnitOrNull),
                    ("auc", true, UnitOrNull),
                ])),
            )]),
        ),
        (
            "deployment",
            true,
            obj(vec![
                ("deployment_executable", true, Str),
                (
                    "deployment_parameters",
                    true,
                    obj(vec![
                        ("feature_list_path", true, Str),
                        ("model_path", true, Str),
                        ("threshold", true, Unit),
                    ]),
                ),
                (
                    "integration_and_validation",
                    true,
                    obj(vec![
                        ("data_fields_used", true, map(arr(Str))),
                        (
                            "expected_feature_value_ranges",
                            true,
                            map(obj(vec![("min", true, Number), ("max", true, Number)])),
                        ),
                    ]),
                ),
            ]),
        ),
    ])
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn unit(v: &Value) -> bool {
    v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))
}

fn check(v: &Value, shape: &Shape, at: &str) -> Result<()> {
    let fail = |m: &str| Err(Error::schema(at, m));
    match shape {
        Str => {
            if v.is_string() {
                Ok(())
            } else {
                fail("expected a string")
            }
        }
        DurationText => match v.as_str() {
            Some(s) => Duration::parse(s)
                .map(|_| ())
                .map_err(|e| Error::schema(at, e.to_string())),
            None => fail("expected a duration string"),
        },
        TimeText => match v.as_str() {
            Some(s) => Timestamp::parse(s)
                .map(|_| ())
                .map_err(|e| Error::schema(at, e.to_string())),
            None => fail("expected a timestamp string"),
        },
        Uint => {
            if v.is_u64() {
                Ok(())
            } else {
                fail("expected a non-negative integer")
            }
        }
        Number => {
            if v.is_number() {
                Ok(())
            } else {
                fail("expected a number")
            }
        }
        Unit => {
            if unit(v) {
                Ok(())
            } else {
                fail("expected a number in [0, 1]")
            }
        }
        UnitOrNull => {
            if v.is_null() || unit(v) {
                Ok(())
            } else {
                fail("expected null or a number in [0, 1]")
            }
        }
        Budget => match v {
            Value::Number(n) if n.as_u64().is_some_and(|n| n > 0) => Ok(()),
            Value::String(s) => Duration::parse(s)
                .map(|_| ())
                .map_err(|e| Error::schema(at, e.to_string())),
            _ => fail("expected a positive configuration count or a duration string"),
        },
        Array(inner) => {
            let items = v.as_array().ok_or_else(|| Error::schema(at, "expected an array"))?;
            items
                .iter()
                .enumerate()
                .try_for_each(|(i, item)| check(item, inner, &format!("{at}/{i}")))
        }
        Map(inner) => {
            let m = v.as_object().ok_or_else(|| Error::schema(at, "expected an object"))?;
            m.iter()
                .try_for_each(|(k, item)| check(item, inner, &format!("{at}/{}", escape(k))))
        }
        Object { fields, open } => {
            let m = v.as_object().ok_or_else(|| Error::schema(at, "expected an object"))?;
            for (name, required, s) in fields {
                let here = format!("{at}/{name}");
                match m.get(*name) {
                    Some(item) => check(item, s, &here)?,
                    None if *required => return Err(Error::schema(here, "required field missing")),
                    None => {}
                }
            }
            if !open {
                if let Some(k) = m.keys().find(|k| !fields.iter().any(|f| f.0 == k.as_str())) {
                    return Err(Error::schema(format!("{at}/{}", escape(k)), "unexpected field"));
                }
            }
            Ok(())
        }
    }
}

const SPLIT_IDS: [&str; 3] = ["train", "threshold-tuning", "test"];

/// Shape plus cross-field rules: the three splits in chronological,
/// non-overlapping order, setup stages naming existing splits, min <= max.
pub(crate) fn check_document(v: &Value) -> Result<()> {
    check(v, &document(), "")?;

    let splits = v["data_splits"].as_array().expect("checked");
    let ids: Vec<&str> = splits.iter().map(|s| s["id"].as_str().expect("checked")).collect();
    if ids != SPLIT_IDS {
        return Err(Error::schema(
            "/data_splits",
            format!("expected splits {SPLIT_IDS:?} in order, found {ids:?}"),
        ));
    }
    let time = |i: usize, f: &str| Timestamp::parse(splits[i][f].as_str().expect("checked")).expect("checked");
    for i in 0..3 {
        if time(i, "start_time") >= time(i, "end_time") {
            return Err(Error::schema(
                format!("/data_splits/{i}/end_time"),
                "end_time must follow start_time",
            ));
        }
        if i > 0 && time(i, "start_time") < time(i - 1, "end_time") {
            return Err(Error::schema(
                format!("/data_splits/{i}/start_time"),
                "splits must be chronological and non-overlapping",
            ));
        }
    }
    for stage in ["training", "tuning", "testing"] {
        let id = v["training_setup"][stage]["data_split_id"].as_str().expect("checked");
        if !ids.contains(&id) {
            return Err(Error::schema(
                format!("/training_setup/{stage}/data_split_id"),
                format!("no data split `{id}`"),
            ));
        }
    }
    let ranges = v["deployment"]["integration_and_validation"]["expected_feature_value_ranges"]
        .as_object()
        .expect("checked");
    for (name, r) in ranges {
        if r["min"].as_f64() > r["max"].as_f64() {
            return Err(Error::schema(
                format!(
                    "/deployment/integration_and_validation/expected_feature_value_ranges/{}",
                    escape(name)
                ),
                "min exceeds max",
            ));
        }
    }
    Ok(())
}
