use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl HyperValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(i) => Some(*i as f64),
            HyperValue::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            HyperValue::Int(i) => Some(*i),
            HyperValue::Float(x) if x.fract() == 0.0 => Some(*x as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HyperValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Str(s) => f.write_str(s),
        }
    }
}

pub type Hyperparameters = BTreeMap<String, HyperValue>;

/// Canonical one-line JSON of a configuration; also the lexicographic tie-break key.
pub fn hyperparameters_key(hp: &Hyperparameters) -> String {
    serde_json::to_string(hp).expect("hyperparameters serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Int,
    Float,
    String,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub param_type: ParamType,
    /// `[min, max]` for numbers, the allowed values otherwise.
    #[serde(alias = "values")]
    pub range: Vec<serde_json::Value>,
}

/// Search space of one learner, in the method-spec JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub parameters: BTreeMap<String, ParamSpec>,
    pub root_parameters: Vec<String>,
    /// parameter → value → parameters that become active.
    #[serde(default)]
    pub conditions: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn range_err(param: &str, message: impl Into<String>) -> Error {
    Error::HyperparameterRange {
        param: param.to_string(),
        message: message.into(),
    }
}

impl ParamSpec {
    fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.range.first()?.as_f64()?, self.range.get(1)?.as_f64()?))
    }

    fn validate(&self, name: &str) -> Result<()> {
        let pointer = format!("/parameters/{name}/range");
        if self.range.is_empty() {
            return Err(Error::schema(pointer, "range is empty"));
        }
        match self.param_type {
            ParamType::Int | ParamType::Float => {
                let Some((lo, hi)) = self.bounds().filter(|_| self.range.len() == 2) else {
                    return Err(Error::schema(pointer, "numeric range must be [min, max]"));
                };
                if self.param_type == ParamType::Int && (lo.fract() != 0.0 || hi.fract() != 0.0) {
                    return Err(Error::schema(pointer, "int range bounds must be integers"));
                }
                if lo > hi {
                    return Err(Error::schema(pointer, "min exceeds max"));
                }
            }
            ParamType::String => {
                if !self.range.iter().all(serde_json::Value::is_string) {
                    return Err(Error::schema(pointer, "string range must list strings"));
                }
            }
            ParamType::Bool => {
                if !self.range.iter().all(serde_json::Value::is_boolean) {
                    return Err(Error::schema(pointer, "bool range must list booleans"));
                }
            }
        }
        Ok(())
    }

    fn choices(&self) -> Vec<HyperValue> {
        self.range
            .iter()
            .filter_map(|v| match v {
                serde_json::Value::String(s) => Some(HyperValue::Str(s.clone())),
                serde_json::Value::Bool(b) => Some(HyperValue::Bool(*b)),
                _ => None,
            })
            .collect()
    }

    pub fn contains(&self, v: &HyperValue) -> bool {
        match self.param_type {
            ParamType::Int => {
                let (lo, hi) = self.bounds().expect("validated");
                matches!(v, HyperValue::Int(i) if (*i as f64) >= lo && (*i as f64) <= hi)
            }
            ParamType::Float => {
                let (lo, hi) = self.bounds().expect("validated");
                v.as_f64().is_some_and(|x| x >= lo && x <= hi)
            }
            ParamType::String | ParamType::Bool => self.choices().contains(v),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> HyperValue {
        match self.param_type {
            ParamType::Int => {
                let (lo, hi) = self.bounds().expect("validated");
                HyperValue::Int(rng.random_range(lo as i64..=hi as i64))
            }
            ParamType::Float => {
                let (lo, hi) = self.bounds().expect("validated");
                if lo == hi {
                    HyperValue::Float(lo)
                } else {
                    HyperValue::Float(rng.random_range(lo..=hi))
                }
            }
            ParamType::String | ParamType::Bool => {
                let c = self.choices();
                c[rng.random_range(0..c.len())].clone()
            }
        }
    }

    /// Five evenly spaced points for numeric ranges (deduplicated for ints).
    fn grid(&self) -> Vec<HyperValue> {
        match self.param_type {
            ParamType::Int => {
                let (lo, hi) = self.bounds().expect("validated");
                let mut out: Vec<i64> = (0..5)
                    .map(|i| (lo + (hi - lo) * i as f64 / 4.0).round() as i64)
                    .collect();
                out.dedup();
                out.into_iter().map(HyperValue::Int).collect()
            }
            ParamType::Float => {
                let (lo, hi) = self.bounds().expect("validated");
                let mut out: Vec<f64> = (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect();
                out.dedup();
                out.into_iter().map(HyperValue::Float).collect()
            }
            ParamType::String | ParamType::Bool => self.choices(),
        }
    }
}

impl MethodSpec {
    pub fn parse(text: &str) -> Result<MethodSpec> {
        let spec: MethodSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in &self.parameters {
            p.validate(name)?;
        }
        for (i, r) in self.root_parameters.iter().enumerate() {
            if !self.parameters.contains_key(r) {
                return Err(Error::schema(
                    format!("/root_parameters/{i}"),
                    format!("`{r}` is not declared"),
                ));
            }
        }
        for (param, by_value) in &self.conditions {
            if !self.parameters.contains_key(param) {
                return Err(Error::schema(
                    format!("/conditions/{param}"),
                    format!("`{param}` is not declared"),
                ));
            }
            for (value, deps) in by_value {
                for (i, d) in deps.iter().enumerate() {
                    if !self.parameters.contains_key(d) {
                        return Err(Error::schema(
                            format!("/conditions/{param}/{value}/{i}"),
                            format!("`{d}` is not declared"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn activated(&self, param: &str, value: &HyperValue) -> Vec<String> {
        self.conditions
            .get(param)
            .and_then(|m| m.get(&value.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    /// Checks that `hp` sets exactly the active parameters, each within range.
    pub fn check(&self, hp: &Hyperparameters) -> Result<()> {
        let mut active: Vec<String> = self.root_parameters.clone();
        let mut i = 0;
        while i < active.len() {
            let name = active[i].clone();
            let spec = &self.parameters[&name];
            let v = hp.get(&name).ok_or_else(|| range_err(&name, "missing"))?;
            if !spec.contains(v) {
                return Err(range_err(&name, format!("{v} outside {:?}", spec.range)));
            }
            for d in self.activated(&name, v) {
                if !active.contains(&d) {
                    active.push(d);
                }
            }
            i += 1;
        }
        if let Some(extra) = hp.keys().find(|k| !active.contains(k)) {
            return Err(range_err(extra, "not an active parameter of this method"));
        }
        Ok(())
    }

    /// Independent uniform draw of every active parameter.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Hyperparameters {
        let mut hp = Hyperparameters::new();
        let mut queue: Vec<String> = self.root_parameters.clone();
        let mut i = 0;
        while i < queue.len() {
            let name = queue[i].clone();
            let v = self.parameters[&name].sample(rng);
            for d in self.activated(&name, &v) {
                if !queue.contains(&d) {
                    queue.push(d);
                }
            }
            hp.insert(name, v);
            i += 1;
        }
        hp
    }

    /// Cartesian product over the discretized active parameters.
    pub fn grid(&self) -> Vec<Hyperparameters> {
        fn expand(
            spec: &MethodSpec,
            queue: Vec<String>,
            i: usize,
            hp: Hyperparameters,
            out: &mut Vec<Hyperparameters>,
        ) {
            if i == queue.len() {
                out.push(hp);
                return;
            }
            let name = &queue[i];
            for v in spec.parameters[name].grid() {
                let mut q = queue.clone();
                for d in spec.activated(name, &v) {
                    if !q.contains(&d) {
                        q.push(d);
                    }
                }
                let mut h = hp.clone();
                h.insert(name.clone(), v);
                expand(spec, q, i + 1, h, out);
            }
        }
        let mut out = Vec::new();
        expand(self, self.root_parameters.clone(), 0, Hyperparameters::new(), &mut out);
        out
    }
}


#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::tests_support::DT_SPEC;
    use super::*;

    #[test]
    fn dt_spec_parses() {
        let spec = MethodSpec::parse(DT_SPEC).unwrap();
        assert_eq!(spec.parameters.len(), 5);
        assert_eq!(spec.class.as_deref(), Some("sklearn.tree.DecisionTreeClassifier"));
        let back: MethodSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn check_rejects_out_of_range() {
        let spec = MethodSpec::parse(DT_SPEC).unwrap();
        let mut hp: Hyperparameters = serde_json::from_str(
            r#"{"criterion": "gini", "max_features": 1.0, "max_depth": 3, "min_samples_split": 2, "min_samples_leaf": 1}"#,
        )
        .unwrap();
        spec.check(&hp).unwrap();
        hp.insert("max_depth".into(), HyperValue::Int(0));
        assert!(matches!(spec.check(&hp), Err(Error::HyperparameterRange { param, .. }) if param == "max_depth"));
        hp.insert("max_depth".into(), HyperValue::Int(3));
        hp.insert("criterion".into(), HyperValue::Str("mse".into()));
        assert!(spec.check(&hp).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_range = DT_SPEC.replace("[2, 10]", "[10, 2]");
        assert!(
            matches!(MethodSpec::parse(&bad_range), Err(Error::Schema { pointer, .. }) if pointer == "/parameters/max_depth/range")
        );
        let bad_root = DT_SPEC.replace("\"min_samples_leaf\"]", "\"gamma\"]");
        assert!(
            matches!(MethodSpec::parse(&bad_root), Err(Error::Schema { pointer, .. }) if pointer == "/root_parameters/4")
        );
    }

    #[test]
    fn conditions_activate_parameters() {
        let spec = MethodSpec::parse(
            r#"{"name": "lr", "parameters": {
                "penalty": {"type": "string", "range": ["none", "l2"]},
                "l2": {"type": "float", "range": [0.0, 1.0]}
            }, "root_parameters": ["penalty"], "conditions": {"penalty": {"l2": ["l2"]}}}"#,
        )
        .unwrap();
        let grid = spec.grid();
        assert_eq!(grid.len(), 1 + 5);
        for hp in &grid {
            spec.check(hp).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            spec.check(&spec.sample(&mut rng)).unwrap();
        }
    }

    #[test]
    fn grid_discretization() {
        let spec = MethodSpec::parse(DT_SPEC).unwrap();
        // criterion 2 × max_features 5 × max_depth 5 × split 3 × leaf 3
        assert_eq!(spec.grid().len(), 2 * 5 * 5 * 3 * 3);
        let depths: Vec<_> = spec.parameters["max_depth"].grid();
        assert_eq!(
            depths,
            vec![
                HyperValue::Int(2),
                HyperValue::Int(4),
                HyperValue::Int(6),
                HyperValue::Int(8),
                HyperValue::Int(10)
            ]
        );
    }

    #[test]
    fn sampling_is_seeded() {
        let spec = MethodSpec::parse(DT_SPEC).unwrap();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..5).map(|_| spec.sample(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..5).map(|_| spec.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
        for hp in &a {
            spec.check(hp).unwrap();
        }
    }
}
