use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::definition::{parse_feature_name, AggInput, FeatureDefinition};
use super::primitive::{Primitive, PrimitiveKind};
use crate::entityset::EntitySet;
use crate::error::{Error, Result};
use crate::json::{to_canonical_string, FloatStyle};
use crate::metadata::SemanticType;
use crate::time::Duration;

fn default_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfsParams {
    pub target_entity: String,
    /// `None` means unlimited history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_window: Option<Duration>,
    #[serde(default, rename = "aggregate_primitives", alias = "aggregation_primitives")]
    pub aggregation_primitives: Vec<String>,
    #[serde(default)]
    pub transform_primitives: Vec<String>,
    #[serde(default)]
    pub ignore_variables: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
}

impl DfsParams {
    pub fn new(target_entity: impl Into<String>) -> Self {
        DfsParams {
            target_entity: target_entity.into(),
            training_window: None,
            aggregation_primitives: Vec::new(),
            transform_primitives: Vec::new(),
            ignore_variables: BTreeMap::new(),
            max_depth: default_depth(),
        }
    }

    fn primitives(names: &[String], kind: PrimitiveKind) -> Result<Vec<Primitive>> {
        let mut out = Vec::new();
        for n in names {
            let p = Primitive::parse(n).ok_or_else(|| Error::UnknownPrimitive(n.clone()))?;
            if p.kind() != kind {
                return Err(Error::InvalidParams(
                    format!("`{n}` is not a {kind:?} primitive").to_lowercase(),
                ));
            }
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn aggregations(&self) -> Result<Vec<Primitive>> {
        Self::primitives(&self.aggregation_primitives, PrimitiveKind::Aggregation)
    }

    pub fn transforms(&self) -> Result<Vec<Primitive>> {
        Self::primitives(&self.transform_primitives, PrimitiveKind::Transform)
    }

    pub fn validate(&self, es: &EntitySet) -> Result<()> {
        es.entity(&self.target_entity)?;
        self.aggregations()?;
        self.transforms()?;
        if self.max_depth == 0 {
            return Err(Error::InvalidParams("max_depth must be at least 1".into()));
        }
        for (entity, vars) in &self.ignore_variables {
            let e = es.entity(entity)?;
            for v in vars {
                if e.variable(v).is_none() {
                    return Err(Error::UnknownVariable {
                        entity: entity.clone(),
                        variable: v.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// An ordered set of feature definitions plus the parameters that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureList {
    pub features: Vec<FeatureDefinition>,
    pub params: Option<DfsParams>,
}

impl FeatureList {
    pub fn new(features: Vec<FeatureDefinition>) -> Self {
        FeatureList { features, params: None }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(FeatureDefinition::name).collect()
    }

    /// Output type of every feature evaluated on `target`.
    pub fn types(&self, es: &EntitySet, target: &str) -> Result<Vec<SemanticType>> {
        self.features.iter().map(|f| f.output_type(es, target)).collect()
    }

    /// Keeps the features whose names are listed, in list order.
    pub fn subset(&self, names: &[String]) -> Result<FeatureList> {
        let features = names
            .iter()
            .map(|n| {
                self.features
                    .iter()
                    .find(|f| &f.name() == n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParams(format!("feature `{n}` not in list")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureList {
            features,
            params: self.params.clone(),
        })
    }

    pub fn fields_used(&self, es: &EntitySet, target: &str) -> BTreeMap<String, BTreeSet<String>> {
        let mut out = BTreeMap::new();
        for f in &self.features {
            f.fields_used(es, target, &mut out);
        }
        out
    }
}

/// JSON form: `{"dfs_params": {...}, "features": [names]}`.
pub fn serialize_feature_list(fl: &FeatureList) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("features".into(), serde_json::Value::from(fl.names()));
    if let Some(p) = &fl.params {
        obj.insert("dfs_params".into(), serde_json::to_value(p).expect("params serialize"));
    }
    to_canonical_string(&serde_json::Value::Object(obj), FloatStyle::Shortest)
}

/// Accepts the object written by [`serialize_feature_list`] or a bare array of names.
pub fn parse_feature_list(text: &str) -> Result<FeatureList> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let (names, params) = match &v {
        serde_json::Value::Array(_) => (&v, None),
        serde_json::Value::Object(o) => {
            let names = o.get("features").ok_or_else(|| Error::schema("/features", "missing"))?;
            let params = match o.get("dfs_params") {
                Some(p) => Some(
                    serde_json::from_value::<DfsParams>(p.clone())
                        .map_err(|e| Error::schema("/dfs_params", e.to_string()))?,
                ),
                None => None,
            };
            (names, params)
        }
        _ => return Err(Error::schema("", "expected an object or an array")),
    };
    let arr = names
        .as_array()
        .ok_or_else(|| Error::schema("/features", "expected an array"))?;
    let features = arr
        .iter()
        .enumerate()
        .map(|(i, n)| {
            n.as_str()
                .ok_or_else(|| Error::schema(format!("/features/{i}"), "expected a string"))
                .and_then(parse_feature_name)
        })
        .collect::<Result<_>>()?;
    Ok(FeatureList { features, params })
}

struct Generator<'a> {
    es: &'a EntitySet,
    aggs: Vec<Primitive>,
    transforms: Vec<Primitive>,
    ignored: &'a BTreeMap<String, Vec<String>>,
}

impl Generator<'_> {
    fn ignored(&self, entity: &str, var: &str) -> bool {
        self.ignored.get(entity).is_some_and(|vs| vs.iter().any(|v| v == var))
    }

    /// Non-structural variables that may feed primitives.
    fn inputs(&self, entity: usize) -> Vec<(String, SemanticType)> {
        let e = self.es.entity_at(entity);
        e.variables()
            .iter()
            .filter(|v| !v.semantic_type.is_structural() && !self.ignored(e.name(), &v.name))
            .map(|v| (v.name.clone(), v.semantic_type))
            .collect()
    }

    /// Inputs for calendar transforms: also the time index.
    fn transform_inputs(&self, entity: usize) -> Vec<(String, SemanticType)> {
        let e = self.es.entity_at(entity);
        e.variables()
            .iter()
            .filter(|v| {
                (!v.semantic_type.is_structural() || v.semantic_type == SemanticType::TimeIndex)
                    && !self.ignored(e.name(), &v.name)
            })
            .map(|v| (v.name.clone(), v.semantic_type))
            .collect()
    }

    fn transforms_on(&self, entity: usize) -> Vec<FeatureDefinition> {
        let name = self.es.entity_at(entity).name();
        let mut out = Vec::new();
        for &t in &self.transforms {
            for (col, ty) in self.transform_inputs(entity) {
                if t.accepts(ty) {
                    out.push(FeatureDefinition::transform(t, name, &col));
                }
            }
        }
        out
    }

    /// Aggregation features evaluated on rows of `base`, each costing at most
    /// `budget` (one per relationship hop plus one per nested primitive).
    fn aggregations_from(&self, base: usize, budget: usize) -> Vec<FeatureDefinition> {
        let mut out = Vec::new();
        for path in self.es.descendant_paths(base) {
            let hops = path.len();
            if hops > budget {
                continue;
            }
            let child = self.es.relationship_ends(*path.last().expect("non-empty")).1;
            if self.es.unique_path(base, child).as_ref() != Some(&path) {
                continue;
            }
            let cname = self.es.entity_at(child).name();
            for &a in &self.aggs {
                if a == Primitive::Count {
                    out.push(FeatureDefinition::count(cname));
                    continue;
                }
                for (col, ty) in self.inputs(child) {
                    if a.accepts(ty) {
                        out.push(FeatureDefinition::aggregation(a, cname, &col));
                    }
                }
            }
            if hops < budget {
                let over_transforms = self.transforms_on(child);
                let over_aggs = self.aggregations_from(child, budget - hops);
                for &a in &self.aggs {
                    for t in &over_transforms {
                        if a.accepts(t.primitive().output_type()) {
                            out.push(FeatureDefinition::nested(a, t.clone()));
                        }
                    }
                    for inner in &over_aggs {
                        if a.accepts(inner.primitive().output_type()) {
                            out.push(FeatureDefinition::nested_over(a, cname, inner.clone()));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Deep Feature Synthesis: enumerates every feature of `params.target_entity`
/// reachable within `max_depth`, sorted by canonical name.
pub fn create_features(es: &EntitySet, params: &DfsParams) -> Result<FeatureList> {
    params.validate(es)?;
    let target = es.entity_index(&params.target_entity).expect("validated");
    let g = Generator {
        es,
        aggs: params.aggregations()?,
        transforms: params.transforms()?,
        ignored: &params.ignore_variables,
    };
    let mut all: BTreeMap<String, FeatureDefinition> = BTreeMap::new();
    for f in g
        .transforms_on(target)
        .into_iter()
        .chain(g.aggregations_from(target, params.max_depth))
    {
        all.insert(f.name(), f);
    }
    Ok(FeatureList {
        features: all.into_values().collect(),
        params: Some(params.clone()),
    })
}

/// Relationship hops plus nested primitives of `f` evaluated from `base`.
pub fn generation_cost(es: &EntitySet, f: &FeatureDefinition, base: &str) -> Option<usize> {
    match f {
        FeatureDefinition::Transform { .. } => Some(1),
        FeatureDefinition::Aggregation { entity, input, .. } => {
            let hops = es.unique_path(es.entity_index(base)?, es.entity_index(entity)?)?.len();
            Some(match input {
                AggInput::Rows | AggInput::Column(_) => hops,
                AggInput::Feature(inner) => hops + generation_cost(es, inner, entity)?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entityset::fixtures::retail_tiny;

    fn params(aggs: &[&str], transforms: &[&str]) -> DfsParams {
        let mut p = DfsParams::new("customers");
        p.aggregation_primitives = aggs.iter().map(|s| s.to_string()).collect();
        p.transform_primitives = transforms.iter().map(|s| s.to_string()).collect();
        p
    }

    #[test]
    fn multi_hop_mean_is_generated() {
        let es = retail_tiny();
        let fl = create_features(&es, &params(&["MEAN"], &[])).unwrap();
        let names = fl.names();
        assert!(names.contains(&"MEAN(orders_products.Price)".to_string()), "{names:?}");
        assert!(names.contains(&"MEAN(orders_products.Discount)".to_string()));
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn percent_of_weekend_is_generated() {
        let es = retail_tiny();
        let fl = create_features(&es, &params(&["PERCENT"], &["WEEKEND"])).unwrap();
        assert!(
            fl.names().contains(&"PERCENT(WEEKEND(orders.Timestamp))".to_string()),
            "{:?}",
            fl.names()
        );
    }

    #[test]
    fn empty_primitives_give_empty_list() {
        let es = retail_tiny();
        assert!(create_features(&es, &params(&[], &[])).unwrap().is_empty());
    }

    #[test]
    fn depth_two_listing() {
        let es = retail_tiny();
        let fl = create_features(&es, &params(&["COUNT", "MEAN"], &["WEEKEND", "PERCENTILE"])).unwrap();
        assert_eq!(
            fl.names(),
            vec![
                "COUNT(orders)",
                "COUNT(orders_products)",
                "MEAN(orders.COUNT(orders_products))",
                "MEAN(orders.MEAN(orders_products.Discount))",
                "MEAN(orders.MEAN(orders_products.Price))",
                "MEAN(orders_products.Discount)",
                "MEAN(orders_products.Price)",
                "PERCENTILE(customers.age)",
            ]
        );
        for f in &fl.features {
            assert!(generation_cost(&es, f, "customers").unwrap() <= 2);
            f.output_type(&es, "customers").unwrap();
        }
    }

    #[test]
    fn ignore_variables_respected() {
        let es = retail_tiny();
        let mut p = params(&["MEAN"], &["PERCENTILE"]);
        p.ignore_variables
            .insert("customers".into(), vec!["age".into(), "zipcode".into()]);
        p.ignore_variables
            .insert("orders_products".into(), vec!["Discount".into()]);
        let names = create_features(&es, &p).unwrap().names();
        assert!(
            !names.iter().any(|n| n.contains("age") || n.contains("Discount")),
            "{names:?}"
        );
        p.ignore_variables.insert("orders".into(), vec!["nope".into()]);
        assert!(matches!(create_features(&es, &p), Err(Error::UnknownVariable { .. })));
    }

    #[test]
    fn unknown_primitive_rejected() {
        let es = retail_tiny();
        assert!(matches!(
            create_features(&es, &params(&["MEDIAN"], &[])),
            Err(Error::UnknownPrimitive(_))
        ));
        assert!(matches!(
            create_features(&es, &params(&["WEEKEND"], &[])),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn feature_list_round_trip() {
        let es = retail_tiny();
        let mut p = params(&["MEAN", "PERCENT", "COUNT"], &["WEEKEND"]);
        p.training_window = Some(Duration::parse("2 years").unwrap());
        let fl = create_features(&es, &p).unwrap();
        let text = serialize_feature_list(&fl);
        assert!(text.contains("\"aggregate_primitives\""));
        assert!(text.contains("\"2 years\""));
        assert_eq!(parse_feature_list(&text).unwrap(), fl);
        let bare = parse_feature_list(r#"["MEAN(orders_products.Price)"]"#).unwrap();
        assert_eq!(bare.names(), vec!["MEAN(orders_products.Price)"]);
        let empty = FeatureList::new(vec![]);
        assert!(serialize_feature_list(&empty).contains("\"features\": []"));
        assert!(parse_feature_list(&serialize_feature_list(&empty)).unwrap().is_empty());
        assert!(matches!(
            parse_feature_list(r#"["MEAN(orders_products."]"#),
            Err(Error::FeatureName { position: 21, .. })
        ));
    }
}
