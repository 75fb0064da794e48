//! The `metadata.json` document describing an entity set's structure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::json::{to_canonical_string, FloatStyle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Index,
    Id,
    TimeIndex,
    Numeric,
    Categorical,
    Boolean,
    Datetime,
    Text,
    Latitude,
    Longitude,
}

impl SemanticType {
    pub const ALL: [SemanticType; 10] = [
        SemanticType::Index,
        SemanticType::Id,
        SemanticType::TimeIndex,
        SemanticType::Numeric,
        SemanticType::Categorical,
        SemanticType::Boolean,
        SemanticType::Datetime,
        SemanticType::Text,
        SemanticType::Latitude,
        SemanticType::Longitude,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::Index => "index",
            SemanticType::Id => "id",
            SemanticType::TimeIndex => "time_index",
            SemanticType::Numeric => "numeric",
            SemanticType::Categorical => "categorical",
            SemanticType::Boolean => "boolean",
            SemanticType::Datetime => "datetime",
            SemanticType::Text => "text",
            SemanticType::Latitude => "latitude",
            SemanticType::Longitude => "longitude",
        }
    }

    pub fn parse(s: &str) -> Option<SemanticType> {
        SemanticType::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            SemanticType::Numeric | SemanticType::Latitude | SemanticType::Longitude
        )
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, SemanticType::Datetime | SemanticType::TimeIndex)
    }

    /// Keys and time indices are structural and never feed a feature directly.
    pub fn is_structural(self) -> bool {
        matches!(self, SemanticType::Index | SemanticType::Id | SemanticType::TimeIndex)
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub semantic_type: SemanticType,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMeta {
    pub name: String,
    pub index: String,
    #[serde(default)]
    pub time_index: Option<String>,
    pub variables: Vec<VariableMeta>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl EntityMeta {
    pub fn variable(&self, name: &str) -> Option<&VariableMeta> {
        self.variables.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationshipMeta {
    pub parent_entity: String,
    pub parent_variable: String,
    pub child_entity: String,
    pub child_variable: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataDocument {
    pub entityset_name: String,
    pub entities: Vec<EntityMeta>,
    pub relationships: Vec<RelationshipMeta>,
    /// Unrecognised top-level keys, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl MetadataDocument {
    pub fn entity(&self, name: &str) -> Option<&EntityMeta> {
        self.entities.iter().find(|e| e.name == name)
    }

    /// Structural validation; errors carry a JSON pointer to the offending field.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for (i, e) in self.entities.iter().enumerate() {
            let at = |field: &str| format!("/entities/{i}/{field}");
            if e.name.is_empty() {
                return Err(Error::schema(at("name"), "entity name must not be empty"));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::schema(at("name"), format!("duplicate entity `{}`", e.name)));
            }
            let mut vars = BTreeSet::new();
            for (j, v) in e.variables.iter().enumerate() {
                if !vars.insert(v.name.as_str()) {
                    return Err(Error::schema(
                        format!("/entities/{i}/variables/{j}/name"),
                        format!("duplicate variable `{}`", v.name),
                    ));
                }
            }
            let count = |t: SemanticType| e.variables.iter().filter(|v| v.semantic_type == t).count();
            match e.variable(&e.index) {
                Some(v) if v.semantic_type == SemanticType::Index => {}
                Some(_) => {
                    return Err(Error::schema(
                        at("index"),
                        "index variable must have semantic_type `index`",
                    ))
                }
                None => return Err(Error::schema(at("index"), format!("undeclared variable `{}`", e.index))),
            }
            if count(SemanticType::Index) != 1 {
                return Err(Error::schema(at("variables"), "exactly one variable must be the index"));
            }
            match &e.time_index {
                Some(t) => match e.variable(t) {
                    Some(v) if v.semantic_type == SemanticType::TimeIndex => {}
                    Some(_) => {
                        return Err(Error::schema(
                            at("time_index"),
                            "time index variable must have semantic_type `time_index`",
                        ))
                    }
                    None => return Err(Error::schema(at("time_index"), format!("undeclared variable `{t}`"))),
                },
                None if count(SemanticType::TimeIndex) > 0 => {
                    return Err(Error::schema(
                        at("time_index"),
                        "a time_index variable is declared but the entity names no time_index",
                    ))
                }
                None => {}
            }
            if count(SemanticType::TimeIndex) > 1 {
                return Err(Error::schema(at("variables"), "at most one time_index variable"));
            }
        }

        let mut seen = BTreeSet::new();
        for (i, r) in self.relationships.iter().enumerate() {
            let at = |field: &str| format!("/relationships/{i}/{field}");
            let parent = self.entity(&r.parent_entity).ok_or_else(|| {
                Error::schema(at("parent_entity"), format!("undeclared entity `{}`", r.parent_entity))
            })?;
            let child = self
                .entity(&r.child_entity)
                .ok_or_else(|| Error::schema(at("child_entity"), format!("undeclared entity `{}`", r.child_entity)))?;
            if r.parent_variable != parent.index {
                return Err(Error::schema(
                    at("parent_variable"),
                    format!("`{}` is not the index of `{}`", r.parent_variable, parent.name),
                ));
            }
            match child.variable(&r.child_variable) {
                Some(v) if v.semantic_type == SemanticType::Id => {}
                Some(_) => {
                    return Err(Error::schema(
                        at("child_variable"),
                        "foreign key must have semantic_type `id`",
                    ))
                }
                None => {
                    return Err(Error::schema(
                        at("child_variable"),
                        format!("undeclared variable `{}`", r.child_variable),
                    ))
                }
            }
            if !seen.insert((r.parent_entity.as_str(), r.child_entity.as_str())) {
                return Err(Error::schema(
                    at("child_entity"),
                    "at most one relationship per parent/child pair",
                ));
            }
        }

        if let Some(entity) = self.find_cycle() {
            return Err(Error::schema(
                "/relationships",
                format!("relationship cycle through `{entity}`"),
            ));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<String> {
        let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &self.relationships {
            parents.entry(&r.child_entity).or_default().push(&r.parent_entity);
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(
            n: &'a str,
            parents: &HashMap<&'a str, Vec<&'a str>>,
            state: &mut HashMap<&'a str, u8>,
        ) -> Option<String> {
            match state.get(n) {
                Some(1) => return Some(n.to_string()),
                Some(2) => return None,
                _ => {}
            }
            state.insert(n, 1);
            for p in parents.get(n).into_iter().flatten() {
                if let Some(c) = visit(p, parents, state) {
                    return Some(c);
                }
            }
            state.insert(n, 2);
            None
        }
        self.entities.iter().find_map(|e| visit(&e.name, &parents, &mut state))
    }
}

/// Parses and validates a metadata document.
pub fn parse_metadata(text: &str) -> Result<MetadataDocument> {
    let value: Value = serde_json::from_str(text)?;
    check_shape(&value)?;
    let doc: MetadataDocument = serde_json::from_value(value).map_err(|e| Error::schema("", e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

/// Canonical serialization: sorted keys, 2-space indent, LF, trailing newline.
pub fn emit_metadata(doc: &MetadataDocument) -> String {
    let value = serde_json::to_value(doc).expect("metadata serializes");
    to_canonical_string(&value, FloatStyle::Shortest)
}

fn expect_str<'a>(v: &'a Value, ptr: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::schema(ptr, "expected a string"))
}

fn field<'a>(obj: &'a Value, key: &str, ptr: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(format!("{ptr}/{key}"), "required field missing"))
}

fn check_shape(v: &Value) -> Result<()> {
    if !v.is_object() {
        return Err(Error::schema("", "expected an object"));
    }
    expect_str(field(v, "entityset_name", "")?, "/entityset_name")?;
    let entities = field(v, "entities", "")?
        .as_array()
        .ok_or_else(|| Error::schema("/entities", "expected an array"))?;
    for (i, e) in entities.iter().enumerate() {
        let p = format!("/entities/{i}");
        if !e.is_object() {
            return Err(Error::schema(p, "expected an object"));
        }
        expect_str(field(e, "name", &p)?, &format!("{p}/name"))?;
        expect_str(field(e, "index", &p)?, &format!("{p}/index"))?;
        match e.get("time_index") {
            None | Some(Value::Null) | Some(Value::String(_)) => {}
            Some(_) => return Err(Error::schema(format!("{p}/time_index"), "expected a string or null")),
        }
        let vars = field(e, "variables", &p)?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{p}/variables"), "expected an array"))?;
        for (j, var) in vars.iter().enumerate() {
            let vp = format!("{p}/variables/{j}");
            if !var.is_object() {
                return Err(Error::schema(vp, "expected an object"));
            }
            expect_str(field(var, "name", &vp)?, &format!("{vp}/name"))?;
            let t = expect_str(field(var, "semantic_type", &vp)?, &format!("{vp}/semantic_type"))?;
            if SemanticType::parse(t).is_none() {
                return Err(Error::schema(
                    format!("{vp}/semantic_type"),
                    format!("unknown semantic_type `{t}`"),
                ));
            }
        }
    }
    let rels = field(v, "relationships", "")?
        .as_array()
        .ok_or_else(|| Error::schema("/relationships", "expected an array"))?;
    for (i, r) in rels.iter().enumerate() {
        let p = format!("/relationships/{i}");
        if !r.is_object() {
            return Err(Error::schema(p, "expected an object"));
        }
        for key in ["parent_entity", "parent_variable", "child_entity", "child_variable"] {
            expect_str(field(r, key, &p)?, &format!("{p}/{key}"))?;
        }
    }
    Ok(())
}
