use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::primitive::{Primitive, PrimitiveKind};
use crate::entityset::EntitySet;
use crate::error::{Error, Result};
use crate::metadata::SemanticType;

/// What an aggregation consumes from each row of the aggregated entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggInput {
    /// The rows themselves (COUNT).
    Rows,
    Column(String),
    Feature(Box<FeatureDefinition>),
}

/// A feature as a tree of primitives over the relational structure.
///
/// Transforms act on a column of `entity`. Aggregations collect the rows of
/// `entity` reachable downward from the row the feature is evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureDefinition {
    Transform {
        primitive: Primitive,
        entity: String,
        column: String,
    },
    Aggregation {
        primitive: Primitive,
        entity: String,
        input: AggInput,
    },
}

impl FeatureDefinition {
    pub fn transform(primitive: Primitive, entity: &str, column: &str) -> Self {
        FeatureDefinition::Transform {
            primitive,
            entity: entity.to_string(),
            column: column.to_string(),
        }
    }

    pub fn aggregation(primitive: Primitive, entity: &str, column: &str) -> Self {
        FeatureDefinition::Aggregation {
            primitive,
            entity: entity.to_string(),
            input: AggInput::Column(column.to_string()),
        }
    }

    pub fn count(entity: &str) -> Self {
        FeatureDefinition::Aggregation {
            primitive: Primitive::Count,
            entity: entity.to_string(),
            input: AggInput::Rows,
        }
    }

    pub fn nested(primitive: Primitive, inner: FeatureDefinition) -> Self {
        let entity = match &inner {
            FeatureDefinition::Transform { entity, .. } => entity.clone(),
            FeatureDefinition::Aggregation { .. } => panic!("use nested_over for aggregation inputs"),
        };
        FeatureDefinition::Aggregation {
            primitive,
            entity,
            input: AggInput::Feature(Box::new(inner)),
        }
    }

    pub fn nested_over(primitive: Primitive, entity: &str, inner: FeatureDefinition) -> Self {
        FeatureDefinition::Aggregation {
            primitive,
            entity: entity.to_string(),
            input: AggInput::Feature(Box::new(inner)),
        }
    }

    pub fn primitive(&self) -> Primitive {
        match self {
            FeatureDefinition::Transform { primitive, .. } | FeatureDefinition::Aggregation { primitive, .. } => {
                *primitive
            }
        }
    }

    pub fn entity(&self) -> &str {
        match self {
            FeatureDefinition::Transform { entity, .. } | FeatureDefinition::Aggregation { entity, .. } => entity,
        }
    }

    /// Number of nested primitives.
    pub fn depth(&self) -> usize {
        match self {
            FeatureDefinition::Aggregation {
                input: AggInput::Feature(inner),
                ..
            } => 1 + inner.depth(),
            _ => 1,
        }
    }

    /// Canonical text form.
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Checks the definition against `es` when evaluated on rows of `base`
    /// and returns its output type.
    pub fn output_type(&self, es: &EntitySet, base: &str) -> Result<SemanticType> {
        let b = es
            .entity_index(base)
            .ok_or_else(|| Error::UnknownEntity(base.to_string()))?;
        let var_type = |entity: &str, column: &str| -> Result<SemanticType> {
            es.entity(entity)?
                .variable(column)
                .map(|v| v.semantic_type)
                .ok_or_else(|| Error::UnknownVariable {
                    entity: entity.to_string(),
                    variable: column.to_string(),
                })
        };
        let mismatch =
            |t: SemanticType| Error::InvalidParams(format!("{} cannot take {t} input in `{self}`", self.primitive()));
        match self {
            FeatureDefinition::Transform {
                primitive,
                entity,
                column,
            } => {
                if entity != base {
                    return Err(Error::InvalidParams(format!(
                        "transform `{self}` must be evaluated on `{entity}`, not `{base}`"
                    )));
                }
                let t = var_type(entity, column)?;
                if !primitive.accepts(t) {
                    return Err(mismatch(t));
                }
                Ok(primitive.output_type())
            }
            FeatureDefinition::Aggregation {
                primitive,
                entity,
                input,
            } => {
                let e = es
                    .entity_index(entity)
                    .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
                if es.unique_path(b, e).is_none() {
                    return Err(Error::InvalidParams(format!(
                        "`{entity}` is not reachable from `{base}` by a unique path"
                    )));
                }
                let t = match input {
                    AggInput::Rows => {
                        return if *primitive == Primitive::Count {
                            Ok(SemanticType::Numeric)
                        } else {
                            Err(Error::InvalidParams(format!("{primitive} needs an input column")))
                        };
                    }
                    AggInput::Column(c) => var_type(entity, c)?,
                    AggInput::Feature(inner) => inner.output_type(es, entity)?,
                };
                if !primitive.accepts(t) {
                    return Err(mismatch(t));
                }
                Ok(primitive.output_type())
            }
        }
    }

    /// `(entity, variable)` pairs read when evaluating on rows of `base`:
    /// input columns, time indices feeding TREND, and the keys joining the
    /// aggregation paths.
    pub fn fields_used(&self, es: &EntitySet, base: &str, out: &mut BTreeMap<String, BTreeSet<String>>) {
        let mut add = |e: &str, v: &str| {
            out.entry(e.to_string()).or_default().insert(v.to_string());
        };
        match self {
            FeatureDefinition::Transform { entity, column, .. } => add(entity, column),
            FeatureDefinition::Aggregation {
                primitive,
                entity,
                input,
            } => {
                if let (Some(b), Some(e)) = (es.entity_index(base), es.entity_index(entity)) {
                    for rel in es.unique_path(b, e).unwrap_or_default() {
                        let r = &es.relationships()[rel];
                        add(&r.parent_entity, &r.parent_variable);
                        add(&r.child_entity, &r.child_variable);
                    }
                    if *primitive == Primitive::Trend {
                        for time_entity in time_sources(es, b, e) {
                            let ent = es.entity_at(time_entity);
                            if let Some(ti) = ent.time_index() {
                                add(ent.name(), ti);
                            }
                        }
                    }
                }
                match input {
                    AggInput::Rows => {}
                    AggInput::Column(c) => add(entity, c),
                    AggInput::Feature(inner) => inner.fields_used(es, entity, out),
                }
            }
        }
    }
}

/// Entities along the path from `base` to `to` (inclusive of `to`) whose time
/// index can determine the effective time of `to`'s rows.
fn time_sources(es: &EntitySet, base: usize, to: usize) -> Vec<usize> {
    let mut out = vec![to];
    if let Some(path) = es.unique_path(base, to) {
        out.extend(path.iter().map(|&r| es.relationship_ends(r).0));
    }
    out
}

impl fmt::Display for FeatureDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureDefinition::Transform {
                primitive,
                entity,
                column,
            } => write!(f, "{primitive}({entity}.{column})"),
            FeatureDefinition::Aggregation {
                primitive,
                entity,
                input,
            } => match input {
                AggInput::Rows => write!(f, "{primitive}({entity})"),
                AggInput::Column(c) => write!(f, "{primitive}({entity}.{c})"),
                AggInput::Feature(inner) => match inner.as_ref() {
                    FeatureDefinition::Transform { .. } => write!(f, "{primitive}({inner})"),
                    FeatureDefinition::Aggregation { .. } => write!(f, "{primitive}({entity}.{inner})"),
                },
            },
        }
    }
}

impl std::str::FromStr for FeatureDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_feature_name(s)
    }
}

struct Parser<'a> {
    input: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn fail<T>(&self, position: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::FeatureName {
            input: self.input.to_string(),
            position,
            message: message.into(),
        })
    }

    /// True if a primitive token followed by `(` starts at the cursor.
    fn at_primitive(&self) -> bool {
        let mut i = self.pos;
        if !self.chars.get(i).is_some_and(|c| c.is_ascii_uppercase()) {
            return false;
        }
        while self.chars.get(i).is_some_and(|c| c.is_ascii_uppercase() || *c == '_') {
            i += 1;
        }
        self.chars.get(i) == Some(&'(')
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.chars.get(self.pos) {
            Some(&x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(&x) => self.fail(self.pos, format!("expected `{c}`, found `{x}`")),
            None => self.fail(self.pos, format!("expected `{c}`, found end of input")),
        }
    }

    /// Reads up to (not including) any of `stops`; parentheses are never allowed.
    fn word(&mut self, stops: &[char], what: &str) -> Result<String> {
        let start = self.pos;
        while let Some(&c) = self.chars.get(self.pos) {
            if stops.contains(&c) {
                break;
            }
            if c == '(' {
                return self.fail(self.pos, format!("unexpected `(` in {what}"));
            }
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail(start, format!("empty {what}"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn feature(&mut self) -> Result<FeatureDefinition> {
        let start = self.pos;
        let token = self.word(&['('], "primitive")?;
        let primitive = match Primitive::parse(&token) {
            Some(p) => p,
            None => return self.fail(start, format!("unknown primitive `{token}`")),
        };
        self.expect('(')?;
        let def = if self.at_primitive() {
            let inner_at = self.pos;
            let inner = self.feature()?;
            match (primitive.kind(), &inner) {
                (PrimitiveKind::Aggregation, FeatureDefinition::Transform { .. }) if primitive != Primitive::Count => {
                    FeatureDefinition::nested(primitive, inner)
                }
                _ => return self.fail(inner_at, format!("{primitive} cannot wrap `{inner}` directly")),
            }
        } else {
            let entity = self.word(&['.', ')'], "entity name")?;
            if self.chars.get(self.pos) == Some(&')') {
                if primitive != Primitive::Count {
                    return self.fail(self.pos, format!("{primitive} needs `entity.column`"));
                }
                FeatureDefinition::count(&entity)
            } else {
                self.expect('.')?;
                if primitive == Primitive::Count {
                    return self.fail(self.pos - 1, "COUNT takes an entity, not a column");
                }
                if self.at_primitive() {
                    let inner_at = self.pos;
                    let inner = self.feature()?;
                    if primitive.kind() != PrimitiveKind::Aggregation
                        || !matches!(inner, FeatureDefinition::Aggregation { .. })
                    {
                        return self.fail(
                            inner_at,
                            format!("{primitive} over `{entity}` needs an aggregation inside"),
                        );
                    }
                    FeatureDefinition::nested_over(primitive, &entity, inner)
                } else {
                    let column = self.word(&[')'], "column name")?;
                    match primitive.kind() {
                        PrimitiveKind::Transform => FeatureDefinition::transform(primitive, &entity, &column),
                        PrimitiveKind::Aggregation => FeatureDefinition::aggregation(primitive, &entity, &column),
                    }
                }
            }
        };
        self.expect(')')?;
        Ok(def)
    }
}

/// Parses a canonical feature name.
pub fn parse_feature_name(s: &str) -> Result<FeatureDefinition> {
    let mut p = Parser {
        input: s,
        chars: s.chars().collect(),
        pos: 0,
    };
    let def = p.feature()?;
    if p.pos != p.chars.len() {
        return p.fail(p.pos, "trailing characters");
    }
    Ok(def)
}
