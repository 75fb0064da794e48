use std::collections::HashMap;

use super::{Column, Entity, EntitySet, Value, Variable};
use crate::error::{Error, Result};
use crate::metadata::{EntityMeta, RelationshipMeta, SemanticType, VariableMeta};

impl EntitySet {
    /// Splits `carried_variables` out of `source` into a new entity keyed by
    /// `key_variable`, linked back to `source` by a new relationship.
    pub fn normalize_entity(
        &self,
        source: &str,
        new_entity: &str,
        key_variable: &str,
        carried_variables: &[&str],
    ) -> Result<EntitySet> {
        let si = self
            .entity_index(source)
            .ok_or_else(|| Error::UnknownEntity(source.to_string()))?;
        if self.entity_index(new_entity).is_some() {
            return Err(Error::InvalidParams(format!("entity `{new_entity}` already exists")));
        }
        let src = &self.entities[si];
        let unknown = |v: &str| Error::UnknownVariable {
            entity: source.to_string(),
            variable: v.to_string(),
        };
        let key_pos = src.position(key_variable).ok_or_else(|| unknown(key_variable))?;
        let key_type = src.variables[key_pos].semantic_type;
        if matches!(key_type, SemanticType::Index | SemanticType::TimeIndex) {
            return Err(Error::InvalidParams(format!(
                "`{key_variable}` is the {key_type} of `{source}` and cannot key a new entity"
            )));
        }
        let mut carried_pos = Vec::with_capacity(carried_variables.len());
        for &v in carried_variables {
            let p = src.position(v).ok_or_else(|| unknown(v))?;
            if p == key_pos || src.variables[p].semantic_type.is_structural() {
                return Err(Error::InvalidParams(format!("`{v}` cannot be carried")));
            }
            carried_pos.push(p);
        }

        // distinct keys in order of first appearance
        let key_text = |row: usize| -> Option<String> {
            match src.columns[key_pos].get(row) {
                Value::Null => None,
                v => Some(v.to_string()),
            }
        };
        let mut first_row: HashMap<String, usize> = HashMap::new();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for row in 0..src.n_rows() {
            let Some(k) = key_text(row) else { continue };
            match first_row.get(&k) {
                None => {
                    first_row.insert(k.clone(), row);
                    keys.push((k, row));
                }
                Some(&r0) => {
                    if carried_pos
                        .iter()
                        .any(|&p| src.columns[p].get(row) != src.columns[p].get(r0))
                    {
                        return Err(Error::FunctionalDependency {
                            entity: source.to_string(),
                            key: k,
                        });
                    }
                }
            }
        }

        let rows: Vec<usize> = keys.iter().map(|(_, r)| *r).collect();
        let mut new_vars = vec![Variable {
            name: key_variable.to_string(),
            semantic_type: SemanticType::Index,
        }];
        let mut new_cols = vec![Column::Text(keys.iter().map(|(k, _)| Some(k.clone())).collect())];
        for &p in &carried_pos {
            new_vars.push(src.variables[p].clone());
            new_cols.push(src.columns[p].select(&rows));
        }
        let created = Entity::build(
            new_entity.to_string(),
            new_vars.clone(),
            new_cols,
            key_variable.to_string(),
            None,
            (1..=rows.len()).collect(),
        );

        let keep: Vec<usize> = (0..src.variables.len()).filter(|p| !carried_pos.contains(p)).collect();
        let mut src_vars: Vec<Variable> = keep.iter().map(|&p| src.variables[p].clone()).collect();
        let mut src_cols: Vec<Column> = keep.iter().map(|&p| src.columns[p].clone()).collect();
        let key_new_pos = keep.iter().position(|&p| p == key_pos).expect("key kept");
        src_vars[key_new_pos].semantic_type = SemanticType::Id;
        if !matches!(src_cols[key_new_pos], Column::Text(_)) {
            let col = &src_cols[key_new_pos];
            src_cols[key_new_pos] = Column::Text((0..col.len()).map(key_text).collect());
        }
        let rebuilt = Entity::build(
            src.name.clone(),
            src_vars.clone(),
            src_cols,
            src.index.clone(),
            src.time_index.clone(),
            src.origin.clone(),
        );

        let mut metadata = self.metadata.clone();
        {
            let m = &mut metadata.entities[si];
            m.variables = src_vars
                .iter()
                .map(|v| {
                    let extra = m.variable(&v.name).map(|x| x.extra.clone()).unwrap_or_default();
                    VariableMeta {
                        name: v.name.clone(),
                        semantic_type: v.semantic_type,
                        extra,
                    }
                })
                .collect();
        }
        metadata.entities.push(EntityMeta {
            name: new_entity.to_string(),
            index: key_variable.to_string(),
            time_index: None,
            variables: new_vars
                .iter()
                .map(|v| VariableMeta {
                    name: v.name.clone(),
                    semantic_type: v.semantic_type,
                    extra: Default::default(),
                })
                .collect(),
            extra: Default::default(),
        });
        metadata.relationships.push(RelationshipMeta {
            parent_entity: new_entity.to_string(),
            parent_variable: key_variable.to_string(),
            child_entity: source.to_string(),
            child_variable: key_variable.to_string(),
        });
        metadata.validate()?;

        let mut entities = self.entities.clone();
        entities[si] = rebuilt;
        entities.push(created);
        EntitySet::assemble(metadata, entities, self.version + 1)
    }
}
