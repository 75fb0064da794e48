use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::{Column, Entity, EntitySet, Variable};
use crate::error::{Error, Result};
use crate::metadata::{EntityMeta, MetadataDocument};

/// Header plus string records, as read from one delimited file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new<S: AsRef<str>>(header: &[S], records: &[Vec<S>]) -> Self {
        RawTable {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            records: records
                .iter()
                .map(|r| r.iter().map(|s| s.as_ref().to_string()).collect())
                .collect(),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(csv_err)?;
        let header = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut records = Vec::new();
        for rec in reader.records() {
            records.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
        }
        Ok(RawTable { header, records })
    }
}

/// One problem found while checking a batch of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    SchemaMismatch {
        message: String,
    },
    UnknownEntity {
        entity: String,
    },
    ColumnMismatch {
        entity: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    TypeViolation {
        entity: String,
        column: String,
        row: usize,
        value: String,
        expected: String,
    },
    MissingIndex {
        entity: String,
        column: String,
        row: usize,
    },
    MissingTime {
        entity: String,
        column: String,
        row: usize,
    },
    DuplicateIndex {
        entity: String,
        column: String,
        row: usize,
        value: String,
    },
    DanglingKey {
        entity: String,
        column: String,
        row: usize,
        value: String,
        parent: String,
    },
}

impl Violation {
    fn into_error(self) -> Error {
        match self {
            Violation::SchemaMismatch { message } => Error::schema("", message),
            Violation::UnknownEntity { entity } => Error::UnknownEntity(entity),
            Violation::ColumnMismatch {
                entity,
                expected,
                found,
            } => Error::schema(
                format!("/{entity}"),
                format!("columns {found:?} do not match declared variables {expected:?}"),
            ),
            Violation::TypeViolation {
                entity,
                column,
                row,
                value,
                expected,
            } => Error::BadValue {
                entity,
                column,
                row,
                value,
                expected,
            },
            Violation::MissingIndex { entity, column, row } => Error::MissingIndex { entity, column, row },
            Violation::MissingTime { entity, column, row } => Error::MissingTime { entity, column, row },
            Violation::DuplicateIndex {
                entity, column, row, ..
            } => Error::DuplicateIndex { entity, column, row },
            Violation::DanglingKey {
                entity,
                column,
                row,
                value,
                parent,
            } => Error::DanglingKey {
                entity,
                column,
                row,
                value,
                parent,
            },
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SchemaMismatch { message } => write!(f, "SchemaMismatch({message})"),
            Violation::UnknownEntity { entity } => write!(f, "UnknownEntity({entity})"),
            Violation::ColumnMismatch { entity, found, .. } => write!(f, "ColumnMismatch({entity}, {found:?})"),
            Violation::TypeViolation {
                entity,
                column,
                row,
                value,
                ..
            } => {
                write!(f, "TypeViolation({entity}, {column}, row {row}, {value:?})")
            }
            Violation::MissingIndex { entity, column, row } => write!(f, "MissingIndex({entity}, {column}, row {row})"),
            Violation::MissingTime { entity, column, row } => write!(f, "MissingTime({entity}, {column}, row {row})"),
            Violation::DuplicateIndex {
                entity, column, row, ..
            } => {
                write!(f, "DuplicateIndex({entity}, {column}, row {row})")
            }
            Violation::DanglingKey {
                entity,
                column,
                row,
                value,
                ..
            } => {
                write!(f, "DanglingKey({entity}, {column}, row {row}, {value:?})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Columns parsed from one entity's batch, aligned to the declared variables.
struct Parsed {
    columns: Vec<Column>,
}

fn parse_table(meta: &EntityMeta, table: &RawTable, out: &mut Vec<Violation>) -> Option<Parsed> {
    let expected: Vec<String> = meta.variables.iter().map(|v| v.name.clone()).collect();
    let mut sorted_found = table.header.clone();
    sorted_found.sort();
    let mut sorted_expected = expected.clone();
    sorted_expected.sort();
    if sorted_found != sorted_expected {
        out.push(Violation::ColumnMismatch {
            entity: meta.name.clone(),
            expected,
            found: table.header.clone(),
        });
        return None;
    }
    let source: Vec<usize> = meta
        .variables
        .iter()
        .map(|v| table.header.iter().position(|h| *h == v.name).expect("header checked"))
        .collect();
    let mut columns: Vec<Column> = meta
        .variables
        .iter()
        .map(|v| Column::for_type(v.semantic_type))
        .collect();
    for (i, record) in table.records.iter().enumerate() {
        let row = i + 1;
        for (j, var) in meta.variables.iter().enumerate() {
            let cell = record.get(source[j]).map(String::as_str).unwrap_or("");
            if cell.is_empty() {
                if var.name == meta.index {
                    out.push(Violation::MissingIndex {
                        entity: meta.name.clone(),
                        column: var.name.clone(),
                        row,
                    });
                } else if meta.time_index.as_deref() == Some(var.name.as_str()) {
                    out.push(Violation::MissingTime {
                        entity: meta.name.clone(),
                        column: var.name.clone(),
                        row,
                    });
                }
            }
            if let Err(expected) = columns[j].push_cell(cell) {
                out.push(Violation::TypeViolation {
                    entity: meta.name.clone(),
                    column: var.name.clone(),
                    row,
                    value: cell.to_string(),
                    expected: expected.to_string(),
                });
                columns[j].push_cell("").expect("null always fits");
            }
        }
    }
    Some(Parsed { columns })
}

/// Parses batches for every entity in `tables` and checks them against the
/// rows already present in `existing`.
fn check_batches(
    metadata: &MetadataDocument,
    existing: Option<&EntitySet>,
    tables: &BTreeMap<String, RawTable>,
) -> (Vec<Option<Parsed>>, Vec<Violation>) {
    let mut violations = Vec::new();
    for name in tables.keys() {
        if metadata.entity(name).is_none() {
            violations.push(Violation::UnknownEntity { entity: name.clone() });
        }
    }
    let mut parsed: Vec<Option<Parsed>> = Vec::with_capacity(metadata.entities.len());
    let mut batch_ids: Vec<HashSet<String>> = Vec::with_capacity(metadata.entities.len());
    for (ei, meta) in metadata.entities.iter().enumerate() {
        let mut ids = HashSet::new();
        let Some(table) = tables.get(&meta.name) else {
            parsed.push(None);
            batch_ids.push(ids);
            continue;
        };
        let p = parse_table(meta, table, &mut violations);
        if let Some(p) = &p {
            let index_pos = meta
                .variables
                .iter()
                .position(|v| v.name == meta.index)
                .expect("validated");
            let prior = existing.map(|es| es.entity_at(ei));
            for row in 0..p.columns[index_pos].len() {
                let Some(id) = p.columns[index_pos].text(row) else {
                    continue;
                };
                let clash = prior.is_some_and(|e| e.row_of(id).is_some());
                if clash || !ids.insert(id.to_string()) {
                    violations.push(Violation::DuplicateIndex {
                        entity: meta.name.clone(),
                        column: meta.index.clone(),
                        row: row + 1,
                        value: id.to_string(),
                    });
                }
            }
        }
        parsed.push(p);
        batch_ids.push(ids);
    }

    for rel in &metadata.relationships {
        let (Some(ci), Some(pi)) = (
            metadata.entities.iter().position(|e| e.name == rel.child_entity),
            metadata.entities.iter().position(|e| e.name == rel.parent_entity),
        ) else {
            continue;
        };
        let Some(p) = &parsed[ci] else { continue };
        let fk_pos = metadata.entities[ci]
            .variables
            .iter()
            .position(|v| v.name == rel.child_variable)
            .expect("validated");
        let prior = existing.map(|es| es.entity_at(pi));
        for row in 0..p.columns[fk_pos].len() {
            let Some(key) = p.columns[fk_pos].text(row) else {
                continue;
            };
            let known = batch_ids[pi].contains(key) || prior.is_some_and(|e| e.row_of(key).is_some());
            if !known {
                violations.push(Violation::DanglingKey {
                    entity: rel.child_entity.clone(),
                    column: rel.child_variable.clone(),
                    row: row + 1,
                    value: key.to_string(),
                    parent: rel.parent_entity.clone(),
                });
            }
        }
    }
    (parsed, violations)
}

/// Lists every reason a batch of new rows could not be appended to `es`.
pub fn check_consistency(es: &EntitySet, new_rows: &BTreeMap<String, RawTable>) -> ConsistencyReport {
    let (_, violations) = check_batches(es.metadata(), Some(es), new_rows);
    ConsistencyReport { violations }
}

/// Reads `<entity>.csv` for every entity declared in `metadata`.
pub fn load_entityset(data_dir: &Path, metadata: &MetadataDocument) -> Result<EntitySet> {
    metadata.validate()?;
    let mut tables = BTreeMap::new();
    for e in &metadata.entities {
        let path = data_dir.join(format!("{}.csv", e.name));
        if !path.is_file() {
            return Err(Error::MissingFile {
                entity: e.name.clone(),
                path,
            });
        }
        tables.insert(e.name.clone(), RawTable::read_csv(&path)?);
    }
    EntitySet::from_tables(metadata.clone(), &tables)
}

fn read_batch_dir(dir: &Path) -> Result<BTreeMap<String, RawTable>> {
    let mut tables = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        tables.insert(stem.to_string(), RawTable::read_csv(&path)?);
    }
    Ok(tables)
}

fn entity_from_parts(meta: &EntityMeta, columns: Vec<Column>, origin: Vec<usize>) -> Entity {
    Entity::build(
        meta.name.clone(),
        meta.variables
            .iter()
            .map(|v| Variable {
                name: v.name.clone(),
                semantic_type: v.semantic_type,
            })
            .collect(),
        columns,
        meta.index.clone(),
        meta.time_index.clone(),
        origin,
    )
}

impl EntitySet {
    /// Builds version 1 from in-memory tables, one per declared entity.
    pub fn from_tables(metadata: MetadataDocument, tables: &BTreeMap<String, RawTable>) -> Result<EntitySet> {
        metadata.validate()?;
        for e in &metadata.entities {
            if !tables.contains_key(&e.name) {
                return Err(Error::MissingFile {
                    entity: e.name.clone(),
                    path: format!("{}.csv", e.name).into(),
                });
            }
        }
        let (parsed, violations) = check_batches(&metadata, None, tables);
        if let Some(v) = violations.into_iter().next() {
            return Err(v.into_error());
        }
        let entities = metadata
            .entities
            .iter()
            .zip(parsed)
            .map(|(meta, p)| {
                let p = p.expect("every entity has a table");
                let n = p.columns.first().map_or(0, Column::len);
                entity_from_parts(meta, p.columns, (1..=n).collect())
            })
            .collect();
        EntitySet::assemble(metadata, entities, 1)
    }

    /// Appends a batch of rows; the result is the next version.
    pub fn append(&self, new_rows: &BTreeMap<String, RawTable>) -> Result<EntitySet> {
        let (parsed, violations) = check_batches(&self.metadata, Some(self), new_rows);
        if !violations.is_empty() {
            return Err(Error::Consistency(ConsistencyReport { violations }));
        }
        let entities = self
            .metadata
            .entities
            .iter()
            .zip(parsed)
            .zip(&self.entities)
            .map(|((meta, p), old)| match p {
                None => old.clone(),
                Some(p) => {
                    let n_new = p.columns.first().map_or(0, Column::len);
                    let mut columns = old.columns.clone();
                    for (c, new) in columns.iter_mut().zip(&p.columns) {
                        c.extend(new);
                    }
                    let mut origin = old.origin.clone();
                    origin.extend(1..=n_new);
                    entity_from_parts(meta, columns, origin)
                }
            })
            .collect();
        EntitySet::assemble(self.metadata.clone(), entities, self.version + 1)
    }

    /// Appends every `<entity>.csv` found in `new_data_path`.
    pub fn add_new_data(&self, new_data_path: &Path, metadata: &MetadataDocument) -> Result<EntitySet> {
        if !same_schema(metadata, &self.metadata) {
            return Err(Error::Consistency(ConsistencyReport {
                violations: vec![Violation::SchemaMismatch {
                    message: "metadata does not describe this entity set".into(),
                }],
            }));
        }
        let tables = read_batch_dir(new_data_path)?;
        self.append(&tables)
    }
}

/// index, time index, sorted (name, type) pairs
type EntityShape = (String, Option<String>, Vec<(String, String)>);

fn same_schema(a: &MetadataDocument, b: &MetadataDocument) -> bool {
    let shape = |m: &MetadataDocument| {
        let entities: HashMap<String, EntityShape> = m
            .entities
            .iter()
            .map(|e| {
                let mut vars: Vec<(String, String)> = e
                    .variables
                    .iter()
                    .map(|v| (v.name.clone(), v.semantic_type.to_string()))
                    .collect();
                vars.sort();
                (e.name.clone(), (e.index.clone(), e.time_index.clone(), vars))
            })
            .collect();
        let mut rels = m.relationships.clone();
        rels.sort_by(|x, y| (&x.parent_entity, &x.child_entity).cmp(&(&y.parent_entity, &y.child_entity)));
        (entities, rels)
    };
    shape(a) == shape(b)
}
