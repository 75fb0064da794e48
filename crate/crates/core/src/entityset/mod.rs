//! In-memory relational store of time-indexed entities.
//!
//! An [`EntitySet`] is immutable: appending data or normalizing produces a
//! new version. Rows of a time-indexed entity are kept sorted by their time
//! index (stable with respect to arrival order), so a point-in-time query is
//! a binary search per entity.

mod column;
mod load;
mod normalize;
mod view;

use std::collections::{BTreeMap, HashMap};

pub use column::{Column, Value};
pub use load::{check_consistency, load_entityset, ConsistencyReport, RawTable, Violation};
pub use view::{EntitySetView, Snapshot};

use crate::error::{Error, Result};
use crate::metadata::{MetadataDocument, RelationshipMeta, SemanticType};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub semantic_type: SemanticType,
}

#[derive(Debug, Clone)]
pub struct Entity {
    name: String,
    variables: Vec<Variable>,
    columns: Vec<Column>,
    index: String,
    time_index: Option<String>,
    index_pos: usize,
    time_pos: Option<usize>,
    /// 1-based position of each row within the batch it arrived in.
    origin: Vec<usize>,
    lookup: HashMap<String, usize>,
}

impl Entity {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn index(&self) -> &str {
        &self.index
    }

    pub fn time_index(&self) -> Option<&str> {
        self.time_index.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.columns[self.index_pos].len()
    }

    pub fn position(&self, variable: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == variable)
    }

    pub fn column(&self, variable: &str) -> Option<&Column> {
        self.position(variable).map(|p| &self.columns[p])
    }

    pub fn column_at(&self, pos: usize) -> &Column {
        &self.columns[pos]
    }

    pub fn value(&self, row: usize, variable: &str) -> Option<Value> {
        self.column(variable).map(|c| c.get(row))
    }

    pub fn id(&self, row: usize) -> &str {
        self.columns[self.index_pos]
            .text(row)
            .expect("index values are never null")
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.n_rows()).map(|r| self.id(r))
    }

    pub fn time(&self, row: usize) -> Option<Timestamp> {
        self.time_pos.and_then(|p| self.columns[p].time(row))
    }

    pub fn origin(&self, row: usize) -> usize {
        self.origin[row]
    }

    /// Number of leading rows whose time index is strictly before `cutoff`.
    pub fn rows_before(&self, cutoff: Timestamp) -> usize {
        match self.time_pos {
            None => self.n_rows(),
            Some(p) => {
                let col = &self.columns[p];
                partition_point(self.n_rows(), |r| col.time(r).is_some_and(|t| t < cutoff))
            }
        }
    }

    fn build(
        name: String,
        variables: Vec<Variable>,
        columns: Vec<Column>,
        index: String,
        time_index: Option<String>,
        origin: Vec<usize>,
    ) -> Self {
        let index_pos = variables.iter().position(|v| v.name == index).expect("index declared");
        let time_pos = time_index.as_ref().map(|t| {
            variables
                .iter()
                .position(|v| &v.name == t)
                .expect("time index declared")
        });
        let mut entity = Entity {
            name,
            variables,
            columns,
            index,
            time_index,
            index_pos,
            time_pos,
            origin,
            lookup: HashMap::new(),
        };
        entity.sort_by_time();
        entity.lookup = (0..entity.n_rows()).map(|r| (entity.id(r).to_string(), r)).collect();
        entity
    }

    fn sort_by_time(&mut self) {
        let Some(p) = self.time_pos else { return };
        let col = &self.columns[p];
        let mut order: Vec<usize> = (0..col.len()).collect();
        order.sort_by_key(|&r| col.time(r));
        if order.iter().enumerate().all(|(i, &r)| i == r) {
            return;
        }
        self.columns = self.columns.iter().map(|c| c.select(&order)).collect();
        self.origin = order.iter().map(|&r| self.origin[r]).collect();
    }

    fn select_rows(&self, rows: &[usize]) -> Entity {
        Entity::build(
            self.name.clone(),
            self.variables.clone(),
            self.columns.iter().map(|c| c.select(rows)).collect(),
            self.index.clone(),
            self.time_index.clone(),
            rows.iter().map(|&r| self.origin[r]).collect(),
        )
    }
}

fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relationship {
    pub parent_entity: String,
    pub parent_variable: String,
    pub child_entity: String,
    pub child_variable: String,
}

impl From<&RelationshipMeta> for Relationship {
    fn from(r: &RelationshipMeta) -> Self {
        Relationship {
            parent_entity: r.parent_entity.clone(),
            parent_variable: r.parent_variable.clone(),
            child_entity: r.child_entity.clone(),
            child_variable: r.child_variable.clone(),
        }
    }
}

/// Row-level join structure of one relationship.
#[derive(Debug, Clone)]
struct Link {
    parent: usize,
    child: usize,
    /// For each parent row, the child rows referencing it (ascending).
    children: Vec<Vec<usize>>,
    /// For each child row, the referenced parent row.
    parent_row: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct EntitySet {
    name: String,
    metadata: MetadataDocument,
    entities: Vec<Entity>,
    relationships: Vec<Relationship>,
    version: u64,
    links: Vec<Link>,
    /// Entity indices ordered parents-first.
    topo: Vec<usize>,
    /// Own time index, else the latest effective time among referenced parents.
    effective_time: Vec<Vec<Option<Timestamp>>>,
}

impl EntitySet {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metadata(&self) -> &MetadataDocument {
        &self.metadata
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.name == name)
    }

    pub fn entity(&self, name: &str) -> Result<&Entity> {
        self.entity_index(name)
            .map(|i| &self.entities[i])
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))
    }

    pub fn entity_at(&self, idx: usize) -> &Entity {
        &self.entities[idx]
    }

    pub(crate) fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn effective_time(&self, entity: usize, row: usize) -> Option<Timestamp> {
        self.effective_time[entity][row]
    }

    /// Relationship indices in which `entity` is the parent.
    pub fn child_relationships(&self, entity: usize) -> Vec<usize> {
        (0..self.links.len())
            .filter(|&r| self.links[r].parent == entity)
            .collect()
    }

    /// Relationship indices in which `entity` is the child.
    pub fn parent_relationships(&self, entity: usize) -> Vec<usize> {
        (0..self.links.len())
            .filter(|&r| self.links[r].child == entity)
            .collect()
    }

    pub fn relationship_ends(&self, rel: usize) -> (usize, usize) {
        (self.links[rel].parent, self.links[rel].child)
    }

    pub fn children_of(&self, rel: usize, parent_row: usize) -> &[usize] {
        &self.links[rel].children[parent_row]
    }

    pub fn parent_of(&self, rel: usize, child_row: usize) -> Option<usize> {
        self.links[rel].parent_row[child_row]
    }

    /// All downward relationship paths from `from`, shortest first.
    /// Each path is a sequence of relationship indices.
    pub fn descendant_paths(&self, from: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut frontier: Vec<Vec<usize>> = self.child_relationships(from).into_iter().map(|r| vec![r]).collect();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for path in frontier {
                let end = self.links[*path.last().expect("non-empty")].child;
                for r in self.child_relationships(end) {
                    let mut p = path.clone();
                    p.push(r);
                    next.push(p);
                }
                out.push(path);
            }
            frontier = next;
        }
        out
    }

    /// The unique downward path from `from` to `to`, if exactly one exists.
    pub fn unique_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut found = self
            .descendant_paths(from)
            .into_iter()
            .filter(|p| self.links[*p.last().expect("non-empty")].child == to);
        let first = found.next()?;
        match found.next() {
            Some(_) => None,
            None => Some(first),
        }
    }

    /// Rows of the entity at the end of `path` reachable from `row`.
    pub fn descend(&self, path: &[usize], row: usize, keep: impl Fn(usize, usize) -> bool) -> Vec<usize> {
        let mut rows = vec![row];
        for &rel in path {
            let child = self.links[rel].child;
            let mut next = Vec::new();
            for &r in &rows {
                next.extend(self.links[rel].children[r].iter().copied().filter(|&c| keep(child, c)));
            }
            rows = next;
        }
        rows.sort_unstable();
        rows
    }

    /// Latest time index across all entities.
    pub fn latest_time(&self) -> Option<Timestamp> {
        self.entities
            .iter()
            .filter_map(|e| e.n_rows().checked_sub(1).and_then(|last| e.time(last)))
            .max()
    }

    pub(crate) fn assemble(metadata: MetadataDocument, entities: Vec<Entity>, version: u64) -> Result<Self> {
        let relationships: Vec<Relationship> = metadata.relationships.iter().map(Relationship::from).collect();
        let pos = |n: &str| entities.iter().position(|e| e.name == n);
        let mut links = Vec::with_capacity(relationships.len());
        for rel in &relationships {
            let parent = pos(&rel.parent_entity).ok_or_else(|| Error::UnknownEntity(rel.parent_entity.clone()))?;
            let child = pos(&rel.child_entity).ok_or_else(|| Error::UnknownEntity(rel.child_entity.clone()))?;
            let (pe, ce) = (&entities[parent], &entities[child]);
            let fk = ce.column(&rel.child_variable).ok_or_else(|| Error::UnknownVariable {
                entity: ce.name.clone(),
                variable: rel.child_variable.clone(),
            })?;
            let mut children = vec![Vec::new(); pe.n_rows()];
            let mut parent_row = vec![None; ce.n_rows()];
            for (r, slot) in parent_row.iter_mut().enumerate() {
                if let Some(key) = fk.text(r) {
                    let p = pe.row_of(key).ok_or_else(|| Error::DanglingKey {
                        entity: ce.name.clone(),
                        column: rel.child_variable.clone(),
                        row: ce.origin[r],
                        value: key.to_string(),
                        parent: pe.name.clone(),
                    })?;
                    children[p].push(r);
                    *slot = Some(p);
                }
            }
            links.push(Link {
                parent,
                child,
                children,
                parent_row,
            });
        }

        let topo = topological(entities.len(), &links);
        let mut effective_time: Vec<Vec<Option<Timestamp>>> = entities.iter().map(|e| vec![None; e.n_rows()]).collect();
        for &e in &topo {
            let parents: Vec<usize> = (0..links.len()).filter(|&r| links[r].child == e).collect();
            for row in 0..entities[e].n_rows() {
                let t = match entities[e].time(row) {
                    Some(t) => Some(t),
                    None => parents
                        .iter()
                        .filter_map(|&rel| {
                            links[rel].parent_row[row].and_then(|p| effective_time[links[rel].parent][p])
                        })
                        .max(),
                };
                effective_time[e][row] = t;
            }
        }

        Ok(EntitySet {
            name: metadata.entityset_name.clone(),
            metadata,
            entities,
            relationships,
            version,
            links,
            topo,
            effective_time,
        })
    }

    /// Keeps the flagged rows, cascading removal to rows whose parent was removed.
    pub fn retain_rows(&self, keep: &[Vec<bool>]) -> EntitySet {
        let mut kept: Vec<Vec<bool>> = keep.to_vec();
        for &e in &self.topo {
            for rel in self.parent_relationships(e) {
                let p = self.links[rel].parent;
                for row in 0..kept[e].len() {
                    if let Some(pr) = self.links[rel].parent_row[row] {
                        if !kept[p][pr] {
                            kept[e][row] = false;
                        }
                    }
                }
            }
        }
        let entities = self
            .entities
            .iter()
            .zip(&kept)
            .map(|(e, k)| {
                let rows: Vec<usize> = (0..e.n_rows()).filter(|&r| k[r]).collect();
                e.select_rows(&rows)
            })
            .collect();
        EntitySet::assemble(self.metadata.clone(), entities, self.version).expect("cascade keeps references intact")
    }

    /// Physically removes every row that does not exist strictly before `cutoff`.
    pub fn truncate_at(&self, cutoff: Timestamp) -> EntitySet {
        let snap = self.snapshot(Some(cutoff), None);
        self.retain_rows(snap.exists_masks())
    }

    /// Removes the given rows of one entity (and their dependents).
    pub fn without_rows(&self, entity: &str, rows: &[usize]) -> Result<EntitySet> {
        let idx = self
            .entity_index(entity)
            .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
        let mut keep: Vec<Vec<bool>> = self.entities.iter().map(|e| vec![true; e.n_rows()]).collect();
        for &r in rows {
            keep[idx][r] = false;
        }
        Ok(self.retain_rows(&keep))
    }

    /// Replaces one cell of a non-structural variable.
    pub fn with_value(&self, entity: &str, row: usize, variable: &str, value: Value) -> Result<EntitySet> {
        let idx = self
            .entity_index(entity)
            .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
        let e = &self.entities[idx];
        let pos = e.position(variable).ok_or_else(|| Error::UnknownVariable {
            entity: entity.to_string(),
            variable: variable.to_string(),
        })?;
        if e.variables[pos].semantic_type.is_structural() {
            return Err(Error::InvalidParams(format!("`{entity}.{variable}` is structural")));
        }
        let mut es = self.clone();
        es.entities[idx].columns[pos].set(row, value)?;
        Ok(es)
    }

    /// A copy of this entity set without one variable, as if the source stopped
    /// recording it.
    pub fn drop_variable(&self, entity: &str, variable: &str) -> Result<EntitySet> {
        let idx = self
            .entity_index(entity)
            .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
        let e = &self.entities[idx];
        let pos = e.position(variable).ok_or_else(|| Error::UnknownVariable {
            entity: entity.to_string(),
            variable: variable.to_string(),
        })?;
        if e.variables[pos].semantic_type.is_structural() {
            return Err(Error::InvalidParams(format!("`{entity}.{variable}` is structural")));
        }
        let mut metadata = self.metadata.clone();
        metadata.entities[idx].variables.retain(|v| v.name != variable);
        let mut variables = e.variables.clone();
        let mut columns = e.columns.clone();
        variables.remove(pos);
        columns.remove(pos);
        let mut entities = self.entities.clone();
        entities[idx] = Entity::build(
            e.name.clone(),
            variables,
            columns,
            e.index.clone(),
            e.time_index.clone(),
            e.origin.clone(),
        );
        EntitySet::assemble(metadata, entities, self.version)
    }

    /// Total number of rows across entities.
    pub fn total_rows(&self) -> usize {
        self.entities.iter().map(Entity::n_rows).sum()
    }

    /// Per-entity row counts keyed by entity name.
    pub fn row_counts(&self) -> BTreeMap<String, usize> {
        self.entities.iter().map(|e| (e.name.clone(), e.n_rows())).collect()
    }
}

fn topological(n: usize, links: &[Link]) -> Vec<usize> {
    let mut indegree = vec![0usize; n];
    for l in links {
        indegree[l.child] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&e| indegree[e] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(e) = ready.first().copied() {
        ready.remove(0);
        order.push(e);
        for l in links.iter().filter(|l| l.parent == e) {
            indegree[l.child] -= 1;
            if indegree[l.child] == 0 {
                ready.push(l.child);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "metadata validation rejects cycles");
    order
}

#[cfg(test)]
pub(crate) mod fixtures;
